/*
 * Copyright (c) 2026, The hiattn Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "hiattn/block.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>

#include "hiattn/tensor_io.hpp"

namespace hiattn {
namespace {

using Clock = std::chrono::steady_clock;

// Keeps alpha strictly inside (0, 1) even when the sigmoid saturates in
// double precision.
constexpr double kAlphaEps = 1e-15;

/// Runs the shared sub-block on every batch slab of `x` in place.
void sublayer_in_place(VideoLatent& x, const AttentionWeights& w, const ExecContext& ctx) {
  const Dims& d = x.dims();
  for (std::int64_t b = 0; b < d.batch; ++b) {
    Eigen::Map<Mat<float>> slab(&x.at(b, 0, 0, 0, 0), d.tokens(), d.channels);
    const Mat<float> tokens = slab;
    slab = transformer_sublayer(tokens, w, &ctx);
  }
}

struct ScopedTimer {
  BranchTimes* times;
  Branch branch;
  Clock::time_point start = Clock::now();
  ~ScopedTimer() {
    if (times) {
      times->seconds[static_cast<std::size_t>(branch)] +=
          std::chrono::duration<double>(Clock::now() - start).count();
    }
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// BlockConfig

BlockConfig BlockConfig::standard(int K, std::int64_t channels, int layer_index) {
  BlockConfig c;
  c.K = K;
  c.global_factor = K;
  c.hier_factor = 2;
  c.channels = channels;
  c.ffn_dim = 2 * channels;
  c.rank = static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(4, channels / 4)));
  c.layer_index = layer_index;
  return c;
}

BlockConfig BlockConfig::single_window(std::int64_t channels) {
  BlockConfig c = standard(2, channels, 0);
  c.K = 1;
  c.global_factor = 1;
  c.hier_factor = 1;
  c.local_parts_override = 1;
  c.hier_parts_override = 1;
  return c;
}

int BlockConfig::local_parts() const {
  return local_parts_override > 0 ? local_parts_override : K + parity();
}

int BlockConfig::hier_parts() const {
  return hier_parts_override > 0 ? hier_parts_override : K / 2 + parity();
}

void BlockConfig::validate() const {
  if (channels < 1) throw_invalid("block channels D must be >= 1");
  if (ffn_dim < 1) throw_invalid("block FFN width must be >= 1");
  if (heads < 1 || channels % heads != 0) {
    throw_invalid("heads=" + std::to_string(heads) + " must divide D=" +
                  std::to_string(channels));
  }
  if (gate_hidden < 1) throw_invalid("gate hidden width must be >= 1");
  if (layer_index < 0) throw_invalid("layer_index must be >= 0");
  if (rank < 1 || 4 * static_cast<std::int64_t>(rank) > std::min(channels, ffn_dim)) {
    throw_invalid("LoRA rank r=" + std::to_string(rank) + " violates 1 <= r <= d/4 with d=" +
                  std::to_string(std::min(channels, ffn_dim)));
  }
  if (local_parts_override < 0 || hier_parts_override < 0) {
    throw_invalid("partition overrides must be >= 0");
  }
  if (custom()) {
    if (K < 1 || global_factor < 1 || hier_factor < 1) {
      throw_invalid("custom block needs K, k and the hierarchical factor >= 1");
    }
    if (hier_parts() < 1) throw_invalid("custom block needs >= 1 hierarchical window");
    return;
  }
  if (K < 2 || K % 2 != 0) {
    throw_invalid("K must be even and >= 2, got K=" + std::to_string(K));
  }
  if (global_factor != K) {
    throw_invalid("global compression k must equal K (k=" + std::to_string(global_factor) +
                  ", K=" + std::to_string(K) + ")");
  }
  if (hier_factor != 2) {
    throw_invalid("hierarchical compression factor must be 2, got " +
                  std::to_string(hier_factor));
  }
}

void BlockConfig::validate_input(const Dims& dims) const {
  dims.validate();
  if (dims.channels != channels) {
    throw_invalid("latent has D=" + std::to_string(dims.channels) + ", block expects D=" +
                  std::to_string(channels));
  }
  if (!custom()) {
    const std::int64_t m = 2 * static_cast<std::int64_t>(K);
    if (dims.height % m != 0 || dims.width % m != 0) {
      throw_invalid("H and W must be divisible by 2K=" + std::to_string(m) + ", got " +
                    std::to_string(dims.height) + "x" + std::to_string(dims.width));
    }
    return;
  }
  if (dims.height % global_factor != 0 || dims.width % global_factor != 0) {
    throw_invalid("H and W must be divisible by k=" + std::to_string(global_factor));
  }
  const std::int64_t lim = std::min(dims.height, dims.width);
  if (local_parts() > lim || hier_parts() > lim) {
    throw_invalid("partition count exceeds min(H, W)=" + std::to_string(lim));
  }
}

// ---------------------------------------------------------------------------
// Fusion

FusionGate FusionGate::create(std::int64_t channels, int hidden, Rng& rng, float final_scale) {
  FusionGate g;
  const int in = g.encode_dim;
  g.mlp.w1.resize(in, hidden);
  const float s1 = 1.0f / std::sqrt(static_cast<float>(in));
  for (Eigen::Index i = 0; i < g.mlp.w1.size(); ++i) g.mlp.w1.data()[i] = rng.symmetric(s1);
  g.mlp.b1 = RowVec<float>::Zero(hidden);
  g.mlp.w2.resize(hidden, channels);
  for (Eigen::Index i = 0; i < g.mlp.w2.size(); ++i) {
    g.mlp.w2.data()[i] = final_scale == 0.0f ? 0.0f : rng.symmetric(final_scale);
  }
  g.mlp.b2 = RowVec<float>::Zero(channels);
  return g;
}

std::vector<double> FusionGate::alpha(double t) const {
  if (!std::isfinite(t)) throw_invalid("timestep must be finite");
  MLP2<double> m{mlp.w1.cast<double>(), mlp.b1.cast<double>(), mlp.w2.cast<double>(),
                 mlp.b2.cast<double>()};
  const std::vector<double> enc = sin_encode(t, encode_dim);
  std::vector<double> logits = mlp_forward<double>(enc, m);
  for (double& v : logits) {
    v = std::clamp(1.0 / (1.0 + std::exp(-v)), kAlphaEps, 1.0 - kAlphaEps);
  }
  return logits;
}

VideoLatent fuse(const VideoLatent& a, const VideoLatent& b, std::span<const double> alpha) {
  if (!(a.dims() == b.dims())) {
    throw_invalid("fuse operands differ: " + to_string(a.dims()) + " vs " +
                  to_string(b.dims()));
  }
  const std::int64_t C = a.dims().channels;
  if (static_cast<std::int64_t>(alpha.size()) != C) {
    throw_invalid("fuse alpha has " + std::to_string(alpha.size()) + " channels, latent " +
                  std::to_string(C));
  }
  VideoLatent out(a.dims());
  const float* pa = a.raw();
  const float* pb = b.raw();
  float* po = out.raw();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(C)) {
    for (std::int64_t c = 0; c < C; ++c) {
      const double al = alpha[static_cast<std::size_t>(c)];
      po[i + c] = static_cast<float>(al * pa[i + c] + (1.0 - al) * pb[i + c]);
    }
  }
  return out;
}

VideoLatent fuse(const VideoLatent& a, const VideoLatent& b, double t, const FusionGate& gate) {
  const auto al = gate.alpha(t);
  return fuse(a, b, al);
}

// ---------------------------------------------------------------------------
// Params

BlockParams BlockParams::init(const BlockConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  BlockParams p;
  p.base = AttentionWeights::random(cfg.channels, cfg.ffn_dim, cfg.heads, rng);
  p.global_lora = LoRAAdapter::create(cfg.channels, cfg.ffn_dim, cfg.rank, rng);
  p.hier_lora = LoRAAdapter::create(cfg.channels, cfg.ffn_dim, cfg.rank, rng);
  p.global_compress = DepthwiseKernel2D<float>::averaging(cfg.channels, cfg.global_factor);
  p.hier_compress = DepthwiseKernel2D<float>::averaging(cfg.channels, cfg.hier_factor);
  p.global_decompress = Kernel3D<float>::identity(cfg.channels);
  p.hier_decompress = Kernel3D<float>::identity(cfg.channels);
  const float gate_scale = 1.0f / std::sqrt(static_cast<float>(cfg.gate_hidden));
  p.global_gate = FusionGate::create(cfg.channels, cfg.gate_hidden, rng, gate_scale);
  p.local_gate = FusionGate::create(cfg.channels, cfg.gate_hidden, rng, gate_scale);
  return p;
}

void BlockParams::validate(const BlockConfig& cfg) const {
  base.validate();
  if (base.dim() != cfg.channels || base.ffn_dim() != cfg.ffn_dim || base.heads != cfg.heads) {
    throw_invalid("base weights do not match the block config");
  }
  global_lora.validate(cfg.channels, cfg.ffn_dim);
  hier_lora.validate(cfg.channels, cfg.ffn_dim);
  if (global_compress.k != cfg.global_factor || hier_compress.k != cfg.hier_factor) {
    throw_invalid("compression kernel sizes do not match the block config");
  }
  global_decompress.validate();
  hier_decompress.validate();
  for (const FusionGate* g : {&global_gate, &local_gate}) {
    g->mlp.validate();
    if (g->mlp.in_dim() != g->encode_dim || g->mlp.out_dim() != cfg.channels) {
      throw_invalid("fusion gate must map " + std::to_string(g->encode_dim) + " -> D");
    }
  }
}

// ---------------------------------------------------------------------------
// Branches

VideoLatent local_branch(const VideoLatent& z, const BlockConfig& cfg, const BlockParams& p,
                         const ExecContext& ctx) {
  cfg.validate();
  cfg.validate_input(z.dims());
  const ExecContext bctx = ctx.with_branch(Branch::kLocal);
  const PartitionSpec spec = make_partition(z.dims().height, z.dims().width, cfg.local_parts());
  std::vector<VideoLatent> windows = partition(z, spec);
  parallel_for(windows.size(), ctx.threads,
               [&](std::size_t i) { sublayer_in_place(windows[i], p.base, bctx); });
  return aggregate<float>(windows, spec);
}

VideoLatent hierarchical_branch(const VideoLatent& z, const BlockConfig& cfg,
                                const BlockParams& p, const ExecContext& ctx) {
  cfg.validate();
  cfg.validate_input(z.dims());
  const ExecContext bctx = ctx.with_branch(Branch::kHierarchical);
  const PartitionSpec spec = make_partition(z.dims().height, z.dims().width, cfg.hier_parts());
  const AttentionWeights w = apply_lora(p.base, p.hier_lora);
  std::vector<VideoLatent> windows = partition(z, spec);
  parallel_for(windows.size(), ctx.threads, [&](std::size_t i) {
    VideoLatent& win = windows[i];
    VideoLatent c = depthwise_compress(win, p.hier_compress, EdgeMode::kReplicate);
    sublayer_in_place(c, w, bctx);
    c = bilinear_resample(c, win.dims().height, win.dims().width);
    win = conv3d(c, p.hier_decompress, &bctx);
  });
  return aggregate<float>(windows, spec);
}

VideoLatent global_branch(const VideoLatent& z, const BlockConfig& cfg, const BlockParams& p,
                          const ExecContext& ctx) {
  cfg.validate();
  cfg.validate_input(z.dims());
  const ExecContext bctx = ctx.with_branch(Branch::kGlobal);
  const AttentionWeights w = apply_lora(p.base, p.global_lora);
  VideoLatent c = depthwise_compress(z, p.global_compress, EdgeMode::kStrict);
  sublayer_in_place(c, w, bctx);
  c = bilinear_resample(c, z.dims().height, z.dims().width);
  return conv3d(c, p.global_decompress, &bctx);
}

VideoLatent block_forward(const VideoLatent& z, double t, const BlockConfig& cfg,
                          const BlockParams& p, const ExecContext& ctx) {
  cfg.validate();
  cfg.validate_input(z.dims());
  p.validate(cfg);
  VideoLatent x = z;
  if (cfg.positional_encoding) add_positional_encoding(x);

  VideoLatent z_cro, z_hla, z_g;
  {
    ScopedTimer timer{ctx.times, Branch::kLocal};
    z_cro = local_branch(x, cfg, p, ctx);
  }
  {
    ScopedTimer timer{ctx.times, Branch::kHierarchical};
    z_hla = hierarchical_branch(x, cfg, p, ctx);
  }
  {
    ScopedTimer timer{ctx.times, Branch::kGlobal};
    z_g = global_branch(x, cfg, p, ctx);
  }
  ScopedTimer timer{ctx.times, Branch::kOther};
  const VideoLatent z_l = fuse(z_hla, z_cro, t, p.local_gate);
  return fuse(z_g, z_l, t, p.global_gate);
}

VideoLatent model_forward(const VideoLatent& z, double t, std::span<const BlockConfig> cfgs,
                          std::span<const BlockParams> params, const ExecContext& ctx,
                          std::vector<LayerTrace>* trace) {
  if (cfgs.empty() || cfgs.size() != params.size()) {
    throw_invalid("model needs one config and one parameter set per layer (got " +
                  std::to_string(cfgs.size()) + " configs, " + std::to_string(params.size()) +
                  " parameter sets)");
  }
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    if (cfgs[i].layer_index != static_cast<int>(i)) {
      throw_invalid("layer " + std::to_string(i) + " has layer_index " +
                    std::to_string(cfgs[i].layer_index));
    }
  }
  VideoLatent x = z;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    if (trace) {
      trace->push_back({make_partition(x.dims().height, x.dims().width, cfgs[i].local_parts()),
                        make_partition(x.dims().height, x.dims().width, cfgs[i].hier_parts())});
    }
    x = block_forward(x, t, cfgs[i], params[i], ctx);
  }
  return x;
}

std::vector<BlockConfig> layer_configs(const BlockConfig& base, int layers) {
  if (layers < 1) throw_invalid("layers must be >= 1");
  std::vector<BlockConfig> out(static_cast<std::size_t>(layers), base);
  for (int i = 0; i < layers; ++i) out[static_cast<std::size_t>(i)].layer_index = i;
  return out;
}

void add_positional_encoding(VideoLatent& z) {
  const Dims& d = z.dims();
  const double D = static_cast<double>(d.channels);
  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t t = 0; t < d.frames; ++t)
      for (std::int64_t h = 0; h < d.height; ++h)
        for (std::int64_t w = 0; w < d.width; ++w) {
          float* px = &z.at(b, t, h, w, 0);
          const double pos[3] = {static_cast<double>(t), static_cast<double>(h),
                                 static_cast<double>(w)};
          for (std::int64_t c = 0; c < d.channels; ++c) {
            const std::int64_t j = c / 3;
            const double freq = std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / D);
            const double arg = pos[c % 3] * freq;
            px[c] += static_cast<float>(j % 2 == 0 ? std::sin(arg) : std::cos(arg));
          }
        }
}

// ---------------------------------------------------------------------------
// Parameter files

namespace {

using TensorVisitor =
    std::function<void(const std::string& name, std::vector<std::uint32_t> shape, float* data)>;

std::uint32_t u32(std::int64_t v) { return static_cast<std::uint32_t>(v); }

void visit_matrix(const std::string& name, Mat<float>& m, const TensorVisitor& fn) {
  fn(name, {u32(m.rows()), u32(m.cols())}, m.data());
}

void visit_vector(const std::string& name, RowVec<float>& v, const TensorVisitor& fn) {
  fn(name, {u32(v.size())}, v.data());
}

void visit_params(const std::string& prefix, BlockParams& p, const TensorVisitor& fn) {
  AttentionWeights& w = p.base;
  visit_matrix(prefix + "base.w_q", w.w_q, fn);
  visit_matrix(prefix + "base.w_k", w.w_k, fn);
  visit_matrix(prefix + "base.w_v", w.w_v, fn);
  visit_matrix(prefix + "base.w_o", w.w_o, fn);
  visit_matrix(prefix + "base.ffn_in", w.ffn_in, fn);
  visit_vector(prefix + "base.ffn_in_bias", w.ffn_in_bias, fn);
  visit_matrix(prefix + "base.ffn_out", w.ffn_out, fn);
  visit_vector(prefix + "base.ffn_out_bias", w.ffn_out_bias, fn);
  visit_vector(prefix + "base.norm_attn.gain", w.norm_attn.gain, fn);
  visit_vector(prefix + "base.norm_attn.bias", w.norm_attn.bias, fn);
  visit_vector(prefix + "base.norm_ffn.gain", w.norm_ffn.gain, fn);
  visit_vector(prefix + "base.norm_ffn.bias", w.norm_ffn.bias, fn);
  for (auto [tag, ad] : {std::pair{"global_lora", &p.global_lora},
                         std::pair{"hier_lora", &p.hier_lora}}) {
    const std::string pre = prefix + tag + ".";
    for (auto [fname, f] : {std::pair{"q", &ad->q}, std::pair{"k", &ad->k},
                            std::pair{"v", &ad->v}, std::pair{"ffn_in", &ad->ffn_in},
                            std::pair{"ffn_out", &ad->ffn_out}}) {
      visit_matrix(pre + fname + ".a", f->a, fn);
      visit_matrix(pre + fname + ".b", f->b, fn);
    }
  }
  for (auto [tag, k] : {std::pair{"global_compress", &p.global_compress},
                        std::pair{"hier_compress", &p.hier_compress}}) {
    fn(prefix + tag + ".weight", {u32(k->channels), u32(k->k), u32(k->k)}, k->weights.data());
    fn(prefix + tag + ".bias", {u32(k->channels)}, k->bias.data());
  }
  for (auto [tag, k] : {std::pair{"global_decompress", &p.global_decompress},
                        std::pair{"hier_decompress", &p.hier_decompress}}) {
    fn(prefix + tag + ".weight",
       {u32(k->kt), u32(k->kh), u32(k->kw), u32(k->channels), u32(k->channels)},
       k->weights.data());
    fn(prefix + tag + ".bias", {u32(k->channels)}, k->bias.data());
  }
  for (auto [tag, g] : {std::pair{"global_gate", &p.global_gate},
                        std::pair{"local_gate", &p.local_gate}}) {
    const std::string pre = prefix + tag + ".";
    visit_matrix(pre + "w1", g->mlp.w1, fn);
    visit_vector(pre + "b1", g->mlp.b1, fn);
    visit_matrix(pre + "w2", g->mlp.w2, fn);
    visit_vector(pre + "b2", g->mlp.b2, fn);
  }
}

std::size_t element_count(const std::vector<std::uint32_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace

void save_params(const std::filesystem::path& dir, std::span<const BlockParams> layers) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json manifest;
  manifest["format"] = "UGT1";
  manifest["layers"] = layers.size();
  manifest["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    BlockParams copy = layers[i];
    visit_params("layer" + std::to_string(i) + ".", copy,
                 [&](const std::string& name, std::vector<std::uint32_t> shape, float* data) {
                   const std::string file = name + ".ugt";
                   write_raw_tensor(dir / file, shape,
                                    std::span<const float>(data, element_count(shape)));
                   manifest["tensors"].push_back(
                       {{"name", name}, {"file", file}, {"shape", shape}});
                 });
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw Error(ErrorKind::kIo, "cannot write manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
}

std::vector<BlockParams> load_params(const std::filesystem::path& dir,
                                     std::span<const BlockConfig> cfgs) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw Error(ErrorKind::kNotFound, "no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("bad manifest: ") + e.what());
  }
  std::map<std::string, std::pair<std::string, std::vector<std::uint32_t>>> entries;
  try {
    for (const auto& t : manifest.at("tensors")) {
      entries[t.at("name").get<std::string>()] = {
          t.at("file").get<std::string>(), t.at("shape").get<std::vector<std::uint32_t>>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("bad manifest: ") + e.what());
  }
  std::vector<BlockParams> out;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    BlockParams p = BlockParams::init(cfgs[i], 0);
    visit_params("layer" + std::to_string(i) + ".", p,
                 [&](const std::string& name, std::vector<std::uint32_t> shape, float* data) {
                   auto it = entries.find(name);
                   if (it == entries.end()) {
                     throw Error(ErrorKind::kNotFound, "manifest lacks parameter " + name);
                   }
                   if (it->second.second != shape) {
                     throw Error(ErrorKind::kFormat, "parameter " + name +
                                                         " has a different shape than the config");
                   }
                   RawTensor t = read_raw_tensor(dir / it->second.first);
                   if (t.shape != shape) {
                     throw Error(ErrorKind::kFormat, "tensor file for " + name +
                                                         " disagrees with the manifest");
                   }
                   std::copy(t.data.begin(), t.data.end(), data);
                 });
    p.validate(cfgs[i]);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace hiattn
