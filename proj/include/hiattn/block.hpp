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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hiattn/attention.hpp"
#include "hiattn/exec.hpp"
#include "hiattn/latent.hpp"
#include "hiattn/nn_ops.hpp"

namespace hiattn {

/// Shape and schedule of one block.
///
/// The standard configuration has K even, global compression k = K and a
/// hierarchical compression factor of 2. Layer parity picks the partitions:
/// the local branch uses (K + i mod 2)^2 windows and the hierarchical branch
/// (K/2 + i mod 2)^2 coarse windows. Inputs must have H and W divisible by 2K.
///
/// Setting either parts override switches to a custom configuration in which
/// K, both factors and both partition counts are free (each >= 1). The
/// equivalence harness uses this to build a single-window block.
struct BlockConfig {
  int K = 4;
  int global_factor = 4;
  int hier_factor = 2;
  int rank = 4;
  std::int64_t channels = 64;
  std::int64_t ffn_dim = 128;
  int heads = 1;
  int gate_hidden = 64;
  int layer_index = 0;
  bool positional_encoding = false;
  int local_parts_override = 0;
  int hier_parts_override = 0;

  static BlockConfig standard(int K, std::int64_t channels, int layer_index = 0);
  /// One window in every branch, factor-1 compressions.
  static BlockConfig single_window(std::int64_t channels);

  bool custom() const { return local_parts_override > 0 || hier_parts_override > 0; }
  int parity() const { return layer_index % 2; }
  int local_parts() const;
  int hier_parts() const;

  void validate() const;
  void validate_input(const Dims& dims) const;
};

/// Timestep-conditioned per-channel mixing weight alpha(t) in (0, 1)^D:
/// sigmoid(MLP(sin_encode(t, 256))).
struct FusionGate {
  int encode_dim = 256;
  MLP2<float> mlp;

  /// Hidden layer uniform at 1/sqrt(fan_in); final layer uniform at
  /// `final_scale` (0 gives alpha = 0.5 for every t).
  static FusionGate create(std::int64_t channels, int hidden, Rng& rng, float final_scale);
  std::vector<double> alpha(double t) const;
};

/// alpha * a + (1 - alpha) * b per channel, broadcast over (B, T, H, W).
VideoLatent fuse(const VideoLatent& a, const VideoLatent& b, std::span<const double> alpha);
VideoLatent fuse(const VideoLatent& a, const VideoLatent& b, double t, const FusionGate& gate);

struct BlockParams {
  AttentionWeights base;  // shared by all three branches
  LoRAAdapter global_lora;
  LoRAAdapter hier_lora;
  DepthwiseKernel2D<float> global_compress;
  DepthwiseKernel2D<float> hier_compress;
  Kernel3D<float> global_decompress;
  Kernel3D<float> hier_decompress;
  FusionGate global_gate;  // alpha:       z_g   vs z_l
  FusionGate local_gate;   // alpha_local: z_hla vs z_cro

  /// Random base weights and gates; everything else at its documented
  /// init (B = 0 adapters, averaging compressions, identity decompressions).
  static BlockParams init(const BlockConfig& cfg, std::uint64_t seed);
  void validate(const BlockConfig& cfg) const;
};

VideoLatent local_branch(const VideoLatent& z, const BlockConfig& cfg, const BlockParams& p,
                         const ExecContext& ctx = {});
VideoLatent hierarchical_branch(const VideoLatent& z, const BlockConfig& cfg,
                                const BlockParams& p, const ExecContext& ctx = {});
VideoLatent global_branch(const VideoLatent& z, const BlockConfig& cfg, const BlockParams& p,
                          const ExecContext& ctx = {});

/// z_l = fuse(z_hla, z_cro, alpha_local); out = fuse(z_g, z_l, alpha).
VideoLatent block_forward(const VideoLatent& z, double t, const BlockConfig& cfg,
                          const BlockParams& p, const ExecContext& ctx = {});

/// Partitions used by one layer of a model_forward run.
struct LayerTrace {
  PartitionSpec local;
  PartitionSpec hierarchical;
};

VideoLatent model_forward(const VideoLatent& z, double t, std::span<const BlockConfig> cfgs,
                          std::span<const BlockParams> params, const ExecContext& ctx = {},
                          std::vector<LayerTrace>* trace = nullptr);

/// Configs for an n-layer stack: copies of `base` with layer_index = i.
std::vector<BlockConfig> layer_configs(const BlockConfig& base, int layers);

/// Additive sinusoidal encoding of global (t, h, w) coordinates; channel c
/// encodes axis c % 3.
void add_positional_encoding(VideoLatent& z);

// ---------------------------------------------------------------------------
// Parameter files
// ---------------------------------------------------------------------------

/// Writes one tensor file per named parameter plus manifest.json
/// ({"tensors": [{"name", "file", "shape"}...]}) into `dir`.
void save_params(const std::filesystem::path& dir, std::span<const BlockParams> layers);
/// Reads parameters written by save_params; shapes come from `cfgs` and must
/// match the manifest.
std::vector<BlockParams> load_params(const std::filesystem::path& dir,
                                     std::span<const BlockConfig> cfgs);

}  // namespace hiattn
