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

#include "hiattn/hiattn.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "hiattn/block.hpp"
#include "hiattn/cost_model.hpp"
#include "hiattn/errors.hpp"
#include "hiattn/hd_metrics.hpp"
#include "hiattn/oracle.hpp"
#include "hiattn/tensor_io.hpp"
#include "hiattn/verify.hpp"

using json = nlohmann::json;

struct hiattn_latent {
  hiattn::VideoLatent z;
};

struct hiattn_config {
  std::map<std::string, std::int64_t> ints = {
      {"T", 2}, {"H", 8},      {"W", 8},     {"D", 8},   {"K", 2},
      {"r", 0}, {"layers", 2}, {"heads", 1}, {"seed", 0},
  };
  std::map<std::string, double> reals = {{"t", 500.0}, {"tolerance", 1e-5}};
};

namespace {

thread_local std::string g_last_error;

hiattn_status status_of(hiattn::ErrorKind k) {
  using hiattn::ErrorKind;
  switch (k) {
    case ErrorKind::kInvalidArgument: return HIATTN_ERR_INVALID_ARGUMENT;
    case ErrorKind::kIo: return HIATTN_ERR_IO;
    case ErrorKind::kFormat: return HIATTN_ERR_FORMAT;
    case ErrorKind::kTruncated: return HIATTN_ERR_TRUNCATED;
    case ErrorKind::kUnsupportedOp: return HIATTN_ERR_UNSUPPORTED;
    case ErrorKind::kResourceLimit: return HIATTN_ERR_RESOURCE_LIMIT;
    case ErrorKind::kNotFound: return HIATTN_ERR_NOT_FOUND;
  }
  return HIATTN_ERR_INTERNAL;
}

template <typename F>
hiattn_status guard(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return HIATTN_OK;
  } catch (const hiattn::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_last_error = std::string("config: ") + e.what();
    return HIATTN_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return HIATTN_ERR_RESOURCE_LIMIT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HIATTN_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) hiattn::throw_invalid(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

hiattn::Dims dims_from(const int64_t d[5]) {
  need(d, "dims");
  hiattn::Dims dims{d[0], d[1], d[2], d[3], d[4]};
  dims.validate();
  return dims;
}

std::int64_t get_int(const hiattn_config& c, const char* key) { return c.ints.at(key); }

int narrow_int(const hiattn_config& c, const char* key) {
  const std::int64_t v = get_int(c, key);
  if (v < INT32_MIN || v > INT32_MAX) {
    hiattn::throw_invalid(std::string(key) + "=" + std::to_string(v) + " is out of range");
  }
  return static_cast<int>(v);
}

hiattn::Dims config_dims(const hiattn_config& c) {
  hiattn::Dims d{1, get_int(c, "T"), get_int(c, "H"), get_int(c, "W"), get_int(c, "D")};
  d.validate();
  return d;
}

hiattn::BlockConfig config_block(const hiattn_config& c) {
  hiattn::BlockConfig b = hiattn::BlockConfig::standard(narrow_int(c, "K"), get_int(c, "D"));
  b.heads = narrow_int(c, "heads");
  if (get_int(c, "r") > 0) b.rank = narrow_int(c, "r");
  return b;
}

std::uint64_t config_seed(const hiattn_config& c) {
  return static_cast<std::uint64_t>(get_int(c, "seed"));
}

void validate_config(const hiattn_config& c) {
  const hiattn::Dims d = config_dims(c);
  const int layers = narrow_int(c, "layers");
  if (layers < 1) hiattn::throw_invalid("layers must be >= 1, got " + std::to_string(layers));
  if (get_int(c, "seed") < 0) hiattn::throw_invalid("seed must be >= 0");
  if (!(c.reals.at("tolerance") >= 0.0)) hiattn::throw_invalid("tolerance must be >= 0");
  for (const auto& cfg : hiattn::layer_configs(config_block(c), layers)) {
    cfg.validate();
    cfg.validate_input(d);
  }
}

hiattn::CostShape config_shape(const hiattn_config& c, int K) {
  const hiattn::Dims d = config_dims(c);
  return hiattn::CostShape{d.frames, d.height, d.width, d.channels, K};
}

std::string join_csv(const std::vector<std::string>& rows) {
  std::string out = std::string(hiattn::kCostCsvHeader) + "\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

// Same layer seeds for every thread count.
std::uint64_t layer_seed(std::uint64_t seed, int layer) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(layer + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

extern "C" {

const char* hiattn_version(void) { return "0.1.0"; }

const char* hiattn_last_error(void) { return g_last_error.c_str(); }

const char* hiattn_status_name(hiattn_status s) {
  switch (s) {
    case HIATTN_OK: return "ok";
    case HIATTN_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case HIATTN_ERR_IO: return "io";
    case HIATTN_ERR_FORMAT: return "format";
    case HIATTN_ERR_TRUNCATED: return "truncated";
    case HIATTN_ERR_UNSUPPORTED: return "unsupported";
    case HIATTN_ERR_RESOURCE_LIMIT: return "resource-limit";
    case HIATTN_ERR_NOT_FOUND: return "not-found";
    case HIATTN_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void hiattn_string_free(char* s) { std::free(s); }

// ---- latents ---------------------------------------------------------------

hiattn_status hiattn_latent_random(const int64_t dims[5], uint64_t seed, hiattn_latent** out) {
  return guard([&] {
    need(out, "out");
    *out = new hiattn_latent{hiattn::random_latent(dims_from(dims), seed)};
  });
}

hiattn_status hiattn_latent_from_data(const int64_t dims[5], const float* data,
                                      hiattn_latent** out) {
  return guard([&] {
    need(out, "out");
    need(data, "data");
    const hiattn::Dims d = dims_from(dims);
    std::vector<float> v(data, data + d.count());
    *out = new hiattn_latent{hiattn::VideoLatent(d, std::move(v))};
  });
}

hiattn_status hiattn_latent_read(const char* path, hiattn_latent** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new hiattn_latent{hiattn::read_tensor(path)};
  });
}

hiattn_status hiattn_latent_write(const hiattn_latent* z, const char* path) {
  return guard([&] {
    need(z, "latent");
    need(path, "path");
    hiattn::write_tensor(path, z->z);
  });
}

hiattn_status hiattn_latent_dims(const hiattn_latent* z, int64_t dims[5]) {
  return guard([&] {
    need(z, "latent");
    need(dims, "dims");
    const auto a = z->z.dims().as_array();
    for (int i = 0; i < 5; ++i) dims[i] = a[static_cast<std::size_t>(i)];
  });
}

const float* hiattn_latent_data(const hiattn_latent* z) { return z ? z->z.raw() : nullptr; }

void hiattn_latent_free(hiattn_latent* z) { delete z; }

// ---- config ----------------------------------------------------------------

hiattn_status hiattn_config_create(hiattn_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new hiattn_config();
  });
}

void hiattn_config_free(hiattn_config* c) { delete c; }

hiattn_status hiattn_config_load(hiattn_config* c, const char* path) {
  return guard([&] {
    need(c, "config");
    need(path, "path");
    if (!std::filesystem::exists(path)) {
      throw hiattn::Error(hiattn::ErrorKind::kNotFound,
                          std::string("config file not found: ") + path);
    }
    std::ifstream in(path);
    if (!in) throw hiattn::Error(hiattn::ErrorKind::kIo, std::string("cannot open ") + path);
    const json j = json::parse(in);
    if (!j.is_object()) {
      throw hiattn::Error(hiattn::ErrorKind::kFormat, "config must be a JSON object");
    }
    hiattn_config next = *c;
    for (const auto& [key, val] : j.items()) {
      if (auto it = next.ints.find(key); it != next.ints.end()) {
        if (!val.is_number_integer()) hiattn::throw_invalid("config key " + key + " must be an integer");
        it->second = val.get<std::int64_t>();
      } else if (auto rt = next.reals.find(key); rt != next.reals.end()) {
        if (!val.is_number()) hiattn::throw_invalid("config key " + key + " must be a number");
        rt->second = val.get<double>();
      } else {
        hiattn::throw_invalid("unknown config key '" + key + "'");
      }
    }
    *c = std::move(next);
  });
}

hiattn_status hiattn_config_set_int(hiattn_config* c, const char* key, int64_t v) {
  return guard([&] {
    need(c, "config");
    need(key, "key");
    auto it = c->ints.find(key);
    if (it == c->ints.end()) hiattn::throw_invalid(std::string("unknown integer key '") + key + "'");
    it->second = v;
  });
}

hiattn_status hiattn_config_set_real(hiattn_config* c, const char* key, double v) {
  return guard([&] {
    need(c, "config");
    need(key, "key");
    auto it = c->reals.find(key);
    if (it == c->reals.end()) hiattn::throw_invalid(std::string("unknown real key '") + key + "'");
    it->second = v;
  });
}

hiattn_status hiattn_config_get_real(const hiattn_config* c, const char* key, double* v) {
  return guard([&] {
    need(c, "config");
    need(key, "key");
    need(v, "v");
    if (auto it = c->reals.find(key); it != c->reals.end()) {
      *v = it->second;
    } else if (auto jt = c->ints.find(key); jt != c->ints.end()) {
      *v = static_cast<double>(jt->second);
    } else {
      hiattn::throw_invalid(std::string("unknown config key '") + key + "'");
    }
  });
}

hiattn_status hiattn_config_validate(const hiattn_config* c) {
  return guard([&] {
    need(c, "config");
    validate_config(*c);
  });
}

hiattn_status hiattn_config_to_json(const hiattn_config* c, char** out) {
  return guard([&] {
    need(c, "config");
    need(out, "out");
    json j = json::object();
    for (const auto& [k, v] : c->ints) j[k] = v;
    for (const auto& [k, v] : c->reals) j[k] = v;
    *out = dup_string(j.dump());
  });
}

// ---- commands --------------------------------------------------------------

hiattn_status hiattn_verify(uint64_t seed, unsigned flags, int* all_pass, char** out) {
  return guard([&] {
    need(all_pass, "all_pass");
    need(out, "out");
    hiattn::VerifyOptions opts;
    opts.seed = seed;
    opts.inject_fault = (flags & 1u) != 0;
    const auto results = hiattn::run_verify_suite(opts);
    json arr = json::array();
    bool ok = true;
    for (const auto& r : results) {
      ok = ok && r.pass;
      arr.push_back({{"name", r.name},
                     {"pass", r.pass},
                     {"value", r.value},
                     {"tolerance", r.tolerance},
                     {"detail", r.detail}});
    }
    *all_pass = ok ? 1 : 0;
    *out = dup_string(arr.dump());
  });
}

hiattn_status hiattn_equiv(const hiattn_config* c, int threads, int* pass, char** out) {
  return guard([&] {
    need(c, "config");
    need(pass, "pass");
    need(out, "out");
    const hiattn::Dims d = config_dims(*c);
    if (d.tokens() > hiattn::kOracleTokenLimit) {
      throw hiattn::Error(hiattn::ErrorKind::kResourceLimit,
                          "full attention over " + std::to_string(d.tokens()) +
                              " tokens exceeds the oracle limit of " +
                              std::to_string(hiattn::kOracleTokenLimit));
    }
    hiattn::DegenerateOptions opts;
    opts.timestep = c->reals.at("t");
    opts.threads = threads < 1 ? 1 : threads;
    const auto rep = hiattn::assert_degenerate_equivalence(
        config_seed(*c), d, c->reals.at("tolerance"), opts);
    *pass = rep.pass ? 1 : 0;
    const json j = {{"config", rep.config},
                    {"max_abs_diff", rep.max_abs_diff},
                    {"max_rel_diff", rep.max_rel_diff},
                    {"tolerance", rep.tolerance},
                    {"pass", rep.pass}};
    *out = dup_string(j.dump());
  });
}

hiattn_status hiattn_flops_csv(const hiattn_config* c, int k_lo, int k_hi, char** out) {
  return guard([&] {
    need(c, "config");
    need(out, "out");
    if (k_lo == 0 && k_hi == 0) k_lo = k_hi = narrow_int(*c, "K");
    if (k_lo < 1 || k_hi < k_lo) {
      hiattn::throw_invalid("K range " + std::to_string(k_lo) + ".." + std::to_string(k_hi) +
                            " is empty or below 1");
    }
    std::vector<std::string> rows;
    for (int k = k_lo; k <= k_hi; ++k) {
      const auto rep = hiattn::cost_report(config_shape(*c, k), narrow_int(*c, "heads"),
                                           config_seed(*c));
      for (auto& r : hiattn::cost_csv_rows(rep)) rows.push_back(std::move(r));
    }
    *out = dup_string(join_csv(rows));
  });
}

hiattn_status hiattn_bench_csv(const hiattn_config* c, int repeats, int threads, char** out) {
  return guard([&] {
    need(c, "config");
    need(out, "out");
    if (repeats < 3) hiattn::throw_invalid("bench needs repeats >= 3, got " + std::to_string(repeats));
    const auto rep = hiattn::bench(config_shape(*c, narrow_int(*c, "K")), repeats,
                                   config_seed(*c), narrow_int(*c, "heads"),
                                   threads < 1 ? 1 : threads);
    *out = dup_string(join_csv(hiattn::cost_csv_rows(rep)));
  });
}

hiattn_status hiattn_hdmse(const hiattn_latent* z, double values[4]) {
  return guard([&] {
    need(z, "latent");
    need(values, "values");
    const auto r = hiattn::hd_mse(z->z);
    for (int i = 0; i < 3; ++i) values[i] = r.per_factor[static_cast<std::size_t>(i)];
    values[3] = r.total;
  });
}

hiattn_status hiattn_demo(const hiattn_config* c, int threads, hiattn_latent** out) {
  return guard([&] {
    need(c, "config");
    need(out, "out");
    validate_config(*c);
    const auto cfgs = hiattn::layer_configs(config_block(*c), narrow_int(*c, "layers"));
    const std::uint64_t seed = config_seed(*c);
    std::vector<hiattn::BlockParams> params;
    params.reserve(cfgs.size());
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      params.push_back(hiattn::BlockParams::init(cfgs[i], layer_seed(seed, static_cast<int>(i))));
    }
    const hiattn::VideoLatent z = hiattn::random_latent(config_dims(*c), seed);
    hiattn::ExecContext ctx;
    ctx.threads = threads < 1 ? 1 : threads;
    *out = new hiattn_latent{hiattn::model_forward(z, c->reals.at("t"), cfgs, params, ctx)};
  });
}

}  // extern "C"
