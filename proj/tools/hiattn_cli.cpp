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

// hiattn command-line front end. Talks to the library only through hiattn.h.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or environment error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <regex>
#include <string>

#include "CLI11.hpp"
#include "hiattn/hiattn.h"
#include <nlohmann/json.hpp>

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct CliFailure {
  int code;
};

void check(hiattn_status s) {
  if (s == HIATTN_OK) return;
  std::fprintf(stderr, "error (%s): %s\n", hiattn_status_name(s), hiattn_last_error());
  throw CliFailure{kExitUsage};
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { hiattn_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

struct ConfigDeleter {
  void operator()(hiattn_config* c) const { hiattn_config_free(c); }
};
struct LatentDeleter {
  void operator()(hiattn_latent* z) const { hiattn_latent_free(z); }
};
using ConfigPtr = std::unique_ptr<hiattn_config, ConfigDeleter>;
using LatentPtr = std::unique_ptr<hiattn_latent, LatentDeleter>;

// 6 significant digits; the process never leaves the "C" locale.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Rounds a JSON number to 6 significant digits so every emitted form agrees.
double rounded(double v) { return std::strtod(num(v).c_str(), nullptr); }

struct Common {
  std::string config_path;
  bool json_out = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;
  int repeats = 5;
  int threads = 1;
  std::string out_path;
  std::string sweep;
  std::string input;
  std::string metric = "mse";
  bool inject_fault = false;
};

ConfigPtr load_config(const Common& o) {
  hiattn_config* raw = nullptr;
  check(hiattn_config_create(&raw));
  ConfigPtr cfg(raw);
  if (!o.config_path.empty()) check(hiattn_config_load(cfg.get(), o.config_path.c_str()));
  if (o.seed) check(hiattn_config_set_int(cfg.get(), "seed", static_cast<int64_t>(*o.seed)));
  if (o.tolerance) check(hiattn_config_set_real(cfg.get(), "tolerance", *o.tolerance));
  return cfg;
}

void emit(const Common& o, const std::string& text) {
  if (o.out_path.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  std::ofstream f(o.out_path, std::ios::binary);
  f << text;
  if (!f) {
    std::fprintf(stderr, "error (io): cannot write %s\n", o.out_path.c_str());
    throw CliFailure{kExitUsage};
  }
}

int cmd_verify(const Common& o) {
  OwnedString s;
  int all_pass = 0;
  check(hiattn_verify(o.seed.value_or(0), o.inject_fault ? 1u : 0u, &all_pass, &s.p));
  json results = json::parse(s.str());
  if (o.json_out) {
    for (auto& r : results) {
      r["value"] = rounded(r["value"].get<double>());
      r["tolerance"] = rounded(r["tolerance"].get<double>());
    }
    std::cout << results.dump() << "\n";
  } else {
    std::printf("%-42s %-6s %-12s %-12s\n", "check", "result", "value", "tolerance");
    for (const auto& r : results) {
      std::printf("%-42s %-6s %-12s %-12s\n", r["name"].get<std::string>().c_str(),
                  r["pass"].get<bool>() ? "pass" : "FAIL",
                  num(r["value"].get<double>()).c_str(),
                  num(r["tolerance"].get<double>()).c_str());
    }
    std::printf("%s\n", all_pass ? "all checks passed" : "verification FAILED");
  }
  return all_pass ? kExitOk : kExitFail;
}

int cmd_equiv(const Common& o) {
  ConfigPtr cfg = load_config(o);
  OwnedString s;
  int pass = 0;
  check(hiattn_equiv(cfg.get(), o.threads, &pass, &s.p));
  json rep = json::parse(s.str());
  if (o.json_out) {
    for (const char* k : {"max_abs_diff", "max_rel_diff", "tolerance"})
      rep[k] = rounded(rep[k].get<double>());
    std::cout << rep.dump() << "\n";
  } else {
    std::printf("config        %s\n", rep["config"].get<std::string>().c_str());
    std::printf("max_abs_diff  %s\n", num(rep["max_abs_diff"].get<double>()).c_str());
    std::printf("max_rel_diff  %s\n", num(rep["max_rel_diff"].get<double>()).c_str());
    std::printf("tolerance     %s\n", num(rep["tolerance"].get<double>()).c_str());
    std::printf("result        %s\n", pass ? "pass" : "FAIL");
  }
  return pass ? kExitOk : kExitFail;
}

int cmd_flops(const Common& o) {
  ConfigPtr cfg = load_config(o);
  int lo = 0, hi = 0;
  if (!o.sweep.empty()) {
    static const std::regex re(R"(K=(\d+)\.\.(\d+))");
    std::smatch m;
    if (!std::regex_match(o.sweep, m, re)) {
      std::fprintf(stderr, "error: --sweep expects K=a..b, got '%s'\n", o.sweep.c_str());
      return kExitUsage;
    }
    lo = std::stoi(m[1].str());
    hi = std::stoi(m[2].str());
  }
  OwnedString s;
  check(hiattn_flops_csv(cfg.get(), lo, hi, &s.p));
  emit(o, s.str());
  return kExitOk;
}

int cmd_bench(const Common& o) {
  if (o.repeats < 3) {
    std::fprintf(stderr, "error: --repeats must be >= 3, got %d\n", o.repeats);
    return kExitUsage;
  }
  ConfigPtr cfg = load_config(o);
  OwnedString s;
  check(hiattn_bench_csv(cfg.get(), o.repeats, o.threads, &s.p));
  emit(o, s.str());
  return kExitOk;
}

int cmd_hdmse(const Common& o) {
  if (o.metric == "fvd" || o.metric == "lpips") {
    std::fprintf(stderr,
                 "unsupported metric: HD-%s needs a pretrained network and is not "
                 "provided; use --metric mse\n",
                 o.metric == "fvd" ? "FVD" : "LPIPS");
    return kExitUsage;
  }
  if (o.metric != "mse") {
    std::fprintf(stderr, "unsupported metric: '%s'\n", o.metric.c_str());
    return kExitUsage;
  }
  if (o.input.empty()) {
    std::fprintf(stderr, "error: hdmse needs --input PATH\n");
    return kExitUsage;
  }
  hiattn_latent* raw = nullptr;
  check(hiattn_latent_read(o.input.c_str(), &raw));
  LatentPtr z(raw);
  double v[4];
  check(hiattn_hdmse(z.get(), v));
  if (o.json_out) {
    json j = {{"k3", rounded(v[0])}, {"k4", rounded(v[1])}, {"k5", rounded(v[2])},
              {"total", rounded(v[3])}};
    std::cout << j.dump() << "\n";
  } else {
    for (int i = 0; i < 3; ++i) std::printf("k=%d    %.6f\n", i + 3, v[i]);
    std::printf("total  %.6f\n", v[3]);
  }
  return kExitOk;
}

int cmd_demo(const Common& o) {
  if (o.out_path.empty()) {
    std::fprintf(stderr, "error: demo needs --out PATH\n");
    return kExitUsage;
  }
  ConfigPtr cfg = load_config(o);
  hiattn_latent* raw = nullptr;
  check(hiattn_demo(cfg.get(), o.threads, &raw));
  LatentPtr z(raw);
  check(hiattn_latent_write(z.get(), o.out_path.c_str()));
  int64_t d[5];
  check(hiattn_latent_dims(z.get(), d));
  if (o.json_out) {
    json j = {{"out", o.out_path}, {"dims", {d[0], d[1], d[2], d[3], d[4]}}};
    std::cout << j.dump() << "\n";
  } else {
    std::printf("wrote %s (%lld,%lld,%lld,%lld,%lld)\n", o.out_path.c_str(),
                static_cast<long long>(d[0]), static_cast<long long>(d[1]),
                static_cast<long long>(d[2]), static_cast<long long>(d[3]),
                static_cast<long long>(d[4]));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical window attention toolkit"};
  app.require_subcommand(1);
  Common o;

  auto add_common = [&](CLI::App* sc) {
    sc->add_option("--config", o.config_path, "JSON run config");
    sc->add_flag("--json", o.json_out, "machine-readable output");
    sc->add_option("--seed", o.seed, "override the config seed");
    sc->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  CLI::App* verify = app.add_subcommand("verify", "run the invariant suite");
  verify->add_flag("--json", o.json_out, "machine-readable output");
  verify->add_option("--seed", o.seed, "suite seed");
  verify->add_flag("--inject-fault", o.inject_fault)->group("");

  CLI::App* equiv = app.add_subcommand("equiv", "degenerate block vs full attention");
  add_common(equiv);
  equiv->add_option("--tolerance", o.tolerance, "max abs diff allowed");

  CLI::App* flops = app.add_subcommand("flops", "attention-map cost CSV");
  add_common(flops);
  flops->add_option("--sweep", o.sweep, "K range, e.g. K=1..8");
  flops->add_option("--out", o.out_path, "write CSV here instead of stdout");

  CLI::App* bench = app.add_subcommand("bench", "time decomposed vs full attention");
  add_common(bench);
  bench->add_option("--repeats", o.repeats, "timed repeats (>= 3)");
  bench->add_option("--out", o.out_path, "write CSV here instead of stdout");

  CLI::App* hdmse = app.add_subcommand("hdmse", "HD-MSE of a tensor file");
  hdmse->add_option("--input", o.input, "tensor file");
  hdmse->add_option("--metric", o.metric, "mse (fvd and lpips are not provided)");
  hdmse->add_flag("--json", o.json_out, "machine-readable output");

  CLI::App* demo = app.add_subcommand("demo", "random model forward, writes a tensor");
  add_common(demo);
  demo->add_option("--out", o.out_path, "output tensor file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*verify) return cmd_verify(o);
    if (*equiv) return cmd_equiv(o);
    if (*flops) return cmd_flops(o);
    if (*bench) return cmd_bench(o);
    if (*hdmse) return cmd_hdmse(o);
    if (*demo) return cmd_demo(o);
  } catch (const CliFailure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
