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

/* C interface to the hiattn library. Every call returns a status code; on
 * failure hiattn_last_error() describes the problem for the calling thread.
 * Strings handed out through char** parameters are released with
 * hiattn_string_free(). */
#ifndef HIATTN_HIATTN_H
#define HIATTN_HIATTN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(HIATTN_BUILDING)
#    define HIATTN_API __declspec(dllexport)
#  else
#    define HIATTN_API __declspec(dllimport)
#  endif
#else
#  define HIATTN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hiattn_status {
  HIATTN_OK = 0,
  HIATTN_ERR_INVALID_ARGUMENT = 1,
  HIATTN_ERR_IO = 2,
  HIATTN_ERR_FORMAT = 3,
  HIATTN_ERR_TRUNCATED = 4,
  HIATTN_ERR_UNSUPPORTED = 5,
  HIATTN_ERR_RESOURCE_LIMIT = 6,
  HIATTN_ERR_NOT_FOUND = 7,
  HIATTN_ERR_INTERNAL = 8
} hiattn_status;

typedef struct hiattn_latent hiattn_latent;
typedef struct hiattn_config hiattn_config;

HIATTN_API const char* hiattn_version(void);
HIATTN_API const char* hiattn_last_error(void);
HIATTN_API const char* hiattn_status_name(hiattn_status s);
HIATTN_API void hiattn_string_free(char* s);

/* ---- latents: (B, T, H, W, D) float32, row-major ---- */

HIATTN_API hiattn_status hiattn_latent_random(const int64_t dims[5], uint64_t seed,
                                              hiattn_latent** out);
HIATTN_API hiattn_status hiattn_latent_from_data(const int64_t dims[5], const float* data,
                                                 hiattn_latent** out);
HIATTN_API hiattn_status hiattn_latent_read(const char* path, hiattn_latent** out);
HIATTN_API hiattn_status hiattn_latent_write(const hiattn_latent* z, const char* path);
HIATTN_API hiattn_status hiattn_latent_dims(const hiattn_latent* z, int64_t dims[5]);
HIATTN_API const float* hiattn_latent_data(const hiattn_latent* z);
HIATTN_API void hiattn_latent_free(hiattn_latent* z);

/* ---- run configuration ----
 * Keys: T H W D K r layers heads seed (integers), t tolerance (reals).
 * Defaults: T=2 H=8 W=8 D=8 K=2 r=0 (derived) layers=2 heads=1 seed=0
 * t=500 tolerance=1e-5. */

HIATTN_API hiattn_status hiattn_config_create(hiattn_config** out);
HIATTN_API void hiattn_config_free(hiattn_config* c);
/* Overlays keys present in a JSON object file; unknown keys are errors. */
HIATTN_API hiattn_status hiattn_config_load(hiattn_config* c, const char* path);
HIATTN_API hiattn_status hiattn_config_set_int(hiattn_config* c, const char* key, int64_t v);
HIATTN_API hiattn_status hiattn_config_set_real(hiattn_config* c, const char* key, double v);
HIATTN_API hiattn_status hiattn_config_get_real(const hiattn_config* c, const char* key,
                                                double* v);
/* Checks the block invariants for every layer of the configured stack. */
HIATTN_API hiattn_status hiattn_config_validate(const hiattn_config* c);
HIATTN_API hiattn_status hiattn_config_to_json(const hiattn_config* c, char** json);

/* ---- commands ---- */

/* JSON array of {name, pass, value, tolerance, detail}. flags bit 0 injects a
 * sign fault into the suite. */
HIATTN_API hiattn_status hiattn_verify(uint64_t seed, unsigned flags, int* all_pass,
                                       char** json);

/* JSON object {config, max_abs_diff, max_rel_diff, tolerance, pass}. */
HIATTN_API hiattn_status hiattn_equiv(const hiattn_config* c, int threads, int* pass,
                                      char** json);

/* CSV rows (header first) for K in [k_lo, k_hi]; k_lo = k_hi = 0 uses the
 * config's K. */
HIATTN_API hiattn_status hiattn_flops_csv(const hiattn_config* c, int k_lo, int k_hi,
                                          char** csv);

HIATTN_API hiattn_status hiattn_bench_csv(const hiattn_config* c, int repeats, int threads,
                                          char** csv);

/* values[0..2] per factor 2^3, 2^4, 2^5; values[3] total. */
HIATTN_API hiattn_status hiattn_hdmse(const hiattn_latent* z, double values[4]);

/* Random-init model forward on a random latent from the config seed. */
HIATTN_API hiattn_status hiattn_demo(const hiattn_config* c, int threads,
                                     hiattn_latent** out);

#ifdef __cplusplus
}
#endif

#endif /* HIATTN_HIATTN_H */
