/* Copyright 2026 The UniPT Authors.
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef UNIPT_UNIPT_H_
#define UNIPT_UNIPT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UNIPT_API __declspec(dllexport)
#else
#define UNIPT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Nonzero values match the library's internal error codes. */
typedef enum unipt_status {
  UNIPT_OK = 0,
  UNIPT_ERR_INVALID_ARGUMENT = 1,
  UNIPT_ERR_SHAPE_MISMATCH = 2,
  UNIPT_ERR_NON_FINITE = 3,
  UNIPT_ERR_STATE = 4,
  UNIPT_ERR_CONFIG = 5,
  UNIPT_ERR_IO = 6,
  UNIPT_ERR_DIVERGENCE = 7,
  UNIPT_ERR_INTERNAL = 100
} unipt_status;

typedef enum unipt_operation {
  UNIPT_OP_RUN = 0,
  UNIPT_OP_COMPARE = 1,
  UNIPT_OP_SWEEP = 2,
  UNIPT_OP_GUIDANCE = 3
} unipt_operation;

typedef struct unipt_config unipt_config;
typedef struct unipt_result unipt_result;

UNIPT_API const char* unipt_version(void);

/* Message of the last failed call on this thread; "" if none. */
UNIPT_API const char* unipt_last_error(void);

/* Parsing collects every error; the message lists them one per line. */
UNIPT_API unipt_status unipt_config_parse(const char* text, unipt_config** out);
UNIPT_API unipt_status unipt_config_load(const char* path, unipt_config** out);
UNIPT_API void unipt_config_free(unipt_config* config);

/* Canonical text; release with unipt_string_free. */
UNIPT_API unipt_status unipt_config_serialize(const unipt_config* config, char** out);

/* Overrides the run seed and the task seed. */
UNIPT_API unipt_status unipt_config_set_seed(unipt_config* config, uint64_t seed);
/* Sets the operation and revalidates the config. */
UNIPT_API unipt_status unipt_config_set_operation(unipt_config* config, unipt_operation op);
UNIPT_API unipt_status unipt_config_get_operation(const unipt_config* config,
                                                  unipt_operation* out);
/* Output directory from the config; valid while `config` lives. */
UNIPT_API const char* unipt_config_output_path(const unipt_config* config);
/* "table", "csv" or "both"; static storage. */
UNIPT_API const char* unipt_config_output_format(const unipt_config* config);

UNIPT_API unipt_status unipt_execute(const unipt_config* config, unipt_result** out);
UNIPT_API void unipt_result_free(unipt_result* result);

UNIPT_API size_t unipt_result_row_count(const unipt_result* result);
UNIPT_API size_t unipt_result_check_count(const unipt_result* result);
/* 1 when every check passed, else 0. */
UNIPT_API int unipt_result_all_passed(const unipt_result* result);

/* Rendered documents; release with unipt_string_free. */
UNIPT_API unipt_status unipt_result_json(const unipt_result* result, char** out);
UNIPT_API unipt_status unipt_result_csv(const unipt_result* result, char** out);
UNIPT_API unipt_status unipt_result_table(const unipt_result* result, char** out);
UNIPT_API unipt_status unipt_result_plotdata(const unipt_result* result, char** out);

/* Writes report.json, report.csv and plotdata.csv into `dir`. */
UNIPT_API unipt_status unipt_result_write(const unipt_result* result, const char* dir);

UNIPT_API void unipt_string_free(char* text);

#ifdef __cplusplus
}
#endif

#endif /* UNIPT_UNIPT_H_ */
