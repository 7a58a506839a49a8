// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/unipt.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "unipt/config.hpp"
#include "unipt/report.hpp"
#include "unipt/runner.hpp"

struct unipt_config {
  unipt::RunConfig config;
};

struct unipt_result {
  unipt::RunConfig config;
  unipt::Comparison comparison;
};

namespace {

thread_local std::string last_error;

unipt_status fail(unipt_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
unipt_status guarded(F&& fn) {
  try {
    fn();
    last_error.clear();
    return UNIPT_OK;
  } catch (const unipt::Error& e) {
    return fail(static_cast<unipt_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(UNIPT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(UNIPT_ERR_INTERNAL, e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename F>
unipt_status render(const unipt_result* result, char** out, F&& fn) {
  if (!result || !out) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { *out = copy_string(fn(*result)); });
}

}  // namespace

extern "C" {

const char* unipt_version(void) { return "1.0.0"; }

const char* unipt_last_error(void) { return last_error.c_str(); }

unipt_status unipt_config_parse(const char* text, unipt_config** out) {
  if (!text || !out) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new unipt_config{unipt::parse_config(text)}; });
}

unipt_status unipt_config_load(const char* path, unipt_config** out) {
  if (!path || !out) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new unipt_config{unipt::load_config(path)}; });
}

void unipt_config_free(unipt_config* config) { delete config; }

unipt_status unipt_config_serialize(const unipt_config* config, char** out) {
  if (!config || !out) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { *out = copy_string(unipt::serialize_config(config->config)); });
}

unipt_status unipt_config_set_seed(unipt_config* config, uint64_t seed) {
  if (!config) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  config->config.run.seed = seed;
  config->config.task.seed = seed;
  last_error.clear();
  return UNIPT_OK;
}

unipt_status unipt_config_set_operation(unipt_config* config, unipt_operation op) {
  if (!config) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  if (op < UNIPT_OP_RUN || op > UNIPT_OP_GUIDANCE) {
    return fail(UNIPT_ERR_INVALID_ARGUMENT, "unknown operation " + std::to_string(op));
  }
  return guarded([&] {
    unipt::RunConfig next = config->config;
    next.experiment.operation = static_cast<unipt::Operation>(op);
    if (auto errors = unipt::validate_config(next); !errors.empty()) {
      throw unipt::ConfigError(std::move(errors));
    }
    config->config = std::move(next);
  });
}

unipt_status unipt_config_get_operation(const unipt_config* config, unipt_operation* out) {
  if (!config || !out) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  *out = static_cast<unipt_operation>(config->config.experiment.operation);
  last_error.clear();
  return UNIPT_OK;
}

const char* unipt_config_output_path(const unipt_config* config) {
  return config ? config->config.output.path.c_str() : "";
}

const char* unipt_config_output_format(const unipt_config* config) {
  return config ? unipt::to_string(config->config.output.format).data() : "both";
}

unipt_status unipt_execute(const unipt_config* config, unipt_result** out) {
  if (!config || !out) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new unipt_result{config->config, unipt::execute(config->config)};
  });
}

void unipt_result_free(unipt_result* result) { delete result; }

size_t unipt_result_row_count(const unipt_result* result) {
  return result ? result->comparison.rows.size() : 0;
}

size_t unipt_result_check_count(const unipt_result* result) {
  return result ? result->comparison.checks.size() : 0;
}

int unipt_result_all_passed(const unipt_result* result) {
  return result && result->comparison.all_passed() ? 1 : 0;
}

unipt_status unipt_result_json(const unipt_result* result, char** out) {
  return render(result, out, [](const unipt_result& r) {
    return unipt::report_json(r.config, r.comparison).dump(2) + "\n";
  });
}

unipt_status unipt_result_csv(const unipt_result* result, char** out) {
  return render(result, out, [](const unipt_result& r) { return unipt::report_csv(r.comparison); });
}

unipt_status unipt_result_table(const unipt_result* result, char** out) {
  return render(result, out,
                [](const unipt_result& r) { return unipt::report_table(r.comparison); });
}

unipt_status unipt_result_plotdata(const unipt_result* result, char** out) {
  return render(result, out,
                [](const unipt_result& r) { return unipt::plotdata_csv(r.comparison.rows); });
}

unipt_status unipt_result_write(const unipt_result* result, const char* dir) {
  if (!result || !dir) return fail(UNIPT_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { unipt::write_reports(result->config, result->comparison, dir); });
}

void unipt_string_free(char* text) { std::free(text); }

}  // extern "C"
