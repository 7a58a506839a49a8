// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "unipt/unipt.h"

namespace {

struct ConfigDeleter {
  void operator()(unipt_config* c) const { unipt_config_free(c); }
};
struct ResultDeleter {
  void operator()(unipt_result* r) const { unipt_result_free(r); }
};
struct StringDeleter {
  void operator()(char* s) const { unipt_string_free(s); }
};
using ConfigPtr = std::unique_ptr<unipt_config, ConfigDeleter>;
using ResultPtr = std::unique_ptr<unipt_result, ResultDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

int report_error(const std::string& what) {
  std::cerr << "unipt: " << what << ": " << unipt_last_error() << "\n";
  return kExitFailure;
}

bool print(unipt_status (*render)(const unipt_result*, char**), const unipt_result* result) {
  char* raw = nullptr;
  if (render(result, &raw) != UNIPT_OK) return false;
  StringPtr text(raw);
  std::cout << text.get();
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-efficient side-network experiments on toy backbones"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string format;

  const std::map<std::string, int> verbs{{"run", UNIPT_OP_RUN},
                                         {"compare", UNIPT_OP_COMPARE},
                                         {"sweep", UNIPT_OP_SWEEP},
                                         {"guidance", UNIPT_OP_GUIDANCE},
                                         {"check", -1}};
  const std::map<std::string, std::string> help{
      {"run", "Train the configured strategy"},
      {"compare", "Train every strategy in experiment.kinds"},
      {"sweep", "Train UniPT for every reduction in experiment.reductions"},
      {"guidance", "Compare UniPT against guided UniPT"},
      {"check", "Validate the config and exit"}};
  for (const auto& [verb, op] : verbs) {
    auto* sub = app.add_subcommand(verb, help.at(verb));
    sub->add_option("--config", config_path, "Run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    if (op < 0) continue;
    sub->add_option("--out", out_dir, "Report directory (default: output.path)");
    sub->add_option("--seed", seed, "Override the run and task seeds");
    sub->add_option("--format", format, "Terminal output (default: output.format)")
        ->check(CLI::IsMember({"table", "csv", "both"}));
  }
  CLI11_PARSE(app, argc, argv);

  const std::string verb = app.get_subcommands().front()->get_name();
  unipt_config* raw_config = nullptr;
  if (unipt_config_load(config_path.c_str(), &raw_config) != UNIPT_OK) {
    std::cerr << "unipt: " << unipt_last_error() << "\n";
    return kExitConfig;
  }
  ConfigPtr config(raw_config);
  if (seed && unipt_config_set_seed(config.get(), *seed) != UNIPT_OK) return report_error("seed");

  if (verb == "check") {
    std::cout << "config ok: " << config_path << "\n";
    return 0;
  }
  if (unipt_config_set_operation(config.get(), static_cast<unipt_operation>(verbs.at(verb))) !=
      UNIPT_OK) {
    std::cerr << "unipt: " << unipt_last_error() << "\n";
    return kExitConfig;
  }

  if (format.empty()) format = unipt_config_output_format(config.get());
  if (out_dir.empty()) out_dir = unipt_config_output_path(config.get());

  unipt_result* raw_result = nullptr;
  if (unipt_execute(config.get(), &raw_result) != UNIPT_OK) return report_error(verb);
  ResultPtr result(raw_result);

  if (format == "table" || format == "both") {
    if (!print(unipt_result_table, result.get())) return report_error("table");
  }
  if (format == "csv" || format == "both") {
    if (!print(unipt_result_csv, result.get())) return report_error("csv");
  }
  if (unipt_result_write(result.get(), out_dir.c_str()) != UNIPT_OK) return report_error("write");
  std::cerr << "reports written to " << out_dir << "\n";
  return 0;
}
