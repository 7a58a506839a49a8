// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "unipt/unipt.h"

namespace {

namespace fs = std::filesystem;

constexpr const char* kSmallCompare = R"ini([backbone]
kind = transformer

[transformer]
depth = 2
dim = 16
heads = 2
tokens = 4

[strategy]
kind = UniPT

[task]
train_size = 4
val_size = 2

[optimizer]
steps = 2
batch = 2
lr_grid = 1
eval_every = 1

[experiment]
operation = compare
kinds = UniPT, LST, Adapter, FullFT
)ini";

std::string take(char* text) {
  std::string out = text ? text : "";
  unipt_string_free(text);
  return out;
}

struct Temp {
  fs::path dir;
  Temp() {
    dir = fs::temp_directory_path() / ("unipt-capi-" + std::to_string(std::rand()));
    fs::create_directories(dir);
  }
  ~Temp() { fs::remove_all(dir); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }
};

struct Outcome {
  int status = 0;
  std::string out;
};

Outcome run_cli(const std::string& args) {
  const char* cli = std::getenv("UNIPT_CLI");
  Outcome o;
  if (!cli) {
    o.status = -1;
    return o;
  }
  const std::string command = std::string(cli) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

TEST(CApi, VersionAndNullArguments) {
  EXPECT_STREQ(unipt_version(), "1.0.0");
  EXPECT_EQ(unipt_config_parse(nullptr, nullptr), UNIPT_ERR_INVALID_ARGUMENT);
  EXPECT_STRNE(unipt_last_error(), "");
  EXPECT_EQ(unipt_result_row_count(nullptr), 0u);
  unipt_config_free(nullptr);
  unipt_result_free(nullptr);
  unipt_string_free(nullptr);
}

TEST(CApi, ParseErrorsAreListed) {
  unipt_config* config = nullptr;
  EXPECT_EQ(unipt_config_parse("[backbone]\nkind = transformer\n[strategy]\nkind = UniPT\n"
                               "reduction = 3\n[bogus]\n",
                               &config),
            UNIPT_ERR_CONFIG);
  EXPECT_EQ(config, nullptr);
  const std::string message = unipt_last_error();
  EXPECT_NE(message.find("unknown section [bogus]"), std::string::npos) << message;
  EXPECT_EQ(unipt_config_load("/nonexistent.ini", &config), UNIPT_ERR_IO);
}

TEST(CApi, ConfigAccessorsAndSerialisation) {
  unipt_config* config = nullptr;
  ASSERT_EQ(unipt_config_parse(kSmallCompare, &config), UNIPT_OK) << unipt_last_error();
  unipt_operation op = UNIPT_OP_RUN;
  ASSERT_EQ(unipt_config_get_operation(config, &op), UNIPT_OK);
  EXPECT_EQ(op, UNIPT_OP_COMPARE);
  EXPECT_STREQ(unipt_config_output_format(config), "both");
  EXPECT_STREQ(unipt_config_output_path(config), "unipt-out");
  EXPECT_EQ(unipt_config_set_operation(config, UNIPT_OP_SWEEP), UNIPT_ERR_CONFIG);
  EXPECT_NE(std::string(unipt_last_error()).find("experiment.reductions"), std::string::npos);
  ASSERT_EQ(unipt_config_get_operation(config, &op), UNIPT_OK);
  EXPECT_EQ(op, UNIPT_OP_COMPARE);
  ASSERT_EQ(unipt_config_set_seed(config, 99), UNIPT_OK);
  char* text = nullptr;
  ASSERT_EQ(unipt_config_serialize(config, &text), UNIPT_OK);
  const std::string canonical = take(text);
  EXPECT_NE(canonical.find("seed = 99"), std::string::npos);
  unipt_config* again = nullptr;
  ASSERT_EQ(unipt_config_parse(canonical.c_str(), &again), UNIPT_OK);
  ASSERT_EQ(unipt_config_serialize(again, &text), UNIPT_OK);
  EXPECT_EQ(take(text), canonical);
  unipt_config_free(again);
  unipt_config_free(config);
}

TEST(CApi, ExecuteRendersAndWritesReports) {
  unipt_config* config = nullptr;
  ASSERT_EQ(unipt_config_parse(kSmallCompare, &config), UNIPT_OK);
  unipt_result* result = nullptr;
  ASSERT_EQ(unipt_execute(config, &result), UNIPT_OK) << unipt_last_error();
  EXPECT_EQ(unipt_result_row_count(result), 4u);
  EXPECT_GT(unipt_result_check_count(result), 4u);
  char* text = nullptr;
  ASSERT_EQ(unipt_result_json(result, &text), UNIPT_OK);
  const std::string json = take(text);
  EXPECT_NE(json.find("\"schema\": \"unipt-report/1\""), std::string::npos);
  ASSERT_EQ(unipt_result_csv(result, &text), UNIPT_OK);
  EXPECT_EQ(take(text).rfind("label,kind,reduction", 0), 0u);
  ASSERT_EQ(unipt_result_table(result, &text), UNIPT_OK);
  EXPECT_NE(take(text).find("frozen_backbone:UniPT"), std::string::npos);
  ASSERT_EQ(unipt_result_plotdata(result, &text), UNIPT_OK);
  const std::string plot = take(text);
  EXPECT_EQ(plot.rfind("label,peak_bytes,final_val_loss\nUniPT,", 0), 0u) << plot;

  Temp temp;
  ASSERT_EQ(unipt_result_write(result, temp.dir.string().c_str()), UNIPT_OK);
  EXPECT_TRUE(fs::exists(temp.dir / "report.json"));
  EXPECT_TRUE(fs::exists(temp.dir / "report.csv"));
  EXPECT_TRUE(fs::exists(temp.dir / "plotdata.csv"));

  unipt_result* second = nullptr;
  ASSERT_EQ(unipt_execute(config, &second), UNIPT_OK);
  ASSERT_EQ(unipt_result_json(second, &text), UNIPT_OK);
  EXPECT_EQ(take(text), json);
  unipt_result_free(second);
  unipt_result_free(result);
  unipt_config_free(config);
}

TEST(Cli, CheckAcceptsValidConfig) {
  Temp temp;
  const auto path = temp.write("ok.ini", kSmallCompare);
  const Outcome o = run_cli("check --config " + path.string());
  ASSERT_NE(o.status, -1) << "UNIPT_CLI is not set";
  EXPECT_EQ(o.status, 0) << o.out;
  EXPECT_NE(o.out.find("config ok"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  Temp temp;
  const auto path = temp.write("bad.ini", "[backbone]\nkind = transformer\n[strategy]\n"
                                          "kind = UniPT\nreduction = 3\nwidth = 1\n");
  const Outcome o = run_cli("check --config " + path.string());
  EXPECT_EQ(o.status, 2) << o.out;
  EXPECT_NE(o.out.find("reduction factor 3 does not divide output dimension 64"), std::string::npos);
  EXPECT_NE(o.out.find("unknown key 'width'"), std::string::npos);
  EXPECT_NE(run_cli("run --config " + (temp.dir / "missing.ini").string()).status, 0);
  EXPECT_NE(run_cli("compare --config " + path.string() + " --format xml").status, 0);
}

TEST(Cli, CompareWritesReportsAndHonoursSeedAndFormat) {
  Temp temp;
  const auto path = temp.write("cmp.ini", kSmallCompare);
  const auto out_a = temp.dir / "a", out_b = temp.dir / "b", out_c = temp.dir / "c";
  const Outcome a = run_cli("compare --config " + path.string() + " --out " + out_a.string() +
                            " --seed 5 --format csv");
  ASSERT_EQ(a.status, 0) << a.out;
  EXPECT_NE(a.out.find("label,kind,reduction"), std::string::npos);
  EXPECT_EQ(a.out.find("PASS "), std::string::npos);
  ASSERT_EQ(run_cli("compare --config " + path.string() + " --out " + out_b.string() +
                    " --seed 5 --format table")
                .status,
            0);
  ASSERT_EQ(run_cli("compare --config " + path.string() + " --out " + out_c.string() +
                    " --seed 6")
                .status,
            0);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  EXPECT_EQ(slurp(out_a / "report.json"), slurp(out_b / "report.json"));
  EXPECT_NE(slurp(out_a / "report.json"), slurp(out_c / "report.json"));
  EXPECT_FALSE(slurp(out_a / "plotdata.csv").empty());
}

}  // namespace
