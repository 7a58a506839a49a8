// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "unipt/config.hpp"
#include "unipt/error.hpp"
#include "unipt/report.hpp"
#include "unipt/runner.hpp"

namespace unipt {
namespace {

constexpr const char* kMinimal = R"ini(
[backbone]
kind = transformer

[strategy]
kind = UniPT
)ini";

std::vector<std::string> errors_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

StrategyReport row(const std::string& label, StrategyKind kind, std::size_t bytes, double val) {
  StrategyReport r;
  r.label = label;
  r.kind = kind;
  r.reduction = 2;
  r.lr = 0.1;
  r.memory = {{{kCategorySide, bytes}}, bytes};
  r.trace = {{0, 1.0, 1.0}, {10, val, val}};
  r.initial_val_loss = 1.0;
  r.final_val_loss = val;
  r.best_val_loss = val;
  r.lr_results = {{0.1, val}, {1.0, std::numeric_limits<double>::infinity()}};
  return r;
}

TEST(Config, MinimalFileGetsDefaults) {
  const RunConfig c = parse_config(kMinimal);
  EXPECT_EQ(c.backbone.kind, BackboneKind::kTransformer);
  EXPECT_EQ(c.run.kind, StrategyKind::kUniPT);
  EXPECT_EQ(c.run.options.reduction, 2u);
  EXPECT_EQ(c.experiment.operation, Operation::kRun);
  EXPECT_EQ(c.output.format, OutputFormat::kBoth);
  RunConfig expected;
  expected.backbone.kind = BackboneKind::kTransformer;
  EXPECT_EQ(c, expected);
}

TEST(Config, SerializedFormRoundTrips) {
  RunConfig c = parse_config(R"ini(
# comment
[backbone]
kind = cnn
[cnn]
channels = 8, 16, 16, 32, 32
[strategy]
kind = LST
lst_kept_layers = 1, 3
init_scale = 0.0312345678901234
init_mode = fan_in
[optimizer]
lr_grid = 3, 1.5
[experiment]
operation = compare
kinds = UniPT, LST, FullFT
[output]
format = csv
)ini");
  EXPECT_EQ(c.backbone.cnn.channels, (std::vector<std::size_t>{8, 16, 16, 32, 32}));
  EXPECT_EQ(c.run.options.init_mode, InitMode::kFanIn);
  EXPECT_EQ(parse_config(serialize_config(c)), c);
  EXPECT_EQ(serialize_config(parse_config(serialize_config(c))), serialize_config(c));
}

TEST(Config, NonDividingReductionNamesBothNumbers) {
  const auto errors = errors_of(std::string(kMinimal) + "reduction = 3\n");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0], "reduction factor 3 does not divide output dimension 64");
}

TEST(Config, EveryErrorIsReported) {
  const auto errors = errors_of(R"ini(
[backbone]
kind = transformer
[strategy]
kind = UniPT
reduction = abc
[optimizer]
steps = -4
colour = blue
[nowhere]
)ini");
  ASSERT_EQ(errors.size(), 4u);
  EXPECT_TRUE(errors[0].starts_with("line 6: strategy.reduction"));
  EXPECT_TRUE(errors[1].starts_with("line 8: optimizer.steps"));
  EXPECT_EQ(errors[2], "line 9: unknown key 'colour' in [optimizer]");
  EXPECT_EQ(errors[3], "line 10: unknown section [nowhere]");
}

TEST(Config, SemanticErrorsAreCollectedToo) {
  const auto errors = errors_of(R"ini(
[backbone]
kind = transformer
[strategy]
kind = UniPT
[task]
layer = 12
target_dim = 0
)ini");
  ASSERT_EQ(errors.size(), 2u);
  EXPECT_TRUE(mentions(errors, "task.layer 12"));
  EXPECT_TRUE(mentions(errors, "task.target_dim must be positive"));
  const auto backbone = errors_of("[backbone]\nkind = transformer\n[transformer]\ndim = 60\n"
                                  "heads = 7\n[strategy]\nkind = UniPT\n[optimizer]\nbatch = 0\n");
  ASSERT_EQ(backbone.size(), 2u);
  EXPECT_EQ(backbone[0], "transformer.heads 7 must divide transformer.dim 60");
  EXPECT_EQ(backbone[1], "optimizer.batch must be positive");
}

TEST(Config, UnknownKeysDoNotHideSemanticErrors) {
  const auto errors = errors_of(std::string(kMinimal) + "reduction = 5\nwidth = 2\n");
  ASSERT_EQ(errors.size(), 2u);
  EXPECT_EQ(errors[0], "line 8: unknown key 'width' in [strategy]");
  EXPECT_EQ(errors[1], "reduction factor 5 does not divide output dimension 64");
}

TEST(Config, RequiredAndDuplicateKeys) {
  auto errors = errors_of("[backbone]\nkind = cnn\n");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0], "missing required key strategy.kind");
  errors = errors_of(std::string(kMinimal) + "kind = LST\n");
  EXPECT_TRUE(mentions(errors, "duplicate key strategy.kind"));
  errors = errors_of("kind = cnn\n[backbone\n");
  EXPECT_TRUE(mentions(errors, "line 1: key 'kind' outside any section"));
  EXPECT_TRUE(mentions(errors, "line 2: malformed section header"));
}

TEST(Config, OperationRequirements) {
  auto errors = errors_of(std::string(kMinimal) + "[experiment]\noperation = sweep\n");
  EXPECT_TRUE(mentions(errors, "sweep needs experiment.reductions"));
  errors = errors_of(std::string(kMinimal) +
                     "[experiment]\noperation = sweep\nreductions = 8, 5\n");
  EXPECT_TRUE(mentions(errors, "sweep reduction factor 5 does not divide output dimension 64"));
  errors = errors_of("[backbone]\nkind = cnn\n[strategy]\nkind = UniPT\n[experiment]\n"
                     "operation = guidance\n");
  EXPECT_TRUE(mentions(errors, "guidance needs backbone.kind = transformer"));
}

TEST(Config, ErrorMessageListsEverything) {
  try {
    parse_config("[backbone]\n[strategy]\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("2 config error(s)"), std::string::npos) << e.what();
  }
}

TEST(Config, LoadReportsMissingFiles) {
  try {
    load_config("/nonexistent/unipt.ini");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Config, GuideSpecFollowsTheBackboneInput) {
  RunConfig c = parse_config(std::string(kMinimal) + "[guide]\ndim = 32\ndepth = 2\n");
  const auto g = guide_backbone_spec(c);
  ASSERT_TRUE(g.has_value());
  EXPECT_EQ(g->transformer.token_dim(), c.backbone.transformer.token_dim());
  EXPECT_EQ(g->transformer.depth, 2u);
  c.guide.self_guided = true;
  EXPECT_FALSE(guide_backbone_spec(c).has_value());
}

TEST(Config, ShippedExamplesAreValid) {
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(UNIPT_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    ++files;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
  }
  EXPECT_GE(files, 5u);
}

TEST(Report, NineSignificantDigits) {
  EXPECT_EQ(format9(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(format9(123456789012.0), "1.23456789e+11");
  EXPECT_EQ(format9(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(round9(1.0 / 3.0), 0.333333333);
  EXPECT_EQ(round9(0.0), 0.0);
}

TEST(Report, JsonMatchesTheSchema) {
  const RunConfig config = parse_config(kMinimal);
  Comparison c;
  c.rows = {row("UniPT", StrategyKind::kUniPT, 100, 0.02), row("LST", StrategyKind::kLST, 50, 0.05)};
  c.checks = {{"demo", true, "ok"}};
  nlohmann::json doc = report_json(config, c);
  EXPECT_TRUE(validate_report_json(doc).empty());
  EXPECT_EQ(doc["schema"], kReportSchema);
  EXPECT_TRUE(doc["all_passed"].get<bool>());
  EXPECT_TRUE(doc["reports"][0]["lr_results"][1]["final_val_loss"].is_null());
  EXPECT_EQ(doc["config"]["strategy"]["reduction"], 2);
  EXPECT_EQ(doc["config"]["backbone"]["kind"], "transformer");
  EXPECT_EQ(doc["reports"][0]["retained_bytes"]["side"], 100);
  EXPECT_EQ(doc["reports"][0]["retained_bytes"]["backbone"], 0);

  nlohmann::json extra = doc;
  extra["reports"][0]["surprise"] = 1;
  const auto errors = validate_report_json(extra);
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0], "reports[0] has unknown field 'surprise'");

  nlohmann::json missing = doc;
  missing["config"]["task"].erase("noise");
  EXPECT_FALSE(validate_report_json(missing).empty());

  EXPECT_TRUE(validate_report_json(nlohmann::json::parse(doc.dump())).empty());
}

TEST(Report, CsvHasOneLinePerRow) {
  Comparison c;
  c.rows = {row("UniPT", StrategyKind::kUniPT, 100, 0.02), row("a,b", StrategyKind::kLST, 50, 0.05)};
  const std::string csv = report_csv(c);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0],
            "label,kind,reduction,lr,trainable_params,peak_bytes,bytes_input,bytes_backbone,"
            "bytes_tap,bytes_side,initial_val_loss,final_train_loss,final_val_loss,"
            "best_val_loss,wall_clock_seconds");
  EXPECT_TRUE(lines[2].starts_with("\"a,b\",LST,2,0.1,0,50,0,0,0,50,1,"));
}

TEST(Report, PlotdataIsSortedByBytesAndMatchesTheLedger) {
  const std::vector<StrategyReport> rows{row("big", StrategyKind::kFullFT, 300, 0.1),
                                         row("small", StrategyKind::kUniPT, 100, 0.2),
                                         row("tie", StrategyKind::kLST, 100, 0.3)};
  const auto points = plot_points(rows);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[0].label, "small");
  EXPECT_EQ(points[1].label, "tie");
  EXPECT_EQ(points[2].peak_bytes, rows[0].memory.peak_total);
  EXPECT_EQ(plotdata_csv(rows),
            "label,peak_bytes,final_val_loss\nsmall,100,0.2\ntie,100,0.3\nbig,300,0.1\n");
  EXPECT_THROW(plot_points({}), Error);
}

TEST(Report, TableShowsRowsAndChecks) {
  Comparison c;
  c.rows = {row("UniPT", StrategyKind::kUniPT, 100, 0.02)};
  c.checks = {{"memory_order", false, "detail"}};
  const std::string table = report_table(c);
  EXPECT_NE(table.find("UniPT"), std::string::npos);
  EXPECT_NE(table.find("FAIL memory_order: detail"), std::string::npos);
}

TEST(Runner, ExecutesAndWritesIdenticalReportsForIdenticalSeeds) {
  const RunConfig config = parse_config(std::string(kMinimal) + R"ini(
[task]
train_size = 4
val_size = 2
[optimizer]
steps = 3
batch = 2
lr_grid = 1
eval_every = 1
[experiment]
operation = compare
kinds = UniPT, PartialDown
)ini");
  const Comparison a = execute(config);
  const Comparison b = execute(config);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(report_json(config, a).dump(), report_json(config, b).dump());

  const auto dir = std::filesystem::temp_directory_path() / "unipt-runner-test";
  std::filesystem::remove_all(dir);
  const auto written = write_reports(config, a, dir.string());
  ASSERT_EQ(written.size(), 3u);
  std::ifstream json_in(dir / kReportJsonFile);
  const auto doc = nlohmann::json::parse(json_in);
  EXPECT_TRUE(validate_report_json(doc).empty());
  std::ifstream plot_in(dir / kPlotdataFile);
  std::stringstream plot;
  plot << plot_in.rdbuf();
  EXPECT_EQ(plot.str(), plotdata_csv(a.rows));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace unipt
