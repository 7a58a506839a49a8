// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace unipt {
namespace {

using Kind = ConfigEntry::Kind;

// Thrown by value parsers; turned into a located message by the caller.
struct BadValue {
  std::string message;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
    throw BadValue{"expected a non-negative integer, got '" + std::string(s) + "'"};
  }
  return v;
}

double parse_real(std::string_view s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw BadValue{"expected a finite number, got '" + std::string(s) + "'"};
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw BadValue{"expected true or false, got '" + std::string(s) + "'"};
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (out.back().empty()) throw BadValue{"empty list element in '" + std::string(s) + "'"};
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string real_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& fn) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fn(values[i]);
  }
  return out;
}

std::string_view init_mode_name(InitMode m) { return m == InitMode::kFanIn ? "fan_in" : "fixed"; }

InitMode parse_init_mode(std::string_view s) {
  if (s == "fixed") return InitMode::kFixed;
  if (s == "fan_in") return InitMode::kFanIn;
  throw BadValue{"unknown init mode '" + std::string(s) + "' (fixed, fan_in)"};
}

std::string_view residual_name(ChunkResidual r) {
  return r == ChunkResidual::kNone ? "none" : "chunk_mean";
}

ChunkResidual parse_residual(std::string_view s) {
  if (s == "chunk_mean") return ChunkResidual::kChunkMean;
  if (s == "none") return ChunkResidual::kNone;
  throw BadValue{"unknown chunk residual '" + std::string(s) + "' (chunk_mean, none)"};
}

// Library parsers throw Error; convert to BadValue so the message is located.
template <typename F>
auto rethrow(F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw BadValue{e.what()};
  }
}

struct Field {
  std::string section;
  std::string key;
  Kind kind;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Member>
Field size_field(std::string section, std::string key, Member member) {
  return {std::move(section), std::move(key), Kind::kInteger,
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, std::string_view v) {
            member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_u64(v));
          }};
}

template <typename Member>
Field real_field(std::string section, std::string key, Member member) {
  return {std::move(section), std::move(key), Kind::kReal,
          [member](const RunConfig& c) { return real_text(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, std::string_view v) { member(c) = parse_real(v); }};
}

template <typename Member>
Field bool_field(std::string section, std::string key, Member member) {
  return {std::move(section), std::move(key), Kind::kBoolean,
          [member](const RunConfig& c) {
            return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false");
          },
          [member](RunConfig& c, std::string_view v) { member(c) = parse_bool(v); }};
}

template <typename Member>
Field size_list_field(std::string section, std::string key, Member member) {
  return {std::move(section), std::move(key), Kind::kIntegerList,
          [member](const RunConfig& c) {
            return join(member(const_cast<RunConfig&>(c)),
                        [](std::size_t v) { return std::to_string(v); });
          },
          [member](RunConfig& c, std::string_view v) {
            std::vector<std::size_t> out;
            for (auto item : split_list(v)) out.push_back(parse_u64(item));
            member(c) = std::move(out);
          }};
}

#define UNIPT_MEMBER(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"backbone", "kind", Kind::kText,
                 [](const RunConfig& c) { return std::string(to_string(c.backbone.kind)); },
                 [](RunConfig& c, std::string_view v) {
                   c.backbone.kind = rethrow([&] { return parse_backbone_kind(v); });
                 }});

    f.push_back(size_field("transformer", "depth", UNIPT_MEMBER(c.backbone.transformer.depth)));
    f.push_back(size_field("transformer", "dim", UNIPT_MEMBER(c.backbone.transformer.dim)));
    f.push_back(size_field("transformer", "heads", UNIPT_MEMBER(c.backbone.transformer.heads)));
    f.push_back(size_field("transformer", "tokens", UNIPT_MEMBER(c.backbone.transformer.tokens)));
    f.push_back(
        size_field("transformer", "input_dim", UNIPT_MEMBER(c.backbone.transformer.input_dim)));
    f.push_back(
        size_field("transformer", "mlp_ratio", UNIPT_MEMBER(c.backbone.transformer.mlp_ratio)));
    f.push_back(real_field("transformer", "mixing", UNIPT_MEMBER(c.backbone.transformer.mixing)));
    f.push_back(size_field("transformer", "seed", UNIPT_MEMBER(c.backbone.transformer.seed)));

    f.push_back(size_field("cnn", "in_channels", UNIPT_MEMBER(c.backbone.cnn.in_channels)));
    f.push_back(size_field("cnn", "image", UNIPT_MEMBER(c.backbone.cnn.image)));
    f.push_back(size_list_field("cnn", "channels", UNIPT_MEMBER(c.backbone.cnn.channels)));
    f.push_back(real_field("cnn", "mixing", UNIPT_MEMBER(c.backbone.cnn.mixing)));
    f.push_back(size_field("cnn", "seed", UNIPT_MEMBER(c.backbone.cnn.seed)));

    f.push_back(
        size_field("encdec", "encoder_depth", UNIPT_MEMBER(c.backbone.encdec.encoder_depth)));
    f.push_back(
        size_field("encdec", "decoder_depth", UNIPT_MEMBER(c.backbone.encdec.decoder_depth)));
    f.push_back(size_field("encdec", "dim", UNIPT_MEMBER(c.backbone.encdec.dim)));
    f.push_back(size_field("encdec", "heads", UNIPT_MEMBER(c.backbone.encdec.heads)));
    f.push_back(
        size_field("encdec", "source_tokens", UNIPT_MEMBER(c.backbone.encdec.source_tokens)));
    f.push_back(
        size_field("encdec", "target_tokens", UNIPT_MEMBER(c.backbone.encdec.target_tokens)));
    f.push_back(size_field("encdec", "mlp_ratio", UNIPT_MEMBER(c.backbone.encdec.mlp_ratio)));
    f.push_back(real_field("encdec", "mixing", UNIPT_MEMBER(c.backbone.encdec.mixing)));
    f.push_back(size_field("encdec", "seed", UNIPT_MEMBER(c.backbone.encdec.seed)));

    f.push_back({"strategy", "kind", Kind::kText,
                 [](const RunConfig& c) { return std::string(to_string(c.run.kind)); },
                 [](RunConfig& c, std::string_view v) {
                   c.run.kind = rethrow([&] { return parse_strategy_kind(v); });
                 }});
    f.push_back(size_field("strategy", "reduction", UNIPT_MEMBER(c.run.options.reduction)));
    f.push_back(size_field("strategy", "adapter_reduction",
                           UNIPT_MEMBER(c.run.options.adapter_reduction)));
    f.push_back(size_list_field("strategy", "lst_kept_layers",
                                UNIPT_MEMBER(c.run.options.lst_kept_layers)));
    f.push_back(size_field("strategy", "partial_up_blocks",
                           UNIPT_MEMBER(c.run.options.partial_up_blocks)));
    f.push_back(size_field("strategy", "mhsa_heads", UNIPT_MEMBER(c.run.options.mhsa_heads)));
    f.push_back(real_field("strategy", "init_scale", UNIPT_MEMBER(c.run.options.init_scale)));
    f.push_back({"strategy", "init_mode", Kind::kText,
                 [](const RunConfig& c) { return std::string(init_mode_name(c.run.options.init_mode)); },
                 [](RunConfig& c, std::string_view v) { c.run.options.init_mode = parse_init_mode(v); }});
    f.push_back(
        real_field("strategy", "mlp_init_factor", UNIPT_MEMBER(c.run.options.mlp_init_factor)));
    f.push_back(bool_field("strategy", "include_embeddings",
                           UNIPT_MEMBER(c.run.options.include_embeddings)));
    f.push_back({"strategy", "chunk_residual", Kind::kText,
                 [](const RunConfig& c) {
                   return std::string(residual_name(c.run.options.chunk_residual));
                 },
                 [](RunConfig& c, std::string_view v) {
                   c.run.options.chunk_residual = parse_residual(v);
                 }});

    f.push_back(size_field("task", "layer", UNIPT_MEMBER(c.task.layer)));
    f.push_back(real_field("task", "noise", UNIPT_MEMBER(c.task.noise)));
    f.push_back(size_field("task", "train_size", UNIPT_MEMBER(c.task.train_size)));
    f.push_back(size_field("task", "val_size", UNIPT_MEMBER(c.task.val_size)));
    f.push_back(size_field("task", "target_dim", UNIPT_MEMBER(c.task.target_dim)));
    f.push_back(real_field("task", "token_correlation", UNIPT_MEMBER(c.task.token_correlation)));
    f.push_back(size_field("task", "seed", UNIPT_MEMBER(c.task.seed)));
    f.push_back({"task", "loss", Kind::kText,
                 [](const RunConfig& c) { return std::string(to_string(c.task.loss)); },
                 [](RunConfig& c, std::string_view v) {
                   c.task.loss = rethrow([&] { return parse_loss_kind(v); });
                 }});

    f.push_back(real_field("optimizer", "lr", UNIPT_MEMBER(c.run.optimizer.lr)));
    f.push_back(size_field("optimizer", "steps", UNIPT_MEMBER(c.run.optimizer.steps)));
    f.push_back(size_field("optimizer", "batch", UNIPT_MEMBER(c.run.optimizer.batch)));
    f.push_back({"optimizer", "lr_grid", Kind::kRealList,
                 [](const RunConfig& c) { return join(c.run.optimizer.lr_grid, real_text); },
                 [](RunConfig& c, std::string_view v) {
                   std::vector<double> out;
                   for (auto item : split_list(v)) out.push_back(parse_real(item));
                   c.run.optimizer.lr_grid = std::move(out);
                 }});
    f.push_back(size_field("optimizer", "eval_every", UNIPT_MEMBER(c.run.optimizer.eval_every)));
    f.push_back(
        size_field("optimizer", "train_eval_size", UNIPT_MEMBER(c.run.optimizer.train_eval_size)));

    f.push_back(size_field("run", "seed", UNIPT_MEMBER(c.run.seed)));
    f.push_back(bool_field("run", "record_timing", UNIPT_MEMBER(c.run.record_timing)));

    f.push_back({"experiment", "operation", Kind::kText,
                 [](const RunConfig& c) { return std::string(to_string(c.experiment.operation)); },
                 [](RunConfig& c, std::string_view v) {
                   c.experiment.operation = rethrow([&] { return parse_operation(v); });
                 }});
    f.push_back({"experiment", "kinds", Kind::kTextList,
                 [](const RunConfig& c) {
                   return join(c.experiment.kinds,
                               [](StrategyKind k) { return std::string(to_string(k)); });
                 },
                 [](RunConfig& c, std::string_view v) {
                   std::vector<StrategyKind> out;
                   for (auto item : split_list(v)) {
                     out.push_back(rethrow([&] { return parse_strategy_kind(item); }));
                   }
                   c.experiment.kinds = std::move(out);
                 }});
    f.push_back(
        size_list_field("experiment", "reductions", UNIPT_MEMBER(c.experiment.reductions)));

    f.push_back(bool_field("guide", "self_guided", UNIPT_MEMBER(c.guide.self_guided)));
    f.push_back(size_field("guide", "depth", UNIPT_MEMBER(c.guide.depth)));
    f.push_back(size_field("guide", "dim", UNIPT_MEMBER(c.guide.dim)));
    f.push_back(size_field("guide", "heads", UNIPT_MEMBER(c.guide.heads)));
    f.push_back(size_field("guide", "mlp_ratio", UNIPT_MEMBER(c.guide.mlp_ratio)));
    f.push_back(real_field("guide", "mixing", UNIPT_MEMBER(c.guide.mixing)));
    f.push_back(size_field("guide", "seed", UNIPT_MEMBER(c.guide.seed)));

    f.push_back({"output", "path", Kind::kText, [](const RunConfig& c) { return c.output.path; },
                 [](RunConfig& c, std::string_view v) {
                   if (v.empty()) throw BadValue{"output path must not be empty"};
                   c.output.path = std::string(v);
                 }});
    f.push_back({"output", "format", Kind::kText,
                 [](const RunConfig& c) { return std::string(to_string(c.output.format)); },
                 [](RunConfig& c, std::string_view v) {
                   c.output.format = rethrow([&] { return parse_output_format(v); });
                 }});
    return f;
  }();
  return table;
}

#undef UNIPT_MEMBER

const std::set<std::pair<std::string, std::string>> kRequired{{"backbone", "kind"},
                                                              {"strategy", "kind"}};

std::string join_errors(const std::vector<std::string>& errors) {
  std::string out = std::to_string(errors.size()) + " config error(s):";
  for (const auto& e : errors) out += "\n  " + e;
  return out;
}

std::size_t tap_count(const BackboneSpec& spec) {
  switch (spec.kind) {
    case BackboneKind::kTransformer:
      return spec.transformer.depth + 1;
    case BackboneKind::kCnn:
      return spec.cnn.stages();
    case BackboneKind::kEncDec:
      return spec.encdec.decoder_depth + 1;
  }
  return 0;
}

void check_divides(std::vector<std::string>& errors, std::size_t dim, std::size_t r,
                   const std::string& what) {
  if (r == 0) {
    errors.push_back(what + " must be positive");
  } else if (dim % r != 0) {
    errors.push_back(what + " " + std::to_string(r) + " does not divide output dimension " +
                     std::to_string(dim));
  }
}

}  // namespace

std::string_view to_string(Operation op) {
  switch (op) {
    case Operation::kRun:
      return "run";
    case Operation::kCompare:
      return "compare";
    case Operation::kSweep:
      return "sweep";
    case Operation::kGuidance:
      return "guidance";
  }
  return "run";
}

Operation parse_operation(std::string_view name) {
  for (auto op : {Operation::kRun, Operation::kCompare, Operation::kSweep, Operation::kGuidance}) {
    if (to_string(op) == name) return op;
  }
  throw Error(ErrorCode::kConfig, "unknown operation '" + std::string(name) +
                                      "' (run, compare, sweep, guidance)");
}

std::string_view to_string(OutputFormat format) {
  switch (format) {
    case OutputFormat::kTable:
      return "table";
    case OutputFormat::kCsv:
      return "csv";
    case OutputFormat::kBoth:
      return "both";
  }
  return "both";
}

OutputFormat parse_output_format(std::string_view name) {
  for (auto f : {OutputFormat::kTable, OutputFormat::kCsv, OutputFormat::kBoth}) {
    if (to_string(f) == name) return f;
  }
  throw Error(ErrorCode::kConfig,
              "unknown output format '" + std::string(name) + "' (table, csv, both)");
}

ConfigError::ConfigError(std::vector<std::string> errors)
    : Error(ErrorCode::kConfig, join_errors(errors)), errors_(std::move(errors)) {}

RunConfig parse_config(std::string_view text) {
  std::map<std::pair<std::string, std::string>, const Field*> index;
  std::set<std::string> sections;
  for (const auto& f : fields()) {
    index[{f.section, f.key}] = &f;
    sections.insert(f.section);
  }

  RunConfig config;
  std::vector<std::string> errors;
  std::set<std::pair<std::string, std::string>> seen;
  std::string section;
  bool section_known = false;
  bool values_ok = true;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + "malformed section header '" + std::string(line) + "'");
        section_known = false;
        continue;
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      section_known = sections.count(section) > 0;
      if (!section_known) errors.push_back(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back(where + "expected 'key = value', got '" + std::string(line) + "'");
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) {
      errors.push_back(where + "key '" + key + "' outside any section");
      continue;
    }
    if (!section_known) continue;  // already reported
    auto it = index.find({section, key});
    if (it == index.end()) {
      errors.push_back(where + "unknown key '" + key + "' in [" + section + "]");
      continue;
    }
    if (!seen.insert({section, key}).second) {
      errors.push_back(where + "duplicate key " + section + "." + key);
      continue;
    }
    try {
      it->second->set(config, value);
    } catch (const BadValue& e) {
      errors.push_back(where + section + "." + key + ": " + e.message);
      values_ok = false;
    }
  }
  for (const auto& [s, k] : kRequired) {
    if (!seen.count({s, k})) {
      errors.push_back("missing required key " + s + "." + k);
      values_ok = false;
    }
  }
  // Cross-field checks need every value; unknown keys do not affect them.
  if (values_ok) {
    for (auto& e : validate_config(config)) errors.push_back(std::move(e));
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> errors;
  const auto& b = c.backbone;
  bool backbone_ok = true;
  auto fail = [&](std::string message) {
    errors.push_back(std::move(message));
    backbone_ok = false;
  };
  switch (b.kind) {
    case BackboneKind::kTransformer: {
      const auto& t = b.transformer;
      if (t.depth == 0) fail("transformer.depth must be positive");
      if (t.tokens == 0) fail("transformer.tokens must be positive");
      if (t.mlp_ratio == 0) fail("transformer.mlp_ratio must be positive");
      if (t.heads == 0 || t.dim == 0 || t.dim % t.heads != 0) {
        fail("transformer.heads " + std::to_string(t.heads) + " must divide transformer.dim " +
             std::to_string(t.dim));
      }
      break;
    }
    case BackboneKind::kCnn:
      try {
        b.cnn.validate();
      } catch (const Error& e) {
        fail(std::string("cnn: ") + e.what());
      }
      break;
    case BackboneKind::kEncDec: {
      const auto& e = b.encdec;
      if (e.encoder_depth == 0 || e.decoder_depth == 0) fail("encdec depths must be positive");
      if (e.source_tokens == 0 || e.target_tokens == 0) fail("encdec token counts must be positive");
      if (e.mlp_ratio == 0) fail("encdec.mlp_ratio must be positive");
      if (e.heads == 0 || e.dim == 0 || e.dim % e.heads != 0) {
        fail("encdec.heads " + std::to_string(e.heads) + " must divide encdec.dim " +
             std::to_string(e.dim));
      }
      break;
    }
  }
  if (backbone_ok) {
    const std::size_t D = b.output_dim();
    check_divides(errors, D, c.run.options.reduction, "reduction factor");
    if (c.experiment.operation == Operation::kSweep) {
      for (auto r : c.experiment.reductions) {
        check_divides(errors, D, r, "sweep reduction factor");
      }
    }
    const std::size_t taps = tap_count(b);
    if (c.task.layer + 1 >= taps) {
      errors.push_back("task.layer " + std::to_string(c.task.layer) + " out of range 0.." +
                       std::to_string(taps - 2));
    }
    for (auto k : c.run.options.lst_kept_layers) {
      if (k == 0 || k >= taps) {
        errors.push_back("strategy.lst_kept_layers entry " + std::to_string(k) +
                         " out of range 1.." + std::to_string(taps - 1));
      }
    }
  }
  if (c.run.options.adapter_reduction == 0) errors.push_back("strategy.adapter_reduction must be positive");
  if (c.run.options.mhsa_heads == 0) errors.push_back("strategy.mhsa_heads must be positive");
  if (!(c.run.options.init_scale > 0.0)) errors.push_back("strategy.init_scale must be positive");
  if (c.run.options.mlp_init_factor < 0.0) errors.push_back("strategy.mlp_init_factor must be >= 0");
  if (c.task.noise < 0.0) errors.push_back("task.noise must be >= 0");
  if (c.task.train_size == 0 || c.task.val_size == 0) {
    errors.push_back("task.train_size and task.val_size must be positive");
  }
  if (c.task.target_dim == 0) errors.push_back("task.target_dim must be positive");
  if (c.task.token_correlation < 0.0 || c.task.token_correlation > 1.0) {
    errors.push_back("task.token_correlation must lie in [0, 1]");
  }
  if (!(c.run.optimizer.lr > 0.0)) errors.push_back("optimizer.lr must be positive");
  if (c.run.optimizer.batch == 0) errors.push_back("optimizer.batch must be positive");
  if (c.run.optimizer.eval_every == 0) errors.push_back("optimizer.eval_every must be positive");
  for (double m : c.run.optimizer.lr_grid) {
    if (!(m > 0.0)) errors.push_back("optimizer.lr_grid entries must be positive");
  }
  switch (c.experiment.operation) {
    case Operation::kRun:
      break;
    case Operation::kCompare:
      if (c.experiment.kinds.empty()) errors.push_back("compare needs experiment.kinds");
      break;
    case Operation::kSweep:
      if (c.experiment.reductions.empty()) errors.push_back("sweep needs experiment.reductions");
      break;
    case Operation::kGuidance:
      if (b.kind != BackboneKind::kTransformer) {
        errors.push_back("guidance needs backbone.kind = transformer");
      }
      if (!c.guide.self_guided) {
        if (c.guide.depth == 0) errors.push_back("guide.depth must be positive");
        if (c.guide.mlp_ratio == 0) errors.push_back("guide.mlp_ratio must be positive");
        if (c.guide.heads == 0 || c.guide.dim == 0 || c.guide.dim % c.guide.heads != 0) {
          errors.push_back("guide.heads " + std::to_string(c.guide.heads) +
                           " must divide guide.dim " + std::to_string(c.guide.dim));
        }
      }
      break;
  }
  return errors;
}

std::vector<ConfigEntry> config_entries(const RunConfig& config) {
  std::vector<ConfigEntry> out;
  for (const auto& f : fields()) out.push_back({f.section, f.key, f.get(config), f.kind});
  return out;
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& e : config_entries(config)) {
    if (e.section != section) {
      if (!section.empty()) out += "\n";
      section = e.section;
      out += "[" + section + "]\n";
    }
    out += e.key + " = " + e.value + "\n";
  }
  return out;
}

std::optional<BackboneSpec> guide_backbone_spec(const RunConfig& config) {
  if (config.guide.self_guided) return std::nullopt;
  BackboneSpec spec;
  spec.kind = BackboneKind::kTransformer;
  auto& t = spec.transformer;
  t.depth = config.guide.depth;
  t.dim = config.guide.dim;
  t.heads = config.guide.heads;
  t.mlp_ratio = config.guide.mlp_ratio;
  t.mixing = config.guide.mixing;
  t.seed = config.guide.seed;
  t.tokens = config.backbone.transformer.tokens;
  t.input_dim = config.backbone.transformer.token_dim();
  return spec;
}

}  // namespace unipt
