#pragma once

// Pipeline configuration: a UTF-8 file of dotted `section.key = value` lines
// ('#' starts a comment). Command-line flags of the same dotted name win.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "polyqa/corpus.hpp"
#include "polyqa/encoder.hpp"
#include "polyqa/error.hpp"
#include "polyqa/evalkit.hpp"
#include "polyqa/generator.hpp"
#include "polyqa/miner.hpp"
#include "polyqa/text.hpp"

namespace polyqa {

struct PipelineConfig {
  struct Paths {
    std::string corpus, passages, stats, index, encoder, link_table, instances, questions;
    std::string training_set, ledger, synthetic, retrievals, predictions, answers, report, report_tsv;
  } paths;

  IngestOptions corpus;

  struct EncoderSettings {
    std::string kind = "toy-hash";
    std::size_t dim = kDefaultDim;
    uint64_t seed = 0;
    std::string endpoint;
    std::size_t vocab_size = 4096;
    double init_scale = 1.0;
    bool freeze_question_tower = false;
  } encoder;

  struct GeneratorSettings {
    std::string kind = "toy-extractive";
    std::string endpoint;
    std::size_t prompt_passages = kDefaultPromptPassages;
    std::size_t max_answer_tokens = kDefaultMaxAnswerTokens;
    std::size_t max_in_flight = 4;
    std::vector<std::string> unextractable_markers;
  } generator;

  std::size_t retrieve_k = 10;
  std::size_t answer_k = kDefaultAnswerRetrieval;

  IterationConfig mining;
  TrainConfig train{.epochs = 30, .learning_rate = 30.0, .batch_size = 16, .seed = 0};

  std::size_t eval_k = 10;
  eval::CategoryConfig categories = eval::CategoryConfig::reference();

  void validate() const {
    if (encoder.kind != "toy-hash" && encoder.kind != "toy-trainable" && encoder.kind != "remote") {
      throw UsageError("encoder.kind must be toy-hash, toy-trainable or remote");
    }
    if (generator.kind != "toy-extractive" && generator.kind != "remote") {
      throw UsageError("generator.kind must be toy-extractive or remote");
    }
    if (encoder.dim == 0) throw UsageError("encoder.dim must be >= 1");
    if (retrieve_k == 0 || answer_k == 0 || eval_k == 0) throw UsageError("k values must be >= 1");
    mining.validate();
  }

  void set(const std::string& key, const std::string& value);

  // Every recognized key, for usage text and validation.
  static std::vector<std::string> keys();
};

namespace config_detail {

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected a boolean, got '" + v + "'");
}

inline std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = text::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& setters() {
  using C = PipelineConfig;
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto path = [&t](const std::string& name, std::string C::Paths::*member) {
      t["paths." + name] = [member](C& c, const std::string&, const std::string& v) { c.paths.*member = v; };
    };
    path("corpus", &C::Paths::corpus);
    path("passages", &C::Paths::passages);
    path("stats", &C::Paths::stats);
    path("index", &C::Paths::index);
    path("encoder", &C::Paths::encoder);
    path("link_table", &C::Paths::link_table);
    path("instances", &C::Paths::instances);
    path("questions", &C::Paths::questions);
    path("training_set", &C::Paths::training_set);
    path("ledger", &C::Paths::ledger);
    path("synthetic", &C::Paths::synthetic);
    path("retrievals", &C::Paths::retrievals);
    path("predictions", &C::Paths::predictions);
    path("answers", &C::Paths::answers);
    path("report", &C::Paths::report);
    path("report_tsv", &C::Paths::report_tsv);

    t["corpus.max_tokens"] = [](C& c, auto& k, auto& v) { c.corpus.max_tokens = to_size(k, v); };
    t["corpus.min_tokens"] = [](C& c, auto& k, auto& v) { c.corpus.min_tokens = to_size(k, v); };
    t["corpus.disambiguation_markers"] = [](C& c, auto&, auto& v) { c.corpus.disambiguation_markers = to_list(v); };

    t["encoder.kind"] = [](C& c, auto&, auto& v) { c.encoder.kind = v; };
    t["encoder.dim"] = [](C& c, auto& k, auto& v) { c.encoder.dim = to_size(k, v); };
    t["encoder.seed"] = [](C& c, auto& k, auto& v) { c.encoder.seed = to_size(k, v); };
    t["encoder.endpoint"] = [](C& c, auto&, auto& v) { c.encoder.endpoint = v; };
    t["encoder.vocab_size"] = [](C& c, auto& k, auto& v) { c.encoder.vocab_size = to_size(k, v); };
    t["encoder.init_scale"] = [](C& c, auto& k, auto& v) { c.encoder.init_scale = to_double(k, v); };
    t["encoder.freeze_question_tower"] = [](C& c, auto& k, auto& v) {
      c.encoder.freeze_question_tower = to_bool(k, v);
    };

    t["generator.kind"] = [](C& c, auto&, auto& v) { c.generator.kind = v; };
    t["generator.endpoint"] = [](C& c, auto&, auto& v) { c.generator.endpoint = v; };
    t["generator.prompt_passages"] = [](C& c, auto& k, auto& v) { c.generator.prompt_passages = to_size(k, v); };
    t["generator.max_answer_tokens"] = [](C& c, auto& k, auto& v) {
      c.generator.max_answer_tokens = to_size(k, v);
    };
    t["generator.max_in_flight"] = [](C& c, auto& k, auto& v) { c.generator.max_in_flight = to_size(k, v); };
    t["generator.unextractable_markers"] = [](C& c, auto&, auto& v) {
      c.generator.unextractable_markers = to_list(v);
    };

    t["retrieve.k"] = [](C& c, auto& k, auto& v) { c.retrieve_k = to_size(k, v); };
    t["answer.k"] = [](C& c, auto& k, auto& v) { c.answer_k = to_size(k, v); };

    t["mining.retrieve_k"] = [](C& c, auto& k, auto& v) { c.mining.retrieve_k = to_size(k, v); };
    t["mining.iterations"] = [](C& c, auto& k, auto& v) { c.mining.max_iterations = to_size(k, v); };
    t["mining.langlink_enabled"] = [](C& c, auto& k, auto& v) { c.mining.langlink_enabled = to_bool(k, v); };
    t["mining.langlink_language_cap"] = [](C& c, auto& k, auto& v) {
      c.mining.langlink_language_cap = to_size(k, v);
    };
    t["mining.synthetic_subsample_rate"] = [](C& c, auto& k, auto& v) {
      c.mining.synthetic_subsample_rate = to_double(k, v);
    };
    t["mining.max_negatives"] = [](C& c, auto& k, auto& v) { c.mining.max_negatives = to_size(k, v); };
    t["mining.seed"] = [](C& c, auto& k, auto& v) { c.mining.seed = to_size(k, v); };
    t["mining.synthetic_languages"] = [](C& c, auto&, auto& v) { c.mining.synthetic_languages = to_list(v); };

    t["train.epochs"] = [](C& c, auto& k, auto& v) { c.train.epochs = to_size(k, v); };
    t["train.learning_rate"] = [](C& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); };
    t["train.batch_size"] = [](C& c, auto& k, auto& v) { c.train.batch_size = to_size(k, v); };
    t["train.seed"] = [](C& c, auto& k, auto& v) { c.train.seed = to_size(k, v); };

    t["eval.k"] = [](C& c, auto& k, auto& v) { c.eval_k = to_size(k, v); };
    t["eval.gold_annotated"] = [](C& c, auto&, auto& v) { c.categories.gold_annotated = to_list(v); };
    t["eval.retriever_mined"] = [](C& c, auto&, auto& v) { c.categories.retriever_mined = to_list(v); };
    t["eval.generator_synthetic"] = [](C& c, auto&, auto& v) { c.categories.generator_synthetic = to_list(v); };

    // One seed for every seeded component.
    t["seed"] = [](C& c, auto& k, auto& v) {
      const auto s = to_size(k, v);
      c.encoder.seed = s;
      c.mining.seed = s;
      c.train.seed = s;
    };
    return t;
  }();
  return table;
}

}  // namespace config_detail

inline void PipelineConfig::set(const std::string& key, const std::string& value) {
  const auto& table = config_detail::setters();
  auto it = table.find(key);
  if (it == table.end()) throw UsageError("unknown configuration key '" + key + "'");
  it->second(*this, key, value);
}

inline std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : config_detail::setters()) out.push_back(k);
  return out;
}

// Parses `key = value` lines. Blank lines and '#' comments are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& content) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string trimmed = text::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    out.emplace_back(text::trim(trimmed.substr(0, eq)), text::trim(trimmed.substr(eq + 1)));
  }
  return out;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig config;
  for (const auto& [k, v] : parse_config_text(ss.str())) config.set(k, v);
  return config;
}

}  // namespace polyqa
