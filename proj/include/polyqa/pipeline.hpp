#pragma once

// Subcommand implementations shared by the CLI and the integration tests.
// Every output file is written atomically.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyqa/config.hpp"
#include "polyqa/corpus.hpp"
#include "polyqa/dense_index.hpp"
#include "polyqa/encoder.hpp"
#include "polyqa/error.hpp"
#include "polyqa/evalkit.hpp"
#include "polyqa/generator.hpp"
#include "polyqa/io.hpp"
#include "polyqa/miner.hpp"
#include "polyqa/toy_world.hpp"

namespace polyqa::pipeline {

using json = nlohmann::json;

inline const std::string& require_path(const std::string& value, const char* key) {
  if (value.empty()) throw UsageError(std::string("missing required path '") + key + "'");
  return value;
}

inline Encoder make_encoder(const PipelineConfig& config) {
  const auto& e = config.encoder;
  if (e.kind == "toy-hash") return ToyHashEncoder{e.dim, e.seed};
  if (e.kind == "remote") {
    const std::size_t served = wire::HttpClient(e.endpoint).health();
    if (served != e.dim) {
      throw TransportError(e.endpoint, "sidecar dim " + std::to_string(served) + " != encoder.dim " +
                                           std::to_string(e.dim));
    }
    return RemoteEncoder{e.endpoint, e.dim};
  }
  if (e.kind != "toy-trainable") throw UsageError("unknown encoder kind '" + e.kind + "'");
  ToyTrainableEncoder enc = (!config.paths.encoder.empty() && std::filesystem::exists(config.paths.encoder))
                                ? ToyTrainableEncoder::load(config.paths.encoder)
                                : ToyTrainableEncoder::random(e.vocab_size, e.dim, e.seed, e.init_scale);
  if (enc.dim() != e.dim) {
    throw UsageError("encoder file dim " + std::to_string(enc.dim()) + " != encoder.dim " + std::to_string(e.dim));
  }
  enc.freeze_question_tower = e.freeze_question_tower;
  return enc;
}

inline Generator make_generator(const PipelineConfig& config) {
  const auto& g = config.generator;
  if (g.kind == "remote") {
    wire::HttpClient(g.endpoint).health();
    return RemoteGenerator{g.endpoint, g.max_answer_tokens, g.max_in_flight};
  }
  if (g.kind != "toy-extractive") throw UsageError("unknown generator kind '" + g.kind + "'");
  ToyExtractiveGenerator toy;
  toy.max_answer_tokens = g.max_answer_tokens;
  toy.unextractable_markers = g.unextractable_markers;
  return toy;
}

inline std::vector<Passage> load_passages(const std::string& path) {
  std::vector<Passage> out;
  for (const auto& j : io::read_json_lines(path)) out.push_back(passage_from_json(j));
  return out;
}

inline std::vector<Question> load_questions(const std::string& path) {
  std::vector<Question> out;
  for (const auto& j : io::read_json_lines(path)) out.push_back(question_from_json(j));
  return out;
}

inline std::vector<QAInstance> load_instances(const std::string& path) {
  std::vector<QAInstance> out;
  for (const auto& j : io::read_json_lines(path)) out.push_back(instance_from_json(j));
  return out;
}

inline std::string passages_jsonl(const std::vector<Passage>& passages) {
  std::string out;
  for (const auto& p : passages) out += to_json(p).dump() + '\n';
  return out;
}

// ---------------------------------------------------------------------------

inline int cmd_ingest(const PipelineConfig& config, std::ostream& out) {
  std::ifstream in(require_path(config.paths.corpus, "paths.corpus"), std::ios::binary);
  if (!in) throw DataError("cannot open " + config.paths.corpus);
  const auto result = ingest_stream(in, config.corpus);
  io::atomic_write(require_path(config.paths.passages, "paths.passages"), passages_jsonl(result.passages));
  json stats = to_json(result.stats);
  json errors = json::array();
  for (const auto& e : result.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  stats["errors"] = errors;
  if (!config.paths.stats.empty()) io::atomic_write(config.paths.stats, stats.dump(2) + '\n');
  out << stats.dump() << '\n';
  return 0;
}

inline DenseIndex embed_passages(const Encoder& encoder, const std::vector<Passage>& passages) {
  std::vector<std::string> ids;
  ids.reserve(passages.size());
  for (const auto& p : passages) ids.push_back(p.passage_id);
  return DenseIndex::build(ids, encode_passages(encoder, passages), encoder_dim(encoder));
}

inline int cmd_embed(const PipelineConfig& config, std::ostream& out) {
  const auto passages = load_passages(require_path(config.paths.passages, "paths.passages"));
  const Encoder encoder = make_encoder(config);
  const DenseIndex index = embed_passages(encoder, passages);
  index.save(require_path(config.paths.index, "paths.index"));
  out << json{{"index", config.paths.index}, {"entries", index.size()}, {"dim", index.dim()},
              {"encoder", encoder_kind(encoder)}}.dump()
      << '\n';
  return 0;
}

inline json retrieval_record(const Question& q, const std::vector<RetrievalResult>& results) {
  json rows = json::array();
  for (const auto& r : results) rows.push_back(json::array({r.passage_id, r.score}));
  return {{"question_id", q.question_id}, {"lang", q.lang}, {"results", rows}};
}

inline int cmd_retrieve(const PipelineConfig& config, std::ostream& out) {
  const auto questions = load_questions(require_path(config.paths.questions, "paths.questions"));
  const DenseIndex index = DenseIndex::load(require_path(config.paths.index, "paths.index"));
  const Encoder encoder = make_encoder(config);
  if (encoder_dim(encoder) != index.dim()) throw UsageError("encoder dim differs from index dim");
  const auto results = index.search_batch(encode_questions(encoder, questions), config.retrieve_k);
  std::string body;
  for (std::size_t i = 0; i < questions.size(); ++i) body += retrieval_record(questions[i], results[i]).dump() + '\n';
  io::atomic_write(require_path(config.paths.retrievals, "paths.retrievals"), body);
  out << json{{"retrievals", config.paths.retrievals}, {"questions", questions.size()}, {"k", config.retrieve_k}}.dump()
      << '\n';
  return 0;
}

inline int cmd_answer(const PipelineConfig& config, std::ostream& out) {
  const auto questions = load_questions(require_path(config.paths.questions, "paths.questions"));
  const PassageStore store(load_passages(require_path(config.paths.passages, "paths.passages")));
  const DenseIndex index = DenseIndex::load(require_path(config.paths.index, "paths.index"));
  const Encoder encoder = make_encoder(config);
  const Generator generator = make_generator(config);
  if (encoder_dim(encoder) != index.dim()) throw UsageError("encoder dim differs from index dim");

  const auto results = index.search_batch(encode_questions(encoder, questions), config.answer_k);
  std::vector<std::vector<PromptPassage>> prompts(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    std::vector<const Passage*> top;
    for (const auto& r : results[i]) {
      if (top.size() == config.generator.prompt_passages) break;
      top.push_back(&store.at(r.passage_id));
    }
    prompts[i] = to_prompt_passages(top);
  }
  const auto generations = generate_many(generator, questions, prompts);
  std::string body;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    body += json{{"question_id", questions[i].question_id}, {"lang", questions[i].lang},
                 {"prediction", generations[i].answer}}.dump() + '\n';
  }
  io::atomic_write(require_path(config.paths.predictions, "paths.predictions"), body);
  out << json{{"predictions", config.paths.predictions}, {"questions", questions.size()}}.dump() << '\n';
  return 0;
}

inline int cmd_mine(const PipelineConfig& config, std::ostream& out) {
  const auto instances = load_instances(require_path(config.paths.instances, "paths.instances"));
  const PassageStore store(load_passages(require_path(config.paths.passages, "paths.passages")));
  std::optional<LanguageLinkTable> table;
  if (!config.paths.link_table.empty()) table = LanguageLinkTable::load(config.paths.link_table);
  Encoder encoder = make_encoder(config);
  const Generator generator = make_generator(config);

  const MiningContext context{store, table ? &*table : nullptr};
  const MiningState state = run_mining_loop(instances, encoder, generator, context, config.mining, config.train);

  io::atomic_write(require_path(config.paths.training_set, "paths.training_set"), training_set_jsonl(state));
  const json ledger = ledger_json(state);
  if (!config.paths.ledger.empty()) io::atomic_write(config.paths.ledger, ledger.dump(2) + '\n');
  if (const auto* trainable = std::get_if<ToyTrainableEncoder>(&encoder); trainable && !config.paths.encoder.empty()) {
    trainable->save(config.paths.encoder);
  }
  if (table && !config.paths.synthetic.empty()) {
    std::vector<SyntheticExample> synthetic;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (instances[i].question.lang != "en") continue;
      std::mt19937_64 rng(mix_seed(config.mining.seed ^ 0x5917ULL, i));
      for (auto& s : synthesize_generator_examples(instances[i], *table, config.mining, rng)) {
        synthetic.push_back(std::move(s));
      }
    }
    io::atomic_write(config.paths.synthetic, synthetic_jsonl(synthetic));
  }
  out << ledger.dump() << '\n';
  return 0;
}

// Joins predictions and/or retrievals with the answers file and scores them.
inline eval::EvalReport evaluate_files(const PipelineConfig& config) {
  struct Gold {
    std::string target_lang;
    eval::AnswerSet answers;
  };
  std::map<std::string, Gold> golds;
  for (const auto& j : io::read_json_lines(require_path(config.paths.answers, "paths.answers"))) {
    try {
      golds[j.at("question_id").get<std::string>()] =
          Gold{j.at("target_lang").get<std::string>(), j.at("answers").get<eval::AnswerSet>()};
    } catch (const json::exception& e) {
      throw DataError(std::string("bad answers record: ") + e.what());
    }
  }
  std::map<std::string, eval::QuestionRecord> records;
  auto record_for = [&](const std::string& qid) -> eval::QuestionRecord& {
    auto it = golds.find(qid);
    if (it == golds.end()) throw DataError("no answers for question '" + qid + "'");
    auto& r = records[qid];
    r.question_id = qid;
    r.lang = it->second.target_lang;
    return r;
  };

  if (!config.paths.predictions.empty()) {
    for (const auto& j : io::read_json_lines(config.paths.predictions)) {
      const auto qid = j.at("question_id").get<std::string>();
      const auto prediction = j.at("prediction").get<std::string>();
      auto& r = record_for(qid);
      const auto& g = golds[qid];
      auto it = g.answers.find(g.target_lang);
      if (it == g.answers.end() || it->second.empty()) continue;
      r.f1 = eval::token_f1(prediction, it->second, r.lang);
      r.em = eval::exact_match(prediction, it->second, r.lang);
      r.bleu = eval::bleu(prediction, it->second, r.lang);
    }
  }
  if (!config.paths.retrievals.empty()) {
    const PassageStore store(load_passages(require_path(config.paths.passages, "paths.passages")));
    for (const auto& j : io::read_json_lines(config.paths.retrievals)) {
      const auto qid = j.at("question_id").get<std::string>();
      auto& r = record_for(qid);
      std::vector<Passage> retrieved;
      for (const auto& row : j.at("results")) retrieved.push_back(store.at(row.at(0).get<std::string>()));
      r.recall = eval::recall_at_k(retrieved, golds[qid].answers, golds[qid].target_lang, config.eval_k);
    }
  }
  std::vector<eval::QuestionRecord> flat;
  for (auto& [_, r] : records) flat.push_back(std::move(r));
  return eval::aggregate(flat, config.eval_k);
}

inline int cmd_eval(const PipelineConfig& config, std::ostream& out) {
  if (config.paths.predictions.empty() && config.paths.retrievals.empty()) {
    throw UsageError("eval needs paths.predictions and/or paths.retrievals");
  }
  const auto report = evaluate_files(config);
  const json doc = eval::to_json(report, &config.categories);
  if (!config.paths.report.empty()) io::atomic_write(config.paths.report, doc.dump(2) + '\n');
  if (!config.paths.report_tsv.empty()) io::atomic_write(config.paths.report_tsv, eval::to_tsv(report, &config.categories));
  out << doc.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Seeded toy benchmark for the iterative loop.

struct E2eOptions {
  uint64_t seed = 0;
  toy::WorldConfig world;
  std::size_t dim = 32;
  std::size_t vocab_size = 8192;
  double init_scale = 1.0;
  std::size_t updates = 3;  // initial fit plus two mining iterations
  std::size_t k = 10;
  TrainConfig train{.epochs = 30, .learning_rate = 30.0, .batch_size = 16, .seed = 0};
};

struct RecallPoint {
  std::size_t update = 0;
  double recall_target = 0.0;
  double recall_multi = 0.0;
  double recall_multi_cross_lingual = 0.0;
  double recall_multi_in_language = 0.0;
};

struct E2eResult {
  std::vector<RecallPoint> trajectory;
  MiningState state;
  std::size_t passages = 0;
  double seconds = 0.0;
};

inline E2eResult run_e2e_toy(const E2eOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  toy::WorldConfig world_config = options.world;
  world_config.seed = options.seed;
  const toy::World world = toy::build_world(world_config);
  const PassageStore store(ingest_articles(world.articles).passages);

  Encoder encoder = ToyTrainableEncoder::random(options.vocab_size, options.dim, options.seed, options.init_scale);
  const ToyExtractiveGenerator generator;
  IterationConfig iteration;
  iteration.max_iterations = options.updates;
  iteration.retrieve_k = options.k;
  iteration.seed = options.seed;
  TrainConfig train = options.train;
  train.seed = options.seed;

  E2eResult result;
  result.passages = store.size();
  LoopHooks hooks;
  hooks.on_update = [&](std::size_t update, const Encoder& enc) {
    const DenseIndex index = embed_passages(enc, store.passages());
    std::vector<Question> questions;
    for (const auto& inst : world.instances) questions.push_back(inst.question);
    const auto hits = index.search_batch(encode_questions(enc, questions), options.k);
    RecallPoint point{update};
    std::size_t n_cross = 0, n_in = 0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
      std::vector<Passage> retrieved;
      for (const auto& h : hits[i]) retrieved.push_back(store.at(h.passage_id));
      const auto r = eval::recall_at_k(retrieved, world.answer_sets.at(questions[i].question_id),
                                       questions[i].lang, options.k);
      point.recall_target += r.target;
      point.recall_multi += r.multi;
      if (world.cross_lingual[i]) {
        ++n_cross;
        point.recall_multi_cross_lingual += r.multi;
      } else {
        ++n_in;
        point.recall_multi_in_language += r.multi;
      }
    }
    const double n = static_cast<double>(questions.size());
    point.recall_target /= n;
    point.recall_multi /= n;
    if (n_cross) point.recall_multi_cross_lingual /= static_cast<double>(n_cross);
    if (n_in) point.recall_multi_in_language /= static_cast<double>(n_in);
    result.trajectory.push_back(point);
  };
  result.state = run_mining_loop(world.instances, encoder, generator, MiningContext{store, &world.links},
                                 iteration, train, hooks);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline json to_json(const E2eResult& r) {
  json trajectory = json::array();
  for (const auto& p : r.trajectory) {
    trajectory.push_back({{"update", p.update},
                          {"recall_target", p.recall_target},
                          {"recall_multi", p.recall_multi},
                          {"recall_multi_cross_lingual", p.recall_multi_cross_lingual},
                          {"recall_multi_in_language", p.recall_multi_in_language}});
  }
  return {{"passages", r.passages}, {"trajectory", trajectory}, {"ledger", ledger_json(r.state)},
          {"seconds", r.seconds}};
}

inline int cmd_e2e_toy(const E2eOptions& options, const std::string& report_path, std::ostream& out) {
  const E2eResult result = run_e2e_toy(options);
  out << "passages " << result.passages << ", training examples " << result.state.training_set.size() << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& p : result.trajectory) {
    out << "update " << p.update << "  R^L@" << options.k << " " << p.recall_target << "  R^multi@" << options.k
        << " " << p.recall_multi << "  (cross-lingual " << p.recall_multi_cross_lingual << ", in-language "
        << p.recall_multi_in_language << ")\n";
  }
  if (!report_path.empty()) io::atomic_write(report_path, to_json(result).dump(2) + '\n');
  return 0;
}

}  // namespace polyqa::pipeline
