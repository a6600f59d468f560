#pragma once

// Iterative train / retrieve / expand / label loop that grows the retriever
// training set without new annotation, plus synthetic cross-language
// generator data built from language links.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyqa/corpus.hpp"
#include "polyqa/dense_index.hpp"
#include "polyqa/encoder.hpp"
#include "polyqa/error.hpp"
#include "polyqa/generator.hpp"
#include "polyqa/io.hpp"
#include "polyqa/parallel.hpp"
#include "polyqa/text.hpp"

namespace polyqa {

struct QAInstance {
  Question question;
  std::vector<std::string> answers;
  std::vector<std::string> gold_passage_ids;
};

inline QAInstance instance_from_json(const nlohmann::json& j) {
  QAInstance inst;
  inst.question = question_from_json(j);
  try {
    inst.answers = j.at("answers").get<std::vector<std::string>>();
    if (j.contains("gold_passage_ids")) {
      inst.gold_passage_ids = j["gold_passage_ids"].get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad instance '" + inst.question.question_id + "': " + e.what());
  }
  if (inst.answers.empty()) throw DataError("instance '" + inst.question.question_id + "' has no answers");
  return inst;
}

// Entity-keyed language links. Titles are matched after NFKC + trim.
class LanguageLinkTable {
 public:
  struct Entity {
    std::string entity_id;
    std::map<std::string, std::string> titles;  // lang -> title
  };

  void add(Entity entity) {
    if (entity.entity_id.empty()) throw DataError("link table entity without id");
    const std::size_t idx = entities_.size();
    for (const auto& [lang, title] : entity.titles) {
      if (lang.empty() || title.empty()) {
        throw DataError("entity '" + entity.entity_id + "' has an empty language or title");
      }
      lookup_.emplace(key(lang, title), idx);
    }
    entities_.push_back(std::move(entity));
  }

  // entity_id TAB lang:title TAB lang:title ...
  static LanguageLinkTable parse_tsv(std::istream& in) {
    LanguageLinkTable table;
    io::for_each_line(in, [&](std::size_t line_no, const std::string& line) {
      std::vector<std::string> fields;
      std::size_t start = 0;
      for (;;) {
        const std::size_t tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      Entity e;
      e.entity_id = fields[0];
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const std::size_t colon = fields[i].find(':');
        if (colon == std::string::npos || colon == 0) {
          throw DataError("link table line " + std::to_string(line_no) + ": expected lang:title, got '" +
                          fields[i] + "'");
        }
        const std::string lang = fields[i].substr(0, colon);
        if (!e.titles.emplace(lang, fields[i].substr(colon + 1)).second) {
          throw DataError("link table line " + std::to_string(line_no) + ": two titles for '" + lang + "'");
        }
      }
      table.add(std::move(e));
    });
    return table;
  }

  static LanguageLinkTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open link table " + path);
    return parse_tsv(in);
  }

  std::string to_tsv() const {
    std::string out;
    for (const auto& e : entities_) {
      out += e.entity_id;
      for (const auto& [lang, title] : e.titles) out += '\t' + lang + ':' + title;
      out += '\n';
    }
    return out;
  }

  const Entity* find(const std::string& lang, const std::string& title) const {
    auto it = lookup_.find(key(lang, title));
    return it == lookup_.end() ? nullptr : &entities_[it->second];
  }

  const std::vector<Entity>& entities() const { return entities_; }

 private:
  static std::string key(const std::string& lang, const std::string& title) {
    return lang + '\t' + text::trim(text::nfkc(title));
  }

  std::vector<Entity> entities_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

inline std::vector<std::string> default_synthetic_languages() {
  return {"ar", "fi", "ja", "ko", "ru", "es", "sv", "he", "th", "da", "fr", "it", "nl", "pl", "pt"};
}

struct IterationConfig {
  std::size_t retrieve_k = 10;
  std::size_t max_iterations = 2;
  bool langlink_enabled = true;
  std::size_t langlink_language_cap = 10;
  double synthetic_subsample_rate = 0.5;
  std::size_t max_negatives = 8;
  uint64_t seed = 0;
  std::vector<std::string> synthetic_languages = default_synthetic_languages();

  void validate() const {
    if (retrieve_k < 1) throw UsageError("retrieve_k must be >= 1");
    if (max_iterations < 1) throw UsageError("max_iterations must be >= 1");
    if (!(synthetic_subsample_rate >= 0.0 && synthetic_subsample_rate <= 1.0)) {
      throw UsageError("synthetic_subsample_rate must lie in [0, 1]");
    }
  }
};

struct MinedExample {
  TrainingExample example;
  std::vector<std::string> answers;
  std::size_t iteration = 0;
};

struct IterationLedger {
  std::size_t iteration = 0;
  std::size_t instances = 0;
  std::size_t candidates = 0;
  std::size_t retrieved = 0;
  std::size_t link_expansions = 0;
  std::size_t unresolved_gold_articles = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t generation_failures = 0;
  std::size_t zero_positive_instances = 0;
  std::size_t appended = 0;
};

struct MiningState {
  std::size_t iteration = 0;
  std::vector<MinedExample> training_set;
  std::vector<IterationLedger> ledger;
};

// Deterministic per-stream seeds independent of thread scheduling.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform index in [0, n) from raw engine output; avoids the
// implementation-defined std::uniform_int_distribution.
inline std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline double draw_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_index(rng, i)]);
}

// Chooses at most `cap` items, keeping their original relative order.
template <class T>
std::vector<T> sample_at_most(const std::vector<T>& items, std::size_t cap, std::mt19937_64& rng) {
  if (items.size() <= cap) return items;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, rng);
  order.resize(cap);
  std::sort(order.begin(), order.end());
  std::vector<T> out;
  for (std::size_t i : order) out.push_back(items[i]);
  return out;
}

inline MiningState initial_state(const std::vector<QAInstance>& instances, const PassageStore& store) {
  MiningState state;
  for (const auto& inst : instances) {
    if (inst.gold_passage_ids.empty()) continue;
    MinedExample ex;
    ex.example.question = inst.question;
    for (const auto& id : inst.gold_passage_ids) ex.example.positives.push_back(store.at(id));
    ex.answers = inst.answers;
    ex.iteration = 0;
    state.training_set.push_back(std::move(ex));
  }
  return state;
}

// Retrieved passages minus gold passages, deduplicated, in rank order.
inline std::vector<Passage> filter_retrieved(const std::vector<RetrievalResult>& results,
                                             const QAInstance& instance, const PassageStore& store) {
  std::unordered_set<std::string> skip(instance.gold_passage_ids.begin(), instance.gold_passage_ids.end());
  std::vector<Passage> out;
  for (const auto& r : results) {
    if (!skip.insert(r.passage_id).second) continue;
    out.push_back(store.at(r.passage_id));
  }
  return out;
}

inline std::vector<Passage> mine_from_retrieval(const QAInstance& instance, const DenseIndex& index,
                                                const Encoder& encoder, const PassageStore& store,
                                                std::size_t k) {
  if (encoder_dim(encoder) != index.dim()) throw UsageError("encoder and index dims differ");
  return filter_retrieved(index.search(encode_question(encoder, instance.question), k), instance, store);
}

inline std::optional<std::string> translate_answer_via_links(const std::string& answer_en,
                                                             const std::string& target_lang,
                                                             const LanguageLinkTable& table) {
  const auto* entity = table.find("en", answer_en);
  if (!entity) return std::nullopt;
  auto it = entity->titles.find(target_lang);
  if (it == entity->titles.end()) return std::nullopt;
  return it->second;
}

struct Expansion {
  std::vector<Passage> passages;
  std::vector<std::string> languages;
  bool resolved = false;
};

// Gold passage -> its article -> linked entity -> same-entity articles in
// other corpus languages (at most `language_cap` languages, seeded choice)
// -> all of their passages.
inline Expansion expand_via_language_links(const QAInstance& instance, const LanguageLinkTable& table,
                                           const PassageStore& store, std::size_t language_cap,
                                           std::mt19937_64& rng) {
  if (instance.question.lang != "en") {
    throw UsageError("language-link expansion applies to English instances only");
  }
  Expansion out;
  std::map<std::string, std::string> linked;  // lang -> title, sorted by lang
  std::set<std::string> source_langs;
  for (const auto& gold_id : instance.gold_passage_ids) {
    const Passage* gold = store.find(gold_id);
    if (!gold) continue;
    const auto* entity = table.find(gold->lang, gold->title);
    if (!entity) continue;
    out.resolved = true;
    source_langs.insert(gold->lang);
    for (const auto& [lang, title] : entity->titles) {
      if (!store.article_passages(lang, title).empty()) linked.emplace(lang, title);
    }
  }
  std::vector<std::string> langs;
  for (const auto& [lang, title] : linked) {
    if (!source_langs.count(lang)) langs.push_back(lang);
  }
  out.languages = sample_at_most(langs, language_cap, rng);
  for (const auto& lang : out.languages) {
    for (const Passage* p : store.article_passages(lang, linked.at(lang))) out.passages.push_back(*p);
  }
  return out;
}

// Gold strings a candidate is judged against: the instance answers plus,
// for English instances, their link translations into the candidate's language.
inline std::vector<std::string> golds_for_candidate(const QAInstance& instance, const Passage& candidate,
                                                    const LanguageLinkTable* table) {
  std::vector<std::string> golds = instance.answers;
  if (table && instance.question.lang == "en" && candidate.lang != "en") {
    for (const auto& a : instance.answers) {
      if (auto t = translate_answer_via_links(a, candidate.lang, *table)) golds.push_back(*t);
    }
  }
  return golds;
}

struct LabeledCandidates {
  std::vector<Passage> positives;
  std::vector<Passage> negatives;
  std::size_t failures = 0;
};

inline LabeledCandidates label_candidates(const std::vector<Passage>& candidates, const QAInstance& instance,
                                          const Generator& generator,
                                          const LanguageLinkTable* table = nullptr) {
  LabeledCandidates out;
  for (const auto& c : candidates) {
    try {
      const auto label = label_passage_any(generator, instance.question, c, golds_for_candidate(instance, c, table));
      (label == Label::kPositive ? out.positives : out.negatives).push_back(c);
    } catch (const TransportError&) {
      ++out.failures;
    }
  }
  return out;
}

struct MiningContext {
  const PassageStore& store;
  const LanguageLinkTable* table = nullptr;
};

// One mining pass over all instances. Work per instance is independent and
// runs in parallel; results are committed in instance order. The input state
// is not modified; a failure leaves nothing committed.
inline MiningState run_iteration(const MiningState& state, const std::vector<QAInstance>& instances,
                                 const DenseIndex& index, const Encoder& encoder, const Generator& generator,
                                 const MiningContext& context, const IterationConfig& config) {
  config.validate();
  if (state.iteration >= config.max_iterations) throw UsageError("run_iteration: iteration budget exhausted");
  if (encoder_dim(encoder) != index.dim()) throw UsageError("encoder and index dims differ");

  std::vector<Question> questions;
  questions.reserve(instances.size());
  for (const auto& inst : instances) questions.push_back(inst.question);
  const auto query_vecs = encode_questions(encoder, questions);
  const auto retrieved = index.search_batch(query_vecs, config.retrieve_k);

  struct Outcome {
    LabeledCandidates labeled;
    std::size_t retrieved = 0;
    std::size_t expanded = 0;
    bool unresolved = false;
  };
  std::vector<Outcome> outcomes(instances.size());
  parallel_for(instances.size(), [&](std::size_t i) {
    const auto& inst = instances[i];
    auto candidates = filter_retrieved(retrieved[i], inst, context.store);
    Outcome& o = outcomes[i];
    o.retrieved = candidates.size();
    if (config.langlink_enabled && context.table && inst.question.lang == "en") {
      std::mt19937_64 rng(mix_seed(mix_seed(config.seed, state.iteration), i));
      auto expansion = expand_via_language_links(inst, *context.table, context.store,
                                                 config.langlink_language_cap, rng);
      o.unresolved = !expansion.resolved;
      std::unordered_set<std::string> seen;
      for (const auto& c : candidates) seen.insert(c.passage_id);
      for (auto& p : expansion.passages) {
        if (seen.insert(p.passage_id).second) {
          candidates.push_back(std::move(p));
          ++o.expanded;
        }
      }
    }
    o.labeled = label_candidates(candidates, inst, generator, context.table);
  });

  MiningState next = state;
  IterationLedger ledger;
  ledger.iteration = state.iteration;
  ledger.instances = instances.size();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto& o = outcomes[i];
    ledger.retrieved += o.retrieved;
    ledger.link_expansions += o.expanded;
    ledger.candidates += o.retrieved + o.expanded;
    ledger.unresolved_gold_articles += o.unresolved ? 1 : 0;
    ledger.positives += o.labeled.positives.size();
    ledger.negatives += o.labeled.negatives.size();
    ledger.generation_failures += o.labeled.failures;
    if (o.labeled.positives.empty()) {
      ++ledger.zero_positive_instances;
      continue;
    }
    MinedExample ex;
    ex.example.question = instances[i].question;
    ex.example.positives = std::move(o.labeled.positives);
    ex.example.negatives = std::move(o.labeled.negatives);
    if (ex.example.negatives.size() > config.max_negatives) ex.example.negatives.resize(config.max_negatives);
    ex.answers = instances[i].answers;
    ex.iteration = state.iteration + 1;
    next.training_set.push_back(std::move(ex));
    ++ledger.appended;
  }
  next.ledger.push_back(ledger);
  ++next.iteration;
  return next;
}

struct SyntheticExample {
  std::string question_id;
  std::string question;
  std::string lang_tag;
  std::string answer;
  std::string source_answer;

  bool operator==(const SyntheticExample&) const = default;
};

// English question re-targeted at languages its answer translates into:
// at most `langlink_language_cap` translatable languages are sampled, then
// each is kept with probability `synthetic_subsample_rate`.
inline std::vector<SyntheticExample> synthesize_generator_examples(const QAInstance& instance,
                                                                   const LanguageLinkTable& table,
                                                                   const IterationConfig& config,
                                                                   std::mt19937_64& rng) {
  if (instance.question.lang != "en") throw UsageError("synthetic generator data needs an English instance");
  struct Candidate {
    std::string lang;
    std::string answer;
    std::string source;
  };
  std::vector<Candidate> translatable;
  for (const auto& lang : config.synthetic_languages) {
    for (const auto& a : instance.answers) {
      if (auto t = translate_answer_via_links(a, lang, table)) {
        translatable.push_back({lang, *t, a});
        break;
      }
    }
  }
  std::vector<SyntheticExample> out;
  for (const auto& c : sample_at_most(translatable, config.langlink_language_cap, rng)) {
    if (draw_unit(rng) < config.synthetic_subsample_rate) {
      out.push_back({instance.question.question_id, instance.question.text, c.lang, c.answer, c.source});
    }
  }
  return out;
}

struct TrainConfig {
  std::size_t epochs = 1;
  double learning_rate = 1.0;
  std::size_t batch_size = 16;
  uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
};

// Minibatch descent over the training set. Each epoch shuffles example order
// and picks one positive per example, both from the seeded stream.
inline TrainReport update_encoder_from_state(ToyTrainableEncoder& encoder,
                                             const std::vector<MinedExample>& training_set,
                                             const TrainConfig& config) {
  TrainReport report;
  if (config.epochs == 0) return report;
  if (training_set.empty()) throw UsageError("cannot train on an empty training set");
  if (config.batch_size == 0) throw UsageError("batch_size must be >= 1");
  std::mt19937_64 rng(mix_seed(config.seed, 0x7a11));
  std::vector<std::size_t> order(training_set.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    seeded_shuffle(order, rng);
    double sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<TrainingExample> batch;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& src = training_set[order[i]].example;
        TrainingExample ex;
        ex.question = src.question;
        ex.positives.push_back(src.positives[draw_index(rng, src.positives.size())]);
        ex.negatives = src.negatives;
        batch.push_back(std::move(ex));
      }
      sum += train_step(encoder, batch, config.learning_rate);
      ++steps;
    }
    report.epoch_mean_loss.push_back(sum / static_cast<double>(steps));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const MinedExample& ex) {
  std::vector<std::string> pos, neg;
  for (const auto& p : ex.example.positives) pos.push_back(p.passage_id);
  for (const auto& p : ex.example.negatives) neg.push_back(p.passage_id);
  return {{"question_id", ex.example.question.question_id},
          {"lang", ex.example.question.lang},
          {"question", ex.example.question.text},
          {"answers", ex.answers},
          {"positive_passage_ids", pos},
          {"negative_passage_ids", neg},
          {"iteration", ex.iteration}};
}

inline MinedExample mined_example_from_json(const nlohmann::json& j, const PassageStore& store) {
  MinedExample ex;
  ex.example.question = question_from_json(j);
  try {
    ex.answers = j.at("answers").get<std::vector<std::string>>();
    for (const auto& id : j.at("positive_passage_ids")) ex.example.positives.push_back(store.at(id.get<std::string>()));
    for (const auto& id : j.at("negative_passage_ids")) ex.example.negatives.push_back(store.at(id.get<std::string>()));
    ex.iteration = j.at("iteration").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad training-set record: " + std::string(e.what()));
  }
  if (ex.example.positives.empty()) throw DataError("training-set record without positives");
  return ex;
}

inline nlohmann::json to_json(const IterationLedger& l) {
  return {{"iteration", l.iteration},
          {"instances", l.instances},
          {"candidates", l.candidates},
          {"retrieved", l.retrieved},
          {"link_expansions", l.link_expansions},
          {"unresolved_gold_articles", l.unresolved_gold_articles},
          {"positives", l.positives},
          {"negatives", l.negatives},
          {"generation_failures", l.generation_failures},
          {"zero_positive_instances", l.zero_positive_instances},
          {"appended", l.appended}};
}

inline std::string training_set_jsonl(const MiningState& state) {
  std::string out;
  for (const auto& ex : state.training_set) out += to_json(ex).dump() + '\n';
  return out;
}

inline nlohmann::json ledger_json(const MiningState& state) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& l : state.ledger) iterations.push_back(to_json(l));
  return {{"iteration", state.iteration},
          {"training_set_size", state.training_set.size()},
          {"iterations", iterations}};
}

// Canonical byte form of a state, used for rerun comparisons.
inline std::string serialize_state(const MiningState& state) {
  return training_set_jsonl(state) + ledger_json(state).dump() + '\n';
}

inline std::string synthetic_jsonl(const std::vector<SyntheticExample>& examples) {
  nlohmann::json header = {{"_meta",
                            {{"kind", "synthetic-generator-data"},
                             {"consumer", "generator"},
                             {"intended_consumption", "introduce after 3 epochs of generator training"}}}};
  std::string out = header.dump() + '\n';
  for (const auto& e : examples) {
    out += nlohmann::json{{"question_id", e.question_id},
                          {"question", e.question},
                          {"lang_tag", e.lang_tag},
                          {"answer", e.answer},
                          {"source_answer", e.source_answer}}
               .dump() +
           '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full loop: T parameter updates with mining between them (none after the
// last). `on_update` sees the encoder after every update.

struct LoopHooks {
  std::function<void(std::size_t update, const Encoder& encoder)> on_update;
};

inline MiningState run_mining_loop(const std::vector<QAInstance>& instances, Encoder& encoder,
                                   const Generator& generator, const MiningContext& context,
                                   const IterationConfig& config, const TrainConfig& train,
                                   const LoopHooks& hooks = {}) {
  config.validate();
  MiningState state = initial_state(instances, context.store);
  const auto& passages = context.store.passages();
  std::vector<std::string> ids;
  ids.reserve(passages.size());
  for (const auto& p : passages) ids.push_back(p.passage_id);

  for (std::size_t update = 0; update < config.max_iterations; ++update) {
    if (auto* trainable = std::get_if<ToyTrainableEncoder>(&encoder)) {
      if (!state.training_set.empty()) {
        TrainConfig tc = train;
        tc.seed = mix_seed(train.seed, update);
        update_encoder_from_state(*trainable, state.training_set, tc);
      }
    }
    if (hooks.on_update) hooks.on_update(update, encoder);
    if (update + 1 == config.max_iterations) break;
    const auto vectors = encode_passages(encoder, passages);
    const DenseIndex index = DenseIndex::build(ids, vectors, encoder_dim(encoder));
    state = run_iteration(state, instances, index, encoder, generator, context, config);
  }
  return state;
}

}  // namespace polyqa
