#pragma once

// Seeded synthetic multilingual world: articles in several pseudo-languages,
// language links between same-entity articles and between answer entities,
// and English questions whose evidence is either in the English article or
// only in a linked article of the second language.

#include <cstdio>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "polyqa/corpus.hpp"
#include "polyqa/evalkit.hpp"
#include "polyqa/miner.hpp"

namespace polyqa::toy {

struct WorldConfig {
  uint64_t seed = 0;
  std::size_t entities = 150;
  // languages[0] is the question language; languages[1] always carries the
  // evidence; further languages exist for every `extra_language_stride`-th entity.
  std::vector<std::string> languages = {"en", "xa", "xb"};
  double cross_lingual_fraction = 0.4;
  std::size_t extra_language_stride = 2;
  std::size_t filler_vocabulary = 200;
  std::size_t relations = 6;
  std::size_t sentences = 5;
  // Fraction of entities whose extra-language article states the answer next
  // to `spurious_marker`.
  double spurious_fraction = 0.0;
  std::string spurious_marker = "(unsupported)";
};

struct World {
  std::vector<Article> articles;
  LanguageLinkTable links;
  std::vector<QAInstance> instances;
  std::map<std::string, eval::AnswerSet> answer_sets;  // by question id
  std::vector<bool> cross_lingual;                     // per instance
  std::vector<bool> spurious;                          // per instance
};

inline std::string pad4(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

// Pseudo-word such as "xa.ent0042"; distinct (lang, kind, i) never nest as substrings.
inline std::string code(const std::string& lang, const char* kind, std::size_t i) {
  return lang + "." + kind + pad4(i);
}

inline World build_world(const WorldConfig& config) {
  if (config.languages.size() < 2) throw UsageError("toy world needs at least two languages");
  if (config.entities > 9999) throw UsageError("toy world supports at most 9999 entities");
  if (config.extra_language_stride == 0) throw UsageError("extra_language_stride must be >= 1");
  std::mt19937_64 rng(mix_seed(config.seed, 0x707));
  World world;

  std::vector<std::size_t> order(config.entities);
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, rng);
  const auto n_cross = static_cast<std::size_t>(std::llround(config.cross_lingual_fraction * config.entities));
  const auto n_spurious = static_cast<std::size_t>(std::llround(config.spurious_fraction * config.entities));
  std::vector<bool> cross(config.entities, false), spurious(config.entities, false);
  for (std::size_t i = 0; i < n_cross; ++i) cross[order[i]] = true;
  seeded_shuffle(order, rng);
  for (std::size_t i = 0; i < n_spurious; ++i) spurious[order[i]] = true;

  const std::string& qlang = config.languages[0];
  for (std::size_t e = 0; e < config.entities; ++e) {
    const std::size_t relation = draw_index(rng, config.relations);
    LanguageLinkTable::Entity entity{"E" + pad4(e), {}};
    LanguageLinkTable::Entity answer{"A" + pad4(e), {}};
    eval::AnswerSet answers;
    for (std::size_t li = 0; li < config.languages.size(); ++li) {
      const std::string& lang = config.languages[li];
      const bool exists = li < 2 || e % config.extra_language_stride == 0;
      answer.titles[lang] = code(lang, "ans", e);
      answers[lang] = {code(lang, "ans", e)};
      if (!exists) continue;
      const std::string ent = code(lang, "ent", e);
      const bool states_answer = li == 0 ? !cross[e] : true;
      const bool marked = li >= 2 && spurious[e];

      std::vector<std::string> sentences;
      for (std::size_t s = 0; s < config.sentences; ++s) {
        std::string sentence = ent;
        const std::size_t len = 4 + draw_index(rng, 5);
        for (std::size_t w = 0; w < len; ++w) {
          sentence += ' ' + code(lang, "w", draw_index(rng, config.filler_vocabulary));
        }
        sentences.push_back(sentence + " .");
      }
      if (states_answer) {
        std::string fact = ent + ' ' + lang + ".rel" + std::to_string(relation) + ' ' + code(lang, "ans", e);
        if (marked) fact += ' ' + config.spurious_marker;
        sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(draw_index(rng, sentences.size() + 1)),
                         fact + " .");
      }
      std::string text;
      for (const auto& s : sentences) text += (text.empty() ? "" : " ") + s;
      entity.titles[lang] = ent;
      world.articles.push_back({lang + "_" + pad4(e), lang, ent, text});
    }
    world.links.add(std::move(entity));
    world.links.add(std::move(answer));

    QAInstance inst;
    inst.question = {"q" + pad4(e), qlang,
                     "what " + qlang + ".rel" + std::to_string(relation) + " of " + code(qlang, "ent", e) + " ?"};
    inst.answers = {code(qlang, "ans", e)};
    inst.gold_passage_ids = {qlang + "_" + pad4(e) + "-0"};
    world.answer_sets[inst.question.question_id] = answers;
    world.instances.push_back(std::move(inst));
    world.cross_lingual.push_back(cross[e]);
    world.spurious.push_back(spurious[e]);
  }
  return world;
}

}  // namespace polyqa::toy
