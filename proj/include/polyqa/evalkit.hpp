#pragma once

// Answer metrics (token F1, exact match, smoothed sentence BLEU), retrieval
// recall in the target language and across all languages, language
// categories, and macro-averaged reports.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyqa/corpus.hpp"
#include "polyqa/error.hpp"
#include "polyqa/generator.hpp"
#include "polyqa/text.hpp"

namespace polyqa::eval {

// lang -> acceptable answers
using AnswerSet = std::map<std::string, std::vector<std::string>>;

namespace detail {
inline std::vector<std::string> metric_tokens(std::string_view s, std::string_view lang) {
  return tokenize(text::normalize_answer(s), lang);
}

inline void require_golds(const std::vector<std::string>& golds, const char* what) {
  if (golds.empty()) throw UsageError(std::string(what) + ": golds must be non-empty");
}
}  // namespace detail

// Multiset-overlap F1 on normalized tokens, max over golds.
inline double token_f1(std::string_view prediction, const std::vector<std::string>& golds,
                       std::string_view lang) {
  detail::require_golds(golds, "token_f1");
  const auto pred = detail::metric_tokens(prediction, lang);
  double best = 0.0;
  for (const auto& g : golds) {
    const auto gold = detail::metric_tokens(g, lang);
    if (pred.empty() || gold.empty()) {
      if (pred.empty() && gold.empty()) best = std::max(best, 1.0);
      continue;
    }
    std::map<std::string, long> counts;
    for (const auto& t : gold) ++counts[t];
    long common = 0;
    for (const auto& t : pred) {
      auto it = counts.find(t);
      if (it != counts.end() && it->second > 0) {
        --it->second;
        ++common;
      }
    }
    if (common == 0) continue;
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    best = std::max(best, 2.0 * precision * recall / (precision + recall));
  }
  return best;
}

inline bool exact_match(std::string_view prediction, const std::vector<std::string>& golds,
                        std::string_view lang) {
  detail::require_golds(golds, "exact_match");
  for (const auto& g : golds) {
    if (answer_matches(prediction, g, lang)) return true;
  }
  return false;
}

// Sentence BLEU over normalized tokens: n-gram orders 1..min(4, |prediction|),
// uniform weights, clipped counts. An order with zero matches uses
// (0 + 1) / (total + 1). Brevity penalty exp(1 - r/c) when c < r.
inline double bleu(std::string_view prediction, const std::vector<std::string>& golds,
                   std::string_view lang) {
  detail::require_golds(golds, "bleu");
  const auto hyp = detail::metric_tokens(prediction, lang);
  if (hyp.empty()) return 0.0;
  const std::size_t max_order = std::min<std::size_t>(4, hyp.size());

  auto ngrams = [](const std::vector<std::string>& toks, std::size_t n) {
    std::map<std::vector<std::string>, long> counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
    }
    return counts;
  };

  double best = 0.0;
  for (const auto& g : golds) {
    const auto ref = detail::metric_tokens(g, lang);
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_order; ++n) {
      const auto h = ngrams(hyp, n);
      const auto r = ngrams(ref, n);
      long matched = 0;
      long total = 0;
      for (const auto& [gram, count] : h) {
        total += count;
        auto it = r.find(gram);
        if (it != r.end()) matched += std::min(count, it->second);
      }
      const double precision = matched > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                                           : 1.0 / static_cast<double>(total + 1);
      log_sum += std::log(precision);
    }
    const double c = static_cast<double>(hyp.size());
    const double r = static_cast<double>(ref.size());
    const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
    best = std::max(best, brevity * std::exp(log_sum / static_cast<double>(max_order)));
  }
  return best;
}

struct RecallHit {
  bool target = false;
  bool multi = false;
  bool target_missing = false;  // no answers annotated for the target language
};

// Substring containment after NFKC on both sides, over the first k passages.
inline RecallHit recall_at_k(const std::vector<Passage>& retrieved, const AnswerSet& answers,
                             const std::string& target_lang, std::size_t k) {
  if (k == 0) throw UsageError("recall_at_k: k must be >= 1");
  RecallHit hit;
  auto target_it = answers.find(target_lang);
  hit.target_missing = target_it == answers.end() || target_it->second.empty();

  std::set<std::string> target_norm;
  std::set<std::string> all_norm;
  for (const auto& [lang, list] : answers) {
    for (const auto& a : list) {
      auto n = text::nfkc(a);
      if (n.empty()) continue;
      if (lang == target_lang) target_norm.insert(n);
      all_norm.insert(std::move(n));
    }
  }
  const std::size_t limit = std::min(k, retrieved.size());
  for (std::size_t i = 0; i < limit && !(hit.target && hit.multi); ++i) {
    const std::string body = text::nfkc(retrieved[i].text);
    for (const auto& a : target_norm) {
      if (body.find(a) != std::string::npos) {
        hit.target = true;
        break;
      }
    }
    if (hit.target) {
      hit.multi = true;
      continue;
    }
    for (const auto& a : all_norm) {
      if (body.find(a) != std::string::npos) {
        hit.multi = true;
        break;
      }
    }
  }
  return hit;
}

enum class LanguageCategory { kSeen, kMDPRSeen, kMGENSeen, kUnseen };

inline const char* to_string(LanguageCategory c) {
  switch (c) {
    case LanguageCategory::kSeen: return "seen";
    case LanguageCategory::kMDPRSeen: return "mdpr-seen";
    case LanguageCategory::kMGENSeen: return "mgen-seen";
    case LanguageCategory::kUnseen: return "unseen";
  }
  return "unseen";
}

struct CategoryConfig {
  std::vector<std::string> gold_annotated;
  std::vector<std::string> retriever_mined;
  std::vector<std::string> generator_synthetic;

  // Assignments used for the 28-language multilingual benchmark: languages
  // with human-annotated passages, corpus languages covered only by mined
  // retriever data, and languages reached only through synthetic generator
  // answers.
  static CategoryConfig reference() {
    return {{"en", "ar", "bn", "fi", "ja", "ko", "ru", "te"},
            {"es", "sv", "he", "th"},
            {"da", "de", "fr", "it", "nl", "pl", "pt"}};
  }
};

inline LanguageCategory categorize_language(const std::string& lang, const CategoryConfig& config) {
  auto in = [&](const std::vector<std::string>& list) {
    return std::find(list.begin(), list.end(), lang) != list.end();
  };
  if (in(config.gold_annotated)) return LanguageCategory::kSeen;
  if (in(config.retriever_mined)) return LanguageCategory::kMDPRSeen;
  if (in(config.generator_synthetic)) return LanguageCategory::kMGENSeen;
  return LanguageCategory::kUnseen;
}

// One scored question. Missing optionals are excluded from the matching means.
struct QuestionRecord {
  std::string question_id;
  std::string lang;
  std::optional<double> f1;
  std::optional<bool> em;
  std::optional<double> bleu;
  std::optional<RecallHit> recall;
};

struct LanguageReport {
  std::size_t questions = 0;
  std::size_t answered = 0;
  std::size_t retrievals = 0;
  std::size_t target_missing = 0;
  double f1 = 0.0;
  double em = 0.0;
  double bleu = 0.0;
  double recall_target = 0.0;
  double recall_multi = 0.0;
};

struct MacroReport {
  double f1 = 0.0;
  double em = 0.0;
  double bleu = 0.0;
  std::optional<double> recall_target;
  std::optional<double> recall_multi;
};

struct EvalReport {
  std::size_t k = 10;
  std::map<std::string, LanguageReport> languages;
  std::optional<MacroReport> macro;  // absent when there are no answered questions
  std::optional<MacroReport> macro_retrieval_only;
  std::size_t total_questions = 0;
};

// Per-language means, then the unweighted mean across languages.
inline EvalReport aggregate(const std::vector<QuestionRecord>& records, std::size_t k = 10) {
  struct Sums {
    double f1 = 0, em = 0, bleu = 0, rt = 0, rm = 0;
  };
  EvalReport report;
  report.k = k;
  report.total_questions = records.size();
  std::map<std::string, Sums> sums;
  for (const auto& r : records) {
    auto& lang = report.languages[r.lang];
    auto& s = sums[r.lang];
    ++lang.questions;
    if (r.f1 && r.em && r.bleu) {
      ++lang.answered;
      s.f1 += *r.f1;
      s.em += *r.em ? 1.0 : 0.0;
      s.bleu += *r.bleu;
    }
    if (r.recall) {
      ++lang.retrievals;
      lang.target_missing += r.recall->target_missing ? 1 : 0;
      s.rt += r.recall->target ? 1.0 : 0.0;
      s.rm += r.recall->multi ? 1.0 : 0.0;
    }
  }
  MacroReport macro;
  std::size_t answered_langs = 0;
  std::size_t retrieval_langs = 0;
  double rt = 0.0, rm = 0.0;
  for (auto& [name, lang] : report.languages) {
    const auto& s = sums[name];
    if (lang.answered > 0) {
      const double n = static_cast<double>(lang.answered);
      lang.f1 = s.f1 / n;
      lang.em = s.em / n;
      lang.bleu = s.bleu / n;
      macro.f1 += lang.f1;
      macro.em += lang.em;
      macro.bleu += lang.bleu;
      ++answered_langs;
    }
    if (lang.retrievals > 0) {
      const double n = static_cast<double>(lang.retrievals);
      lang.recall_target = s.rt / n;
      lang.recall_multi = s.rm / n;
      rt += lang.recall_target;
      rm += lang.recall_multi;
      ++retrieval_langs;
    }
  }
  if (retrieval_langs > 0) {
    macro.recall_target = rt / static_cast<double>(retrieval_langs);
    macro.recall_multi = rm / static_cast<double>(retrieval_langs);
  }
  if (answered_langs > 0) {
    const double n = static_cast<double>(answered_langs);
    macro.f1 /= n;
    macro.em /= n;
    macro.bleu /= n;
    report.macro = macro;
  } else if (retrieval_langs > 0) {
    report.macro_retrieval_only = macro;
  }
  return report;
}

inline nlohmann::json to_json(const EvalReport& report, const CategoryConfig* categories = nullptr) {
  nlohmann::json langs = nlohmann::json::object();
  for (const auto& [name, l] : report.languages) {
    nlohmann::json row = {{"questions", l.questions}, {"answered", l.answered}, {"retrievals", l.retrievals}};
    if (l.answered > 0) {
      row["f1"] = l.f1;
      row["em"] = l.em;
      row["bleu"] = l.bleu;
    }
    if (l.retrievals > 0) {
      row["recall_target"] = l.recall_target;
      row["recall_multi"] = l.recall_multi;
      row["target_answers_missing"] = l.target_missing;
    }
    if (categories) row["category"] = to_string(categorize_language(name, *categories));
    langs[name] = row;
  }
  nlohmann::json out = {{"k", report.k}, {"total_questions", report.total_questions}, {"languages", langs}};
  const auto& macro = report.macro ? report.macro : report.macro_retrieval_only;
  if (macro) {
    nlohmann::json m = nlohmann::json::object();
    if (report.macro) {
      m["f1"] = macro->f1;
      m["em"] = macro->em;
      m["bleu"] = macro->bleu;
    }
    if (macro->recall_target) m["recall_target"] = *macro->recall_target;
    if (macro->recall_multi) m["recall_multi"] = *macro->recall_multi;
    out["macro"] = m;
  }
  return out;
}

// One row per language in table layout; scores in percent with one decimal.
inline std::string to_tsv(const EvalReport& report, const CategoryConfig* categories = nullptr) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return std::string(buf);
  };
  const std::string k = std::to_string(report.k);
  std::string out = "lang\tcategory\tF1\tEM\tBLEU\tR^L@" + k + "\tR^multi@" + k + "\n";
  for (const auto& [name, l] : report.languages) {
    out += name + '\t' + (categories ? to_string(categorize_language(name, *categories)) : "-") + '\t';
    out += (l.answered ? pct(l.f1) : "-") + '\t' + (l.answered ? pct(l.em) : "-") + '\t' +
           (l.answered ? pct(l.bleu) : "-") + '\t';
    out += (l.retrievals ? pct(l.recall_target) : "-") + '\t' + (l.retrievals ? pct(l.recall_multi) : "-") + '\n';
  }
  return out;
}

}  // namespace polyqa::eval
