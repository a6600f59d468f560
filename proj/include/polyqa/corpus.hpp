#pragma once

// Article ingestion, 100-token passage segmentation and short/disambiguation
// filtering.

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyqa/error.hpp"
#include "polyqa/parallel.hpp"
#include "polyqa/text.hpp"

namespace polyqa {

struct Article {
  std::string article_id;
  std::string lang;
  std::string title;
  std::string text;

  bool operator==(const Article&) const = default;
};

struct Passage {
  std::string passage_id;
  std::string article_id;
  std::string lang;
  std::string title;
  std::string text;
  std::size_t token_count = 0;

  bool operator==(const Passage&) const = default;
};

struct LanguageStats {
  std::size_t articles = 0;
  std::size_t passages = 0;
  std::size_t dropped_short = 0;
  std::size_t dropped_disambiguation = 0;

  bool operator==(const LanguageStats&) const = default;
};

struct CorpusStats {
  std::map<std::string, LanguageStats> per_language;
  std::size_t malformed_lines = 0;

  std::size_t total_passages() const {
    std::size_t n = 0;
    for (const auto& [lang, s] : per_language) n += s.passages;
    return n;
  }
};

inline constexpr std::size_t kDefaultMaxTokens = 100;
inline constexpr std::size_t kDefaultMinTokens = 20;

inline std::vector<std::string> default_disambiguation_markers() {
  return {"(disambiguation)", "(曖昧さ回避)",  "(täsmennyssivu)", "(olika betydelser)",
          "(desambiguación)", "(значения)",    "(동음이의)",       "(توضيح)",
          "(פירושונים)",      "(homonymie)",   "(begriffsklärung)"};
}

// Whitespace-delimited tokens, except ja/zh/th/km where every non-whitespace
// character is its own token.
inline std::vector<std::string> tokenize(std::string_view text, std::string_view lang) {
  std::vector<std::string> tokens;
  const auto cps = text::decode_utf8(text);
  if (text::is_unspaced_language(lang)) {
    for (const auto& cp : cps) {
      if (!text::is_space(cp.value)) tokens.emplace_back(text.substr(cp.offset, cp.length));
    }
    return tokens;
  }
  std::size_t start = std::string_view::npos;
  for (const auto& cp : cps) {
    if (text::is_space(cp.value)) {
      if (start != std::string_view::npos) {
        tokens.emplace_back(text.substr(start, cp.offset - start));
        start = std::string_view::npos;
      }
    } else if (start == std::string_view::npos) {
      start = cp.offset;
    }
  }
  if (start != std::string_view::npos) tokens.emplace_back(text.substr(start));
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin,
                               std::size_t end, std::string_view lang) {
  const std::string_view sep = text::is_unspaced_language(lang) ? "" : " ";
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += sep;
    out += tokens[i];
  }
  return out;
}

inline std::vector<Passage> segment_article(const Article& article,
                                            std::size_t max_tokens = kDefaultMaxTokens) {
  if (max_tokens == 0) throw UsageError("segment_article: max_tokens must be >= 1");
  const auto tokens = tokenize(article.text, article.lang);
  std::vector<Passage> passages;
  passages.reserve((tokens.size() + max_tokens - 1) / max_tokens);
  for (std::size_t begin = 0, chunk = 0; begin < tokens.size(); begin += max_tokens, ++chunk) {
    const std::size_t end = std::min(tokens.size(), begin + max_tokens);
    passages.push_back(Passage{article.article_id + "-" + std::to_string(chunk),
                               article.article_id, article.lang, article.title,
                               join_tokens(tokens, begin, end, article.lang), end - begin});
  }
  return passages;
}

struct FilterResult {
  std::vector<Passage> kept;
  std::size_t dropped_short = 0;
  std::size_t dropped_disambiguation = 0;
};

// A passage is dropped when its source title carries a disambiguation marker
// (counted first) or when it has fewer than min_tokens tokens.
inline FilterResult filter_passages(std::vector<Passage> passages,
                                    std::size_t min_tokens = kDefaultMinTokens,
                                    const std::vector<std::string>& disambiguation_markers =
                                        default_disambiguation_markers()) {
  FilterResult result;
  std::vector<std::string> markers;
  markers.reserve(disambiguation_markers.size());
  for (const auto& m : disambiguation_markers) markers.push_back(text::lowercase(m));

  std::unordered_map<std::string, bool> title_cache;
  auto is_disambiguation = [&](const std::string& title) {
    auto it = title_cache.find(title);
    if (it != title_cache.end()) return it->second;
    const std::string lowered = text::lowercase(title);
    bool hit = false;
    for (const auto& m : markers) {
      if (!m.empty() && lowered.find(m) != std::string::npos) {
        hit = true;
        break;
      }
    }
    title_cache.emplace(title, hit);
    return hit;
  };

  for (auto& p : passages) {
    if (is_disambiguation(p.title)) {
      ++result.dropped_disambiguation;
    } else if (p.token_count < min_tokens) {
      ++result.dropped_short;
    } else {
      result.kept.push_back(std::move(p));
    }
  }
  return result;
}

struct DumpError {
  std::size_t line = 0;
  std::string message;
};

// Streams articles from JSON lines with keys id, title, text, lang. Bad lines
// are recorded and skipped; reading continues.
class DumpReader {
 public:
  explicit DumpReader(std::istream& in) : in_(in) {}

  std::optional<Article> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (auto article = parse_line(line)) return article;
    }
    return std::nullopt;
  }

  const std::vector<DumpError>& errors() const { return errors_; }

 private:
  std::optional<Article> parse_line(const std::string& line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      errors_.push_back({line_no_, std::string("malformed JSON: ") + e.what()});
      return std::nullopt;
    }
    if (!j.is_object()) {
      errors_.push_back({line_no_, "line is not a JSON object"});
      return std::nullopt;
    }
    Article a;
    for (const auto& [key, field] : {std::pair{"id", &a.article_id}, std::pair{"title", &a.title},
                                     std::pair{"text", &a.text}, std::pair{"lang", &a.lang}}) {
      auto it = j.find(key);
      if (it == j.end() || !it->is_string()) {
        errors_.push_back({line_no_, std::string("missing or non-string field '") + key + "'"});
        return std::nullopt;
      }
      *field = it->get<std::string>();
    }
    if (a.article_id.empty() || a.lang.empty()) {
      errors_.push_back({line_no_, "empty id or lang"});
      return std::nullopt;
    }
    if (!seen_ids_.insert(a.article_id).second) {
      errors_.push_back({line_no_, "duplicate article id '" + a.article_id + "'"});
      return std::nullopt;
    }
    return a;
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
  std::vector<DumpError> errors_;
  std::unordered_set<std::string> seen_ids_;
};

struct IngestOptions {
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t min_tokens = kDefaultMinTokens;
  std::vector<std::string> disambiguation_markers = default_disambiguation_markers();
};

struct IngestResult {
  std::vector<Passage> passages;
  CorpusStats stats;
  std::vector<DumpError> errors;
};

// Segments and filters articles in parallel; output keeps input order.
inline IngestResult ingest_articles(const std::vector<Article>& articles,
                                    const IngestOptions& options = {}) {
  std::vector<FilterResult> per_article(articles.size());
  parallel_for(articles.size(), [&](std::size_t i) {
    per_article[i] = filter_passages(segment_article(articles[i], options.max_tokens),
                                     options.min_tokens, options.disambiguation_markers);
  });
  IngestResult result;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    auto& s = result.stats.per_language[articles[i].lang];
    ++s.articles;
    s.passages += per_article[i].kept.size();
    s.dropped_short += per_article[i].dropped_short;
    s.dropped_disambiguation += per_article[i].dropped_disambiguation;
    for (auto& p : per_article[i].kept) result.passages.push_back(std::move(p));
  }
  return result;
}

inline IngestResult ingest_stream(std::istream& in, const IngestOptions& options = {}) {
  DumpReader reader(in);
  std::vector<Article> articles;
  while (auto a = reader.next()) articles.push_back(std::move(*a));
  IngestResult result = ingest_articles(articles, options);
  result.errors = reader.errors();
  result.stats.malformed_lines = result.errors.size();
  return result;
}

inline nlohmann::json to_json(const Passage& p) {
  return {{"passage_id", p.passage_id}, {"article_id", p.article_id}, {"lang", p.lang},
          {"title", p.title},           {"text", p.text},             {"token_count", p.token_count}};
}

inline Passage passage_from_json(const nlohmann::json& j) {
  try {
    return Passage{j.at("passage_id").get<std::string>(), j.at("article_id").get<std::string>(),
                   j.at("lang").get<std::string>(),       j.at("title").get<std::string>(),
                   j.at("text").get<std::string>(),       j.at("token_count").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad passage record: ") + e.what());
  }
}

inline nlohmann::json to_json(const CorpusStats& stats) {
  nlohmann::json langs = nlohmann::json::object();
  for (const auto& [lang, s] : stats.per_language) {
    langs[lang] = {{"articles", s.articles},
                   {"passages", s.passages},
                   {"dropped_short", s.dropped_short},
                   {"dropped_disambiguation", s.dropped_disambiguation}};
  }
  return {{"languages", langs},
          {"total_passages", stats.total_passages()},
          {"malformed_lines", stats.malformed_lines}};
}

// Id-addressable passage collection with a (lang, title) -> passages lookup
// used by language-link expansion.
class PassageStore {
 public:
  PassageStore() = default;
  explicit PassageStore(std::vector<Passage> passages) : passages_(std::move(passages)) {
    for (std::size_t i = 0; i < passages_.size(); ++i) {
      const auto& p = passages_[i];
      if (!by_id_.emplace(p.passage_id, i).second) {
        throw DataError("duplicate passage id '" + p.passage_id + "'");
      }
      by_article_[p.lang + '\t' + p.title].push_back(i);
    }
  }

  const std::vector<Passage>& passages() const { return passages_; }
  std::size_t size() const { return passages_.size(); }

  const Passage* find(const std::string& passage_id) const {
    auto it = by_id_.find(passage_id);
    return it == by_id_.end() ? nullptr : &passages_[it->second];
  }

  const Passage& at(const std::string& passage_id) const {
    if (const Passage* p = find(passage_id)) return *p;
    throw DataError("unknown passage id '" + passage_id + "'");
  }

  // Passages of the article titled `title` in language `lang`, in corpus order.
  std::vector<const Passage*> article_passages(const std::string& lang,
                                               const std::string& title) const {
    std::vector<const Passage*> out;
    auto it = by_article_.find(lang + '\t' + title);
    if (it == by_article_.end()) return out;
    for (std::size_t i : it->second) out.push_back(&passages_[i]);
    return out;
  }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_article_;
};

}  // namespace polyqa
