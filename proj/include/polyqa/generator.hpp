#pragma once

// Answer generation contract: prompt grammar, the extractive toy generator,
// the remote sidecar generator, answer matching and passage labeling.

#include <algorithm>
#include <future>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "polyqa/corpus.hpp"
#include "polyqa/error.hpp"
#include "polyqa/question.hpp"
#include "polyqa/text.hpp"
#include "polyqa/wire.hpp"

namespace polyqa {

struct PromptPassage {
  std::size_t rank = 0;
  std::string title;
  std::string text;

  bool operator==(const PromptPassage&) const = default;
};

struct GenerationResult {
  std::string answer;
  std::vector<double> token_logprobs;
  double sequence_logprob = 0.0;
};

inline constexpr std::size_t kDefaultPromptPassages = 10;
inline constexpr std::size_t kDefaultAnswerRetrieval = 15;
inline constexpr std::size_t kDefaultMaxAnswerTokens = 10;

// Grammar:
//   "<Q>: " question " [" lang "] <P>: " passage (" " passage)*
//   passage = "<" rank ": " title "> " text
inline std::string format_prompt(const Question& question, const std::vector<PromptPassage>& passages) {
  std::string out = "<Q>: " + question.text + " [" + question.lang + "] <P>: ";
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (passages[i].rank != i) throw UsageError("format_prompt: passage ranks must be 0..n-1");
    if (i > 0) out += ' ';
    out += '<' + std::to_string(passages[i].rank) + ": " + passages[i].title + "> " + passages[i].text;
  }
  return out;
}

struct ParsedPrompt {
  std::string question;
  std::string lang;
  std::vector<PromptPassage> passages;

  bool operator==(const ParsedPrompt&) const = default;
};

// Inverse of format_prompt for titles and texts free of '<' and '>'.
inline std::optional<ParsedPrompt> parse_prompt(std::string_view prompt) {
  constexpr std::string_view kHead = "<Q>: ";
  constexpr std::string_view kSplit = "] <P>: ";
  if (!prompt.starts_with(kHead)) return std::nullopt;
  const std::size_t split = prompt.find(kSplit, kHead.size());
  if (split == std::string_view::npos) return std::nullopt;
  const std::size_t tag = prompt.rfind(" [", split);
  if (tag == std::string_view::npos || tag < kHead.size()) return std::nullopt;

  ParsedPrompt out;
  out.question = std::string(prompt.substr(kHead.size(), tag - kHead.size()));
  out.lang = std::string(prompt.substr(tag + 2, split - tag - 2));
  std::size_t pos = split + kSplit.size();
  while (pos < prompt.size()) {
    if (prompt[pos] != '<') return std::nullopt;
    const std::size_t colon = prompt.find(": ", pos);
    const std::size_t close = prompt.find('>', pos);
    if (colon == std::string_view::npos || close == std::string_view::npos || colon > close) {
      return std::nullopt;
    }
    PromptPassage p;
    const auto rank_str = prompt.substr(pos + 1, colon - pos - 1);
    if (rank_str.empty() || !std::all_of(rank_str.begin(), rank_str.end(), ::isdigit)) return std::nullopt;
    p.rank = std::stoul(std::string(rank_str));
    p.title = std::string(prompt.substr(colon + 2, close - colon - 2));
    if (close + 1 >= prompt.size() || prompt[close + 1] != ' ') return std::nullopt;
    const std::size_t text_begin = close + 2;
    std::size_t next = prompt.find(" <", text_begin);
    if (next == std::string_view::npos) next = prompt.size();
    p.text = std::string(prompt.substr(text_begin, next - text_begin));
    out.passages.push_back(std::move(p));
    pos = next == prompt.size() ? next : next + 1;
  }
  return out;
}

// Equality used for mining labels and exact match.
inline bool answer_matches(std::string_view prediction, std::string_view gold,
                           std::string_view /*lang*/ = {}) {
  return text::normalize_answer(prediction) == text::normalize_answer(gold);
}

// ---------------------------------------------------------------------------

// Extractive stand-in for the generator. With oracle answers attached it
// returns the earliest oracle string found in the earliest extractable
// passage, or the leading span of the first extractable passage when no
// oracle string occurs. Without an oracle it returns the leading span of the extractable passage
// sharing the most tokens with the question (lowest rank wins ties).
// Passages containing an unextractable marker yield nothing, which is how
// tests model spurious passages.
struct ToyExtractiveGenerator {
  std::size_t max_answer_tokens = kDefaultMaxAnswerTokens;
  std::optional<std::vector<std::string>> oracle_answers;
  // When labeling, attach the gold answers as the oracle if none is set.
  bool oracle_from_gold = true;
  std::vector<std::string> unextractable_markers;

  bool extractable(const PromptPassage& p) const {
    for (const auto& m : unextractable_markers) {
      if (!m.empty() && (p.text.find(m) != std::string::npos || p.title.find(m) != std::string::npos)) {
        return false;
      }
    }
    return true;
  }

  GenerationResult generate(const Question& question, const std::vector<PromptPassage>& passages) const {
    GenerationResult result;
    std::vector<const PromptPassage*> usable;
    for (const auto& p : passages) {
      if (extractable(p)) usable.push_back(&p);
    }
    if (usable.empty()) return result;

    std::string answer;
    std::string answer_lang = question.lang;
    if (oracle_answers) {
      for (const auto* p : usable) {
        std::size_t best_pos = std::string::npos;
        for (const auto& a : *oracle_answers) {
          if (a.empty()) continue;
          const std::size_t pos = p->text.find(a);
          if (pos < best_pos) {
            best_pos = pos;
            answer = a;
          }
        }
        if (best_pos != std::string::npos) break;
      }
    }
    if (answer.empty()) {
      std::vector<std::string> content;
      for (const auto& t : tokenize(question.text, question.lang)) {
        auto n = text::normalize_answer(t);
        if (!n.empty()) content.push_back(std::move(n));
      }
      const PromptPassage* best = usable.front();
      std::size_t best_overlap = 0;
      for (const auto* p : oracle_answers ? std::vector<const PromptPassage*>{} : usable) {
        std::size_t overlap = 0;
        for (const auto& t : tokenize(p->text, question.lang)) {
          if (std::find(content.begin(), content.end(), text::normalize_answer(t)) != content.end()) {
            ++overlap;
          }
        }
        if (overlap > best_overlap) {
          best_overlap = overlap;
          best = p;
        }
      }
      const auto tokens = tokenize(best->text, question.lang);
      answer = join_tokens(tokens, 0, std::min(tokens.size(), max_answer_tokens), question.lang);
    }
    result.answer = answer;
    result.token_logprobs.assign(tokenize(answer, answer_lang).size(), 0.0);
    result.sequence_logprob = 0.0;
    return result;
  }
};

struct RemoteGenerator {
  std::string endpoint;
  std::size_t max_answer_tokens = kDefaultMaxAnswerTokens;
  std::size_t max_in_flight = 4;

  std::vector<GenerationResult> generate_prompts(const std::vector<std::string>& prompts) const {
    std::vector<GenerationResult> out(prompts.size());
    if (prompts.empty()) return out;
    wire::HttpClient client(endpoint);
    const std::size_t lanes = std::max<std::size_t>(1, max_in_flight);
    // One request per prompt, at most `lanes` outstanding at a time.
    for (std::size_t begin = 0; begin < prompts.size(); begin += lanes) {
      const std::size_t end = std::min(prompts.size(), begin + lanes);
      std::vector<std::future<wire::GeneratedOutput>> pending;
      for (std::size_t i = begin; i < end; ++i) {
        pending.push_back(std::async(std::launch::async, [&, i] {
          auto body = wire::make_generate_request({prompts[i]}, static_cast<int>(max_answer_tokens));
          const auto response = client.post("/generate", body);
          try {
            return wire::parse_generate_response(response, 1).front();
          } catch (const DataError& e) {
            throw TransportError(endpoint, std::string("/generate: ") + e.what());
          }
        }));
      }
      for (std::size_t i = begin; i < end; ++i) {
        auto g = pending[i - begin].get();
        GenerationResult r;
        r.answer = std::move(g.text);
        r.token_logprobs = std::move(g.token_logprobs);
        for (double lp : r.token_logprobs) r.sequence_logprob += lp;
        out[i] = std::move(r);
      }
    }
    return out;
  }
};

using Generator = std::variant<ToyExtractiveGenerator, RemoteGenerator>;

inline GenerationResult generate(const Generator& generator, const Question& question,
                                 const std::vector<PromptPassage>& passages) {
  if (const auto* toy = std::get_if<ToyExtractiveGenerator>(&generator)) {
    return toy->generate(question, passages);
  }
  if (passages.empty()) return {};
  return std::get<RemoteGenerator>(generator).generate_prompts({format_prompt(question, passages)}).front();
}

// Answers many (question, passages) inputs; remote calls run with bounded
// concurrency.
inline std::vector<GenerationResult> generate_many(
    const Generator& generator, const std::vector<Question>& questions,
    const std::vector<std::vector<PromptPassage>>& passages) {
  if (questions.size() != passages.size()) throw UsageError("generate_many: size mismatch");
  std::vector<GenerationResult> out(questions.size());
  if (const auto* remote = std::get_if<RemoteGenerator>(&generator)) {
    std::vector<std::string> prompts;
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < questions.size(); ++i) {
      if (passages[i].empty()) continue;
      prompts.push_back(format_prompt(questions[i], passages[i]));
      slots.push_back(i);
    }
    auto results = remote->generate_prompts(prompts);
    for (std::size_t j = 0; j < slots.size(); ++j) out[slots[j]] = std::move(results[j]);
    return out;
  }
  for (std::size_t i = 0; i < questions.size(); ++i) out[i] = generate(generator, questions[i], passages[i]);
  return out;
}

inline std::vector<PromptPassage> to_prompt_passages(const std::vector<const Passage*>& passages) {
  std::vector<PromptPassage> out;
  out.reserve(passages.size());
  for (std::size_t r = 0; r < passages.size(); ++r) out.push_back({r, passages[r]->title, passages[r]->text});
  return out;
}

// The generator actually used to label against `golds`: a toy generator
// without its own oracle gets the gold answers attached.
inline Generator labeling_generator(const Generator& generator, const std::vector<std::string>& golds) {
  if (const auto* toy = std::get_if<ToyExtractiveGenerator>(&generator)) {
    if (toy->oracle_from_gold && !toy->oracle_answers) {
      ToyExtractiveGenerator copy = *toy;
      copy.oracle_answers = golds;
      return copy;
    }
  }
  return generator;
}

enum class Label { kPositive, kNegative };

// Generates from the single passage; positive iff the answer matches any gold.
inline Label label_passage_any(const Generator& generator, const Question& question,
                               const Passage& passage, const std::vector<std::string>& golds) {
  const Generator effective = labeling_generator(generator, golds);
  const auto result = generate(effective, question, {PromptPassage{0, passage.title, passage.text}});
  for (const auto& g : golds) {
    if (answer_matches(result.answer, g, question.lang)) return Label::kPositive;
  }
  return Label::kNegative;
}

inline Label label_passage(const Generator& generator, const Question& question,
                           const Passage& passage, const std::string& gold_answer) {
  return label_passage_any(generator, question, passage, {gold_answer});
}

}  // namespace polyqa
