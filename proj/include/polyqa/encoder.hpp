#pragma once

// Dual-encoder contract (question tower / passage tower), the inner-product
// relevance score, the in-batch-negative NLL objective and its exact gradient
// for the trainable bag-of-embeddings encoder.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "polyqa/binary.hpp"
#include "polyqa/corpus.hpp"
#include "polyqa/error.hpp"
#include "polyqa/io.hpp"
#include "polyqa/parallel.hpp"
#include "polyqa/question.hpp"
#include "polyqa/text.hpp"
#include "polyqa/wire.hpp"

namespace polyqa {

inline constexpr std::size_t kDefaultDim = 768;

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
    for (float v : values_) {
      if (!std::isfinite(v)) throw DataError("embedding holds a non-finite value");
    }
  }
  static EmbeddingVector zeros(std::size_t dim) { return EmbeddingVector(std::vector<float>(dim)); }

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<float> values_;
};

// Products of two floats are exact in double; the sum is accumulated in
// index order so every caller gets bit-identical scores.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

inline double relevance_score(const EmbeddingVector& q, const EmbeddingVector& p) {
  if (q.dim() != p.dim()) {
    throw UsageError("relevance_score: dim mismatch " + std::to_string(q.dim()) + " vs " +
                     std::to_string(p.dim()));
  }
  return dot(q.values(), p.values());
}

inline std::string serialize_passage(const std::string& title, const std::string& text) {
  return "[CLS] " + title + " [SEP] " + text + " [SEP]";
}

// Token sequence of the serialized passage. Markers stay whole tokens even
// for per-character languages.
inline std::vector<std::string> passage_tokens(const Passage& p) {
  std::vector<std::string> tokens{"[CLS]"};
  for (auto& t : tokenize(p.title, p.lang)) tokens.push_back(std::move(t));
  tokens.emplace_back("[SEP]");
  for (auto& t : tokenize(p.text, p.lang)) tokens.push_back(std::move(t));
  tokens.emplace_back("[SEP]");
  return tokens;
}

inline std::vector<std::string> question_tokens(const Question& q) {
  return tokenize(q.text, q.lang);
}

// ---------------------------------------------------------------------------
// Toy hash encoder: signed feature hashing into dim buckets, L2-normalized.

struct ToyHashEncoder {
  std::size_t dim = kDefaultDim;
  uint64_t seed = 0;

  EmbeddingVector encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<double> acc(dim, 0.0);
    const uint64_t basis = text::fnv1a64(std::to_string(seed));
    for (const auto& t : tokens) {
      const uint64_t h = text::fnv1a64(t, basis);
      acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    std::vector<float> out(dim, 0.0f);
    if (norm > 0.0) {
      const double inv = 1.0 / std::sqrt(norm);
      for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] * inv);
    }
    return EmbeddingVector(std::move(out));
  }
};

// ---------------------------------------------------------------------------
// Toy trainable encoder: one (vocab x dim) embedding table per tower; a text
// encodes to the mean of its token rows (zero for an empty text). Tokens map
// to rows by hashing.

class ToyTrainableEncoder {
 public:
  ToyTrainableEncoder() = default;
  ToyTrainableEncoder(std::size_t vocab_size, std::size_t dim)
      : vocab_size_(vocab_size), dim_(dim), question_(vocab_size * dim), passage_(vocab_size * dim) {
    if (vocab_size == 0 || dim == 0) throw UsageError("toy-trainable encoder needs vocab, dim >= 1");
  }

  // Uniform init in [-scale, scale]; the towers draw from separate streams.
  static ToyTrainableEncoder random(std::size_t vocab_size, std::size_t dim, uint64_t seed,
                                    double scale = 0.1) {
    ToyTrainableEncoder enc(vocab_size, dim);
    std::mt19937_64 q_rng(seed * 2 + 1);
    std::mt19937_64 p_rng(seed * 2 + 2);
    auto draw = [scale](std::mt19937_64& rng) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      return static_cast<float>((2.0 * u - 1.0) * scale);
    };
    for (auto& v : enc.question_) v = draw(q_rng);
    for (auto& v : enc.passage_) v = draw(p_rng);
    return enc;
  }

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t dim() const { return dim_; }
  bool freeze_question_tower = false;

  std::size_t row_of(const std::string& token) const { return text::fnv1a64(token) % vocab_size_; }

  std::vector<float>& question_params() { return question_; }
  std::vector<float>& passage_params() { return passage_; }
  const std::vector<float>& question_params() const { return question_; }
  const std::vector<float>& passage_params() const { return passage_; }

  std::vector<double> encode_question_exact(const Question& q) const {
    return mean_rows(question_, question_tokens(q));
  }
  std::vector<double> encode_passage_exact(const Passage& p) const {
    return mean_rows(passage_, passage_tokens(p));
  }

  std::vector<double> mean_rows(const std::vector<float>& table,
                                const std::vector<std::string>& tokens) const {
    std::vector<double> out(dim_, 0.0);
    if (tokens.empty()) return out;
    for (const auto& t : tokens) {
      const float* row = &table[row_of(t) * dim_];
      for (std::size_t d = 0; d < dim_; ++d) out[d] += row[d];
    }
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (auto& v : out) v *= inv;
    return out;
  }

  bool operator==(const ToyTrainableEncoder& o) const {
    return vocab_size_ == o.vocab_size_ && dim_ == o.dim_ && question_ == o.question_ &&
           passage_ == o.passage_;
  }

  // "XLENC001", u32 vocab_size, u32 dim, question tower then passage tower as
  // row-major little-endian float32.
  std::string serialize() const {
    binary::Writer w;
    w.bytes("XLENC001");
    w.uint<uint32_t>(static_cast<uint32_t>(vocab_size_));
    w.uint<uint32_t>(static_cast<uint32_t>(dim_));
    for (float v : question_) w.f32(v);
    for (float v : passage_) w.f32(v);
    return w.take();
  }

  static ToyTrainableEncoder deserialize(std::string_view data) {
    binary::Reader r(data);
    if (data.size() < 8 || r.bytes(8, "magic") != "XLENC001") throw DataError("bad magic in encoder file");
    const auto vocab = r.uint<uint32_t>("vocab_size");
    const auto dim = r.uint<uint32_t>("dim");
    if (vocab == 0 || dim == 0) throw DataError("encoder file has zero dimension");
    if (r.remaining() != 2ull * vocab * dim * 4) {
      throw binary::TruncatedError("encoder parameter block size mismatch");
    }
    ToyTrainableEncoder enc(vocab, dim);
    for (auto& v : enc.question_) v = r.f32("question tower");
    for (auto& v : enc.passage_) v = r.f32("passage tower");
    return enc;
  }

  void save(const std::string& path) const { io::atomic_write(path, serialize()); }
  static ToyTrainableEncoder load(const std::string& path) { return deserialize(io::read_file(path)); }

 private:
  std::size_t vocab_size_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> question_;
  std::vector<float> passage_;
};

// ---------------------------------------------------------------------------
// Remote encoder: batches texts to the sidecar's POST /encode.

struct RemoteEncoder {
  std::string endpoint;
  std::size_t dim = kDefaultDim;
  std::size_t batch_size = 32;

  std::vector<EmbeddingVector> encode_texts(const std::string& mode,
                                            const std::vector<std::string>& texts) const {
    wire::HttpClient client(endpoint);
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t begin = 0; begin < texts.size(); begin += batch_size) {
      const std::size_t end = std::min(texts.size(), begin + batch_size);
      std::vector<std::string> chunk(texts.begin() + begin, texts.begin() + end);
      const auto body = client.post("/encode", wire::make_encode_request(mode, chunk));
      wire::EncodeResponse response;
      try {
        response = wire::parse_encode_response(body, chunk.size());
      } catch (const DataError& e) {
        throw TransportError(endpoint, std::string("/encode: ") + e.what());
      }
      if (response.dim != dim) {
        throw TransportError(endpoint, "sidecar dim " + std::to_string(response.dim) +
                                           " != configured dim " + std::to_string(dim));
      }
      for (auto& v : response.vectors) out.emplace_back(std::move(v));
    }
    return out;
  }
};

using Encoder = std::variant<ToyHashEncoder, ToyTrainableEncoder, RemoteEncoder>;

inline std::size_t encoder_dim(const Encoder& encoder) {
  return std::visit([](const auto& e) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(e)>, ToyTrainableEncoder>) {
      return e.dim();
    } else {
      return e.dim;
    }
  }, encoder);
}

inline const char* encoder_kind(const Encoder& encoder) {
  switch (encoder.index()) {
    case 0: return "toy-hash";
    case 1: return "toy-trainable";
    default: return "remote";
  }
}

namespace detail {
inline EmbeddingVector to_embedding(const std::vector<double>& v) {
  return EmbeddingVector(std::vector<float>(v.begin(), v.end()));
}
}  // namespace detail

inline std::vector<EmbeddingVector> encode_passages(const Encoder& encoder,
                                                    std::span<const Passage> passages) {
  if (const auto* remote = std::get_if<RemoteEncoder>(&encoder)) {
    std::vector<std::string> texts;
    texts.reserve(passages.size());
    for (const auto& p : passages) texts.push_back(serialize_passage(p.title, p.text));
    return remote->encode_texts("passage", texts);
  }
  std::vector<EmbeddingVector> out(passages.size());
  parallel_for(passages.size(), [&](std::size_t i) {
    if (const auto* hash = std::get_if<ToyHashEncoder>(&encoder)) {
      out[i] = hash->encode_tokens(passage_tokens(passages[i]));
    } else {
      out[i] = detail::to_embedding(std::get<ToyTrainableEncoder>(encoder).encode_passage_exact(passages[i]));
    }
  });
  return out;
}

inline std::vector<EmbeddingVector> encode_questions(const Encoder& encoder,
                                                     std::span<const Question> questions) {
  if (const auto* remote = std::get_if<RemoteEncoder>(&encoder)) {
    std::vector<std::string> texts;
    texts.reserve(questions.size());
    for (const auto& q : questions) texts.push_back(q.text);
    return remote->encode_texts("question", texts);
  }
  std::vector<EmbeddingVector> out(questions.size());
  parallel_for(questions.size(), [&](std::size_t i) {
    if (const auto* hash = std::get_if<ToyHashEncoder>(&encoder)) {
      out[i] = hash->encode_tokens(question_tokens(questions[i]));
    } else {
      out[i] = detail::to_embedding(std::get<ToyTrainableEncoder>(encoder).encode_question_exact(questions[i]));
    }
  });
  return out;
}

inline EmbeddingVector encode_passage(const Encoder& encoder, const Passage& passage) {
  return encode_passages(encoder, std::span<const Passage>(&passage, 1)).front();
}

inline EmbeddingVector encode_question(const Encoder& encoder, const Question& question) {
  return encode_questions(encoder, std::span<const Question>(&question, 1)).front();
}

// ---------------------------------------------------------------------------
// In-batch negative NLL.

struct TrainingExample {
  Question question;
  std::vector<Passage> positives;
  std::vector<Passage> negatives;
};

template <class Vec>
std::span<const typename Vec::value_type> as_span(const Vec& v) {
  return std::span<const typename Vec::value_type>(v.data(), v.size());
}
inline std::span<const float> as_span(const EmbeddingVector& v) { return v.values(); }

template <class Vec>
double vec_dot(const Vec& a, const Vec& b) {
  const auto x = as_span(a);
  const auto y = as_span(b);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return sum;
}

// Gradients of the mean loss w.r.t. every input vector, same shapes as inputs.
struct NllGradients {
  std::vector<std::vector<double>> questions;
  std::vector<std::vector<double>> positives;
  std::vector<std::vector<std::vector<double>>> extra_negatives;
};

// Mean over the batch of -log softmax at each question's own positive. The
// candidates for question i are its positive, every other question's
// positive, then its own extra negatives. `per_example` (optional) receives
// each question's loss, `grads` (optional) the exact gradient.
template <class Vec>
double batch_nll_loss(const std::vector<Vec>& question_vecs, const std::vector<Vec>& positive_vecs,
                      const std::vector<std::vector<Vec>>& extra_negative_vecs,
                      std::vector<double>* per_example = nullptr, NllGradients* grads = nullptr) {
  const std::size_t m = question_vecs.size();
  if (m == 0) throw UsageError("batch_nll_loss: empty batch");
  if (positive_vecs.size() != m) throw UsageError("batch_nll_loss: need one positive per question");
  if (!extra_negative_vecs.empty() && extra_negative_vecs.size() != m) {
    throw UsageError("batch_nll_loss: extra negatives must be given per question");
  }
  const std::size_t dim = as_span(question_vecs[0]).size();
  auto check_dim = [dim](const Vec& v) {
    if (as_span(v).size() != dim) throw UsageError("batch_nll_loss: dim mismatch");
  };
  for (const auto& v : question_vecs) check_dim(v);
  for (const auto& v : positive_vecs) check_dim(v);
  for (const auto& list : extra_negative_vecs) {
    for (const auto& v : list) check_dim(v);
  }

  if (grads) {
    grads->questions.assign(m, std::vector<double>(dim, 0.0));
    grads->positives.assign(m, std::vector<double>(dim, 0.0));
    grads->extra_negatives.assign(m, {});
    for (std::size_t i = 0; i < m && !extra_negative_vecs.empty(); ++i) {
      grads->extra_negatives[i].assign(extra_negative_vecs[i].size(), std::vector<double>(dim, 0.0));
    }
  }
  if (per_example) per_example->assign(m, 0.0);

  const double inv_m = 1.0 / static_cast<double>(m);
  double total = 0.0;
  std::vector<double> scores;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t n_extra = extra_negative_vecs.empty() ? 0 : extra_negative_vecs[i].size();
    scores.assign(m + n_extra, 0.0);
    // scores[j] for j < m is against positive j; the rest are extras.
    for (std::size_t j = 0; j < m; ++j) scores[j] = vec_dot(question_vecs[i], positive_vecs[j]);
    for (std::size_t j = 0; j < n_extra; ++j) {
      scores[m + j] = vec_dot(question_vecs[i], extra_negative_vecs[i][j]);
    }
    double max_score = scores[0];
    for (double s : scores) max_score = std::max(max_score, s);
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - max_score);
    const double log_sum = max_score + std::log(denom);
    const double loss_i = log_sum - scores[i];
    if (per_example) (*per_example)[i] = loss_i;
    total += loss_i;

    if (grads) {
      const auto q = as_span(question_vecs[i]);
      auto& gq = grads->questions[i];
      for (std::size_t j = 0; j < scores.size(); ++j) {
        const double prob = std::exp(scores[j] - log_sum);
        const double coeff = (prob - (j == i ? 1.0 : 0.0)) * inv_m;
        const auto c = j < m ? as_span(positive_vecs[j]) : as_span(extra_negative_vecs[i][j - m]);
        auto& gc = j < m ? grads->positives[j] : grads->extra_negatives[i][j - m];
        for (std::size_t d = 0; d < dim; ++d) {
          gq[d] += coeff * static_cast<double>(c[d]);
          gc[d] += coeff * static_cast<double>(q[d]);
        }
      }
    }
  }
  return total * inv_m;
}

// Parameter gradients of the toy encoder, same layout as its towers.
struct EncoderGradients {
  std::vector<double> question;
  std::vector<double> passage;
};

struct BatchEvaluation {
  double loss = 0.0;
  std::vector<double> per_example;
};

// Each example contributes its first positive and all of its negatives.
inline BatchEvaluation evaluate_batch(const ToyTrainableEncoder& encoder,
                                      std::span<const TrainingExample> batch,
                                      EncoderGradients* grads = nullptr) {
  if (batch.empty()) throw UsageError("train batch is empty");
  const std::size_t m = batch.size();
  const std::size_t dim = encoder.dim();
  std::vector<std::vector<std::string>> q_tokens(m), p_tokens(m);
  std::vector<std::vector<std::vector<std::string>>> n_tokens(m);
  std::vector<std::vector<double>> q_vecs(m), p_vecs(m);
  std::vector<std::vector<std::vector<double>>> n_vecs(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& ex = batch[i];
    if (ex.positives.empty()) {
      throw DataError("training example '" + ex.question.question_id + "' has no positives");
    }
    q_tokens[i] = question_tokens(ex.question);
    p_tokens[i] = passage_tokens(ex.positives.front());
    q_vecs[i] = encoder.mean_rows(encoder.question_params(), q_tokens[i]);
    p_vecs[i] = encoder.mean_rows(encoder.passage_params(), p_tokens[i]);
    for (const auto& neg : ex.negatives) {
      n_tokens[i].push_back(passage_tokens(neg));
      n_vecs[i].push_back(encoder.mean_rows(encoder.passage_params(), n_tokens[i].back()));
    }
  }

  BatchEvaluation result;
  NllGradients vec_grads;
  result.loss = batch_nll_loss(q_vecs, p_vecs, n_vecs, &result.per_example, grads ? &vec_grads : nullptr);
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(result.per_example[i])) {
      throw DataError("non-finite loss for training example '" + batch[i].question.question_id + "'");
    }
  }
  if (!grads) return result;

  grads->question.assign(encoder.question_params().size(), 0.0);
  grads->passage.assign(encoder.passage_params().size(), 0.0);
  auto scatter = [&](std::vector<double>& table, const std::vector<std::string>& tokens,
                     const std::vector<double>& g) {
    if (tokens.empty()) return;
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (const auto& t : tokens) {
      double* row = &table[encoder.row_of(t) * dim];
      for (std::size_t d = 0; d < dim; ++d) row[d] += g[d] * inv;
    }
  };
  for (std::size_t i = 0; i < m; ++i) {
    scatter(grads->question, q_tokens[i], vec_grads.questions[i]);
    scatter(grads->passage, p_tokens[i], vec_grads.positives[i]);
    for (std::size_t j = 0; j < n_tokens[i].size(); ++j) {
      scatter(grads->passage, n_tokens[i][j], vec_grads.extra_negatives[i][j]);
    }
  }
  return result;
}

// One full-gradient descent step. Returns the pre-update loss. Parameters are
// written only after the whole gradient is computed.
inline double train_step(ToyTrainableEncoder& encoder, std::span<const TrainingExample> batch,
                         double learning_rate) {
  if (!(learning_rate >= 0.0)) throw UsageError("learning rate must be non-negative");
  EncoderGradients grads;
  const BatchEvaluation eval = evaluate_batch(encoder, batch, &grads);
  if (learning_rate == 0.0) return eval.loss;
  if (!encoder.freeze_question_tower) {
    auto& q = encoder.question_params();
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = static_cast<float>(q[i] - learning_rate * grads.question[i]);
    }
  }
  auto& p = encoder.passage_params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = static_cast<float>(p[i] - learning_rate * grads.passage[i]);
  }
  return eval.loss;
}

}  // namespace polyqa
