#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "polyqa/encoder.hpp"
#include "oracles.hpp"

using namespace polyqa;

namespace {

Passage make_passage(std::string id, std::string title, std::string text, std::string lang = "en") {
  Passage p;
  p.passage_id = std::move(id);
  p.article_id = p.passage_id;
  p.lang = std::move(lang);
  p.title = std::move(title);
  p.text = std::move(text);
  p.token_count = tokenize(p.text, p.lang).size();
  return p;
}

using Vec = std::vector<double>;

}  // namespace

TEST(RelevanceScore, WorkedValues) {
  EXPECT_EQ(relevance_score(EmbeddingVector({1, 0}), EmbeddingVector({1, 0})), 1.0);
  EXPECT_EQ(relevance_score(EmbeddingVector({1, 2}), EmbeddingVector({3, 4})), 11.0);
  EXPECT_EQ(relevance_score(EmbeddingVector({0.3f, -2}), EmbeddingVector::zeros(2)), 0.0);
  EXPECT_THROW(relevance_score(EmbeddingVector({1}), EmbeddingVector({1, 2})), UsageError);
}

TEST(RelevanceScore, Bilinear) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<float> q(8), p(8);
    for (auto& v : q) v = u(rng);
    for (auto& v : p) v = u(rng);
    const float a = 4.0f;  // power of two keeps the scaled vector exact
    std::vector<float> aq(q);
    for (auto& v : aq) v *= a;
    EXPECT_DOUBLE_EQ(relevance_score(EmbeddingVector(aq), EmbeddingVector(p)),
                     a * relevance_score(EmbeddingVector(q), EmbeddingVector(p)));
  }
}

TEST(EmbeddingVector, RejectsNonFinite) {
  EXPECT_THROW(EmbeddingVector({1.0f, std::numeric_limits<float>::quiet_NaN()}), DataError);
  EXPECT_THROW(EmbeddingVector({std::numeric_limits<float>::infinity()}), DataError);
}

TEST(ToyHashEncoder, DeterministicAndNormalized) {
  const Encoder enc = ToyHashEncoder{64, 7};
  const auto p = make_passage("a-0", "Title", "some passage text here");
  const auto v1 = encode_passage(enc, p);
  const auto v2 = encode_passage(enc, p);
  EXPECT_EQ(v1, v2);
  EXPECT_EQ(v1.dim(), 64u);
  EXPECT_NEAR(dot(v1.values(), v1.values()), 1.0, 1e-6);
  const auto other = encode_passage(enc, make_passage("a-0", "Other", "some passage text here"));
  EXPECT_NE(v1, other);
  const Question q{"q", "en", "some passage text here"};
  EXPECT_EQ(encode_question(enc, q), encode_question(enc, q));
  EXPECT_NE(encode_question(enc, q), encode_passage(enc, p));
  EXPECT_EQ(encode_question(enc, Question{"e", "en", ""}), EmbeddingVector::zeros(64));
}

TEST(ToyHashEncoder, SeedChangesVectors) {
  const auto p = make_passage("a-0", "Title", "alpha beta gamma delta");
  EXPECT_NE(encode_passage(Encoder(ToyHashEncoder{32, 1}), p), encode_passage(Encoder(ToyHashEncoder{32, 2}), p));
}

TEST(ToyTrainableEncoder, ZeroParametersGiveZeroVector) {
  const Encoder enc = ToyTrainableEncoder(16, 4);
  EXPECT_EQ(encode_passage(enc, make_passage("a", "T", "x y z")), EmbeddingVector::zeros(4));
  EXPECT_EQ(encode_question(enc, Question{"q", "en", "x y"}), EmbeddingVector::zeros(4));
}

TEST(ToyTrainableEncoder, TowersDifferAndEmptyQuestionIsZero) {
  const Encoder enc = ToyTrainableEncoder::random(64, 8, 11);
  const std::string text = "the same text";
  const Passage p = make_passage("a", "", text);
  EXPECT_NE(encode_question(enc, Question{"q", "en", text}), encode_passage(enc, p));
  EXPECT_EQ(encode_question(enc, Question{"q", "en", ""}), EmbeddingVector::zeros(8));
}

TEST(ToyTrainableEncoder, EncodingIsMeanOfRows) {
  const auto enc = ToyTrainableEncoder::random(32, 3, 2);
  const Question q{"q", "en", "a b a"};
  const auto v = encode_question(Encoder(enc), q);
  for (std::size_t d = 0; d < 3; ++d) {
    const double expect = (2.0 * enc.question_params()[enc.row_of("a") * 3 + d] +
                           enc.question_params()[enc.row_of("b") * 3 + d]) / 3.0;
    EXPECT_EQ(v[d], static_cast<float>(expect));
  }
}

TEST(ToyTrainableEncoder, PassageSerialization) {
  EXPECT_EQ(serialize_passage("T", "x y"), "[CLS] T [SEP] x y [SEP]");
  const auto toks = passage_tokens(make_passage("a", "日本", "語", "ja"));
  EXPECT_EQ(toks, (std::vector<std::string>{"[CLS]", "日", "本", "[SEP]", "語", "[SEP]"}));
}

TEST(ToyTrainableEncoder, FileRoundtripAndErrors) {
  const auto enc = ToyTrainableEncoder::random(10, 4, 9);
  const std::string bytes = enc.serialize();
  EXPECT_EQ(bytes.substr(0, 8), "XLENC001");
  EXPECT_EQ(bytes.size(), 8u + 8u + 2u * 10 * 4 * 4);
  EXPECT_EQ(ToyTrainableEncoder::deserialize(bytes), enc);
  std::string bad = bytes;
  bad[0] = 'Y';
  EXPECT_THROW(ToyTrainableEncoder::deserialize(bad), DataError);
  EXPECT_THROW(ToyTrainableEncoder::deserialize(bytes.substr(0, bytes.size() - 1)), binary::TruncatedError);
  EXPECT_THROW(ToyTrainableEncoder::deserialize("XLENC0"), DataError);
}

// ---------------------------------------------------------------------------

TEST(BatchNllLoss, WorkedExamples) {
  const std::vector<Vec> q1 = {{1, 0}}, p1 = {{1, 0}};
  EXPECT_NEAR(batch_nll_loss(q1, p1, {{{0, 1}}}), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(batch_nll_loss(q1, p1, {{{0, 1}}}), 0.31326, 1e-5);

  // scores [2, 0, 0]
  const std::vector<Vec> q2 = {{2, 0}}, p2 = {{1, 0}};
  EXPECT_NEAR(batch_nll_loss(q2, p2, {{{0, 1}, {0, -1}}}), 0.23954, 1e-5);
  EXPECT_NEAR(batch_nll_loss(q2, p2, {{{0, 1}, {0, -1}}}), std::log(1 + 2 * std::exp(-2.0)), 1e-12);

  // tied positive and one negative
  EXPECT_NEAR(batch_nll_loss(q1, p1, {{{1, 5}}}), 0.69315, 1e-5);
}

TEST(BatchNllLoss, EmptyBatchAndShapeErrors) {
  EXPECT_THROW(batch_nll_loss(std::vector<Vec>{}, std::vector<Vec>{}, {}), UsageError);
  EXPECT_THROW(batch_nll_loss(std::vector<Vec>{{1.0}}, std::vector<Vec>{}, {}), UsageError);
  EXPECT_THROW(batch_nll_loss(std::vector<Vec>{{1.0}}, std::vector<Vec>{{1.0, 2.0}}, {}), UsageError);
}

TEST(BatchNllLoss, InBatchNegativesMatchOracle) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    const auto b = oracle::random_vector_batch(rng);
    EXPECT_NEAR(batch_nll_loss(b.q, b.p, b.n), oracle::nll(b.q, b.p, b.n), 1e-10);
  }
}

TEST(BatchNllLoss, Properties) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 200; ++t) {
    auto b = oracle::random_vector_batch(rng);
    const double base = batch_nll_loss(b.q, b.p, b.n);
    EXPECT_GE(base, 0.0);

    // permuting the batch leaves the mean unchanged
    std::vector<std::size_t> perm(b.q.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    oracle::VectorBatch permuted;
    for (auto i : perm) {
      permuted.q.push_back(b.q[i]);
      permuted.p.push_back(b.p[i]);
      permuted.n.push_back(b.n[i]);
    }
    EXPECT_NEAR(batch_nll_loss(permuted.q, permuted.p, permuted.n), base, 1e-12);

    // an extra negative never lowers the loss
    auto more = b;
    more.n[rng() % more.n.size()].push_back(oracle::random_vec(rng, b.q[0].size()));
    EXPECT_GE(batch_nll_loss(more.q, more.p, more.n), base - 1e-12);
  }
}

TEST(BatchNllLoss, VectorGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 20; ++t) {
    auto b = oracle::random_vector_batch(rng);
    NllGradients g;
    batch_nll_loss(b.q, b.p, b.n, nullptr, &g);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < b.q.size(); ++i) {
      for (std::size_t d = 0; d < b.q[i].size(); ++d) {
        auto plus = b, minus = b;
        plus.q[i][d] += eps;
        minus.q[i][d] -= eps;
        const double numeric =
            (oracle::nll(plus.q, plus.p, plus.n) - oracle::nll(minus.q, minus.p, minus.n)) / (2 * eps);
        EXPECT_NEAR(g.questions[i][d], numeric, 1e-6);
      }
    }
  }
}

TEST(TrainStep, EncoderGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 10; ++t) {
    const auto setup = oracle::random_training_setup(rng);
    EXPECT_LT(oracle::max_gradient_relative_error(setup.encoder, setup.batch), 1e-4);
  }
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  std::mt19937_64 rng(37);
  auto setup = oracle::random_training_setup(rng);
  const auto before = setup.encoder;
  const double loss = train_step(setup.encoder, setup.batch, 0.0);
  EXPECT_EQ(setup.encoder, before);
  EXPECT_NEAR(loss, oracle::encoder_loss(before, setup.batch), 1e-12);
  EXPECT_THROW(train_step(setup.encoder, setup.batch, -1.0), UsageError);
  EXPECT_THROW(train_step(setup.encoder, std::span<const TrainingExample>{}, 0.1), UsageError);
}

TEST(TrainStep, LossDecreasesOnSeparableBatch) {
  auto enc = ToyTrainableEncoder::random(256, 16, 41, 0.1);
  std::vector<TrainingExample> batch;
  for (int i = 0; i < 4; ++i) {
    const std::string key = "key" + std::to_string(i);
    batch.push_back({Question{"q" + std::to_string(i), "en", key + " ?"},
                     {make_passage("p" + std::to_string(i), key, key + " " + key + " filler")},
                     {}});
  }
  double prev = train_step(enc, batch, 0.5);
  for (int step = 0; step < 50; ++step) {
    const double loss = train_step(enc, batch, 0.5);
    EXPECT_LT(loss, prev) << "step " << step;
    prev = loss;
  }
}

TEST(TrainStep, FrozenQuestionTowerIsUntouched) {
  std::mt19937_64 rng(43);
  auto setup = oracle::random_training_setup(rng);
  setup.encoder.freeze_question_tower = true;
  const auto q_before = setup.encoder.question_params();
  const auto p_before = setup.encoder.passage_params();
  train_step(setup.encoder, setup.batch, 0.5);
  EXPECT_EQ(setup.encoder.question_params(), q_before);
  EXPECT_NE(setup.encoder.passage_params(), p_before);
}

TEST(TrainStep, NonFiniteLossNamesExample) {
  std::mt19937_64 rng(47);
  auto setup = oracle::random_training_setup(rng);
  auto& enc = setup.encoder;
  std::set<std::size_t> poisoned;
  for (const auto& tok : question_tokens(setup.batch[1].question)) poisoned.insert(enc.row_of(tok));
  for (auto row : poisoned) enc.question_params()[row * enc.dim()] = std::numeric_limits<float>::quiet_NaN();
  // the first example whose question touches a poisoned row
  std::string expected;
  for (const auto& ex : setup.batch) {
    for (const auto& tok : question_tokens(ex.question)) {
      if (expected.empty() && poisoned.count(enc.row_of(tok))) expected = ex.question.question_id;
    }
  }
  try {
    train_step(enc, setup.batch, 0.1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'" + expected + "'"), std::string::npos) << e.what();
  }
}
