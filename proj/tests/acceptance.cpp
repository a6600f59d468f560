// Acceptance driver: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "polyqa/pipeline.hpp"
#include "oracles.hpp"

using namespace polyqa;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome segmentation_conservation() {
  Outcome o;
  std::mt19937_64 rng(11);
  const std::vector<std::string> langs = {"en", "fi", "ja", "zh-cn", "th", "ru", "km"};
  const std::vector<std::string> spaced = {"alpha", "beta", "gamma", "δέλτα", "ёж", "x1", "42"};
  const std::vector<std::string> unspaced = {"日", "本", "語", "ก", "ข", "ក", "中"};
  std::vector<Article> articles;
  for (int i = 0; i < 1000; ++i) {
    Article a{"a" + std::to_string(i), langs[rng() % langs.size()], "T" + std::to_string(i), ""};
    const std::size_t n = rng() % 1500;
    for (std::size_t t = 0; t < n; ++t) {
      if (text::is_unspaced_language(a.lang)) {
        a.text += unspaced[rng() % unspaced.size()];
        if (rng() % 7 == 0) a.text += ' ';
      } else {
        a.text += spaced[rng() % spaced.size()] + (rng() % 5 ? " " : " \n\t ");
      }
    }
    articles.push_back(std::move(a));
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<Passage>> segmented;
  for (const auto& a : articles) segmented.push_back(segment_article(a));
  const double elapsed = seconds_since(t0);

  std::size_t passages = 0;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const auto expect = tokenize(articles[i].text, articles[i].lang);
    std::vector<std::string> joined;
    for (std::size_t c = 0; c < segmented[i].size(); ++c) {
      const auto& p = segmented[i][c];
      ++passages;
      const auto toks = tokenize(p.text, p.lang);
      o.require(toks.size() == p.token_count, p.passage_id + " token_count mismatch");
      o.require(p.token_count <= 100, p.passage_id + " exceeds 100 tokens");
      o.require(p.token_count >= 1, p.passage_id + " is empty");
      o.require(c + 1 == segmented[i].size() || p.token_count == 100, p.passage_id + " short non-final chunk");
      o.require(p.passage_id == articles[i].article_id + "-" + std::to_string(c), p.passage_id + " bad id");
      joined.insert(joined.end(), toks.begin(), toks.end());
    }
    o.require(joined == expect, articles[i].article_id + " tokens not conserved");
  }
  o.require(elapsed < 10.0, "segmentation took " + fmt("%.2f s", elapsed));
  if (o.pass) o.detail = std::to_string(passages) + " passages from 1000 articles in " + fmt("%.2f s", elapsed);
  return o;
}

Passage passage_with(std::size_t tokens, const std::string& title) {
  std::string text;
  for (std::size_t i = 0; i < tokens; ++i) text += (i ? " w" : "w") + std::to_string(i);
  return Passage{"p-0", "p", "en", title, text, tokens};
}

Outcome filter_boundary() {
  Outcome o;
  const auto r = filter_passages({passage_with(19, "A"), passage_with(20, "B"),
                                  passage_with(60, "Mercury (disambiguation)")});
  o.require(r.kept.size() == 1 && r.kept[0].title == "B", "expected only the 20-token passage kept");
  o.require(r.dropped_short == 1, "19-token passage not dropped as short");
  o.require(r.dropped_disambiguation == 1, "disambiguation page not dropped");
  if (o.pass) o.detail = "19 dropped, 20 kept, disambiguation dropped";
  return o;
}

Outcome loss_correctness() {
  Outcome o;
  using Vec = std::vector<double>;
  const std::vector<Vec> q1 = {{1, 0}}, p1 = {{1, 0}}, q2 = {{2, 0}};
  const double a = batch_nll_loss(q1, p1, {{{0, 1}}});
  const double b = batch_nll_loss(q2, p1, {{{0, 1}, {0, -1}}});
  const double c = batch_nll_loss(q1, p1, {{{1, 5}}});
  o.require(std::abs(a - 0.31326) < 1e-5, "worked example 1 gave " + fmt("%.6f", a));
  o.require(std::abs(b - 0.23954) < 1e-5, "worked example 2 gave " + fmt("%.6f", b));
  o.require(std::abs(c - 0.69315) < 1e-5, "worked example 3 gave " + fmt("%.6f", c));

  std::mt19937_64 rng(23);
  double worst = 0.0;
  const int batches = 60;
  for (int t = 0; t < batches; ++t) {
    const auto setup = oracle::random_training_setup(rng);
    const double loss = evaluate_batch(setup.encoder, setup.batch).loss;
    o.require(std::abs(loss - oracle::encoder_loss(setup.encoder, setup.batch)) < 1e-9,
              "loss differs from the direct transcription");
    worst = std::max(worst, oracle::max_gradient_relative_error(setup.encoder, setup.batch));
  }
  o.require(worst < 1e-4, "max gradient relative error " + fmt("%.3g", worst));
  if (o.pass) {
    o.detail = fmt("worked values %.5f", a) + fmt(" %.5f", b) + fmt(" %.5f; ", c) + std::to_string(batches) +
               " batches, max rel err " + fmt("%.2e", worst);
  }
  return o;
}

Outcome index_exactness() {
  Outcome o;
  std::mt19937_64 rng(31);
  std::size_t checks = 0;
  for (std::size_t n : {10u, 1000u, 10000u}) {
    const std::size_t dim = 8;
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    DenseIndex index(dim);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<float> u(-1, 1);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(dim);
      // every third row is coarse so exact score ties occur
      for (auto& x : v) x = i % 3 == 0 ? static_cast<float>(static_cast<int>(rng() % 3) - 1) : u(rng);
      ids.push_back("p" + std::to_string(order[i]));
      rows.push_back(v);
      index.add(ids.back(), EmbeddingVector(v));
    }
    for (int t = 0; t < 200; ++t) {
      std::vector<float> q(dim);
      for (auto& x : q) x = t % 2 ? static_cast<float>(static_cast<int>(rng() % 3) - 1) : u(rng);
      const auto full = oracle::brute_force_search(ids, rows, q, n);
      for (std::size_t k : {std::size_t{1}, std::size_t{10}, n}) {
        const auto got = index.search(EmbeddingVector(q), k);
        const std::vector<RetrievalResult> expect(full.begin(), full.begin() + std::min(k, n));
        o.require(got == expect, "n=" + std::to_string(n) + " k=" + std::to_string(k) + " differs from oracle");
        ++checks;
      }
    }
    const auto dir = std::filesystem::temp_directory_path() / ("polyqa_acceptance_" + std::to_string(n));
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "index.bin").string();
    index.save(path);
    const auto back = DenseIndex::load(path);
    const std::string before = index.serialize(), after = back.serialize();
    o.require(back == index && before == after, "persistence roundtrip differs for n=" + std::to_string(n));
    o.require(DenseIndex::crc32_of(before) == DenseIndex::crc32_of(after), "checksum differs");
    std::filesystem::remove_all(dir);
  }
  if (o.pass) o.detail = std::to_string(checks) + " searches equal the full-sort oracle; roundtrips bit-exact";
  return o;
}

Outcome prompt_grammar() {
  Outcome o;
  const Question q{"id", "ja", "q?"};
  const std::string got = format_prompt(q, {{0, "T0", "x"}, {1, "T1", "y"}});
  o.require(got == "<Q>: q? [ja] <P>: <0: T0> x <1: T1> y", "worked example gave '" + got + "'");
  std::mt19937_64 rng(41);
  const std::vector<std::string> alphabet = {"a", "Q", "9", " ", ":", "[", "]", "?", "é", "日", "-", "P"};
  auto piece = [&](std::size_t max_len) {
    std::string s;
    for (std::size_t n = rng() % (max_len + 1); n > 0; --n) s += alphabet[rng() % alphabet.size()];
    return s;
  };
  const std::vector<std::string> langs = {"en", "ja", "zh-hk", "fi"};
  for (int t = 0; t < 100; ++t) {
    ParsedPrompt x{piece(20), langs[rng() % langs.size()], {}};
    for (std::size_t r = 0, n = rng() % 11; r < n; ++r) x.passages.push_back({r, piece(8), piece(40)});
    const auto back = parse_prompt(format_prompt(Question{"q", x.lang, x.question}, x.passages));
    o.require(back && *back == x, "roundtrip failed on case " + std::to_string(t));
  }
  if (o.pass) o.detail = "worked example byte-exact; 100 roundtrips";
  return o;
}

Outcome mining_soundness() {
  Outcome o;
  toy::WorldConfig wc;
  wc.entities = 200;
  wc.seed = 5;
  wc.spurious_fraction = 0.2;
  const auto world = toy::build_world(wc);
  const PassageStore store(ingest_articles(world.articles).passages);
  o.require(store.size() == 500, "corpus has " + std::to_string(store.size()) + " passages, expected 500");
  std::set<std::string> langs;
  for (const auto& p : store.passages()) langs.insert(p.lang);
  o.require(langs.size() == 3, "expected three pseudo-languages");

  const Encoder encoder = ToyTrainableEncoder::random(1024, 16, 7, 1.0);
  std::vector<std::string> ids;
  std::vector<std::vector<float>> rows;
  for (const auto& p : store.passages()) ids.push_back(p.passage_id);
  const auto vecs = encode_passages(encoder, store.passages());
  for (const auto& v : vecs) rows.emplace_back(v.values().begin(), v.values().end());
  const DenseIndex index = DenseIndex::build(ids, vecs, encoder_dim(encoder));

  ToyExtractiveGenerator generator;
  generator.unextractable_markers = {wc.spurious_marker};
  IterationConfig config;
  config.retrieve_k = 10;
  config.langlink_language_cap = 8;  // above the language count: expansion keeps every linked language
  config.max_negatives = 1000;
  config.seed = 13;
  const MiningContext ctx{store, &world.links};
  const MiningState start = initial_state(world.instances, store);
  const MiningState next = run_iteration(start, world.instances, index, encoder, generator, ctx, config);

  // Replay oracle: brute-force retrieval minus golds, plus every same-entity
  // article in other languages; positive iff the passage states one of the
  // question's answers in its own language and carries no spurious marker.
  std::map<std::string, const MinedExample*> mined;
  for (std::size_t i = start.training_set.size(); i < next.training_set.size(); ++i) {
    mined[next.training_set[i].example.question.question_id] = &next.training_set[i];
  }
  std::size_t oracle_pos = 0, oracle_neg = 0, spurious_candidates = 0;
  for (const auto& inst : world.instances) {
    const std::set<std::string> gold(inst.gold_passage_ids.begin(), inst.gold_passage_ids.end());
    const auto qv = encode_question(encoder, inst.question);
    std::vector<std::string> cands;
    for (const auto& r : oracle::brute_force_search(ids, rows, {qv.values().begin(), qv.values().end()}, 10)) {
      if (!gold.count(r.passage_id)) cands.push_back(r.passage_id);
    }
    const auto& gold_article = store.at(inst.gold_passage_ids[0]);
    const std::string entity_suffix = gold_article.title.substr(gold_article.title.find('.'));
    for (const auto& p : store.passages()) {
      if (p.lang == gold_article.lang || p.title != p.lang + entity_suffix) continue;
      if (std::find(cands.begin(), cands.end(), p.passage_id) == cands.end()) cands.push_back(p.passage_id);
    }
    std::set<std::string> pos, neg;
    const auto& answers = world.answer_sets.at(inst.question.question_id);
    for (const auto& id : cands) {
      const auto& p = store.at(id);
      bool states = false;
      for (const auto& a : answers.at(p.lang)) states = states || p.text.find(a) != std::string::npos;
      for (const auto& a : inst.answers) states = states || p.text.find(a) != std::string::npos;
      const bool marked = p.text.find(wc.spurious_marker) != std::string::npos;
      spurious_candidates += states && marked;
      (states && !marked ? pos : neg).insert(id);
    }
    oracle_pos += pos.size();
    oracle_neg += neg.size();
    const auto it = mined.find(inst.question.question_id);
    if (pos.empty()) {
      o.require(it == mined.end(), inst.question.question_id + " mined without oracle positives");
      continue;
    }
    if (it == mined.end()) {
      o.require(false, inst.question.question_id + " has oracle positives but was not mined");
      continue;
    }
    std::set<std::string> got_pos, got_neg;
    for (const auto& p : it->second->example.positives) got_pos.insert(p.passage_id);
    for (const auto& p : it->second->example.negatives) got_neg.insert(p.passage_id);
    o.require(got_pos == pos, inst.question.question_id + " positives differ from the replay oracle");
    o.require(got_neg == neg, inst.question.question_id + " negatives differ from the replay oracle");
    for (const auto& id : gold) {
      o.require(!got_pos.count(id) && !got_neg.count(id), inst.question.question_id + " leaks a gold passage");
    }
  }
  const auto& ledger = next.ledger.back();
  o.require(ledger.positives == oracle_pos && ledger.negatives == oracle_neg, "ledger totals differ from oracle");
  o.require(spurious_candidates > 0, "no spurious candidates were exercised");

  const TrainConfig train{.epochs = 3, .learning_rate = 10.0, .batch_size = 16, .seed = 13};
  IterationConfig loop = config;
  loop.max_iterations = 3;
  auto run = [&] {
    Encoder enc = ToyTrainableEncoder::random(1024, 16, 7, 1.0);
    return serialize_state(run_mining_loop(world.instances, enc, generator, ctx, loop, train));
  };
  const std::string first = run(), second = run();
  o.require(first == second, "two seeded runs serialized differently");
  if (o.pass) {
    o.detail = std::to_string(world.instances.size()) + " instances, " + std::to_string(oracle_pos) + " positives, " +
               std::to_string(oracle_neg) + " negatives (" + std::to_string(spurious_candidates) +
               " spurious) match the replay; seeded states identical (" + std::to_string(first.size()) + " bytes)";
  }
  return o;
}

Outcome iterative_improvement() {
  Outcome o;
  pipeline::E2eOptions options;
  o.require(options.world.cross_lingual_fraction == 0.4, "world is not 40% cross-lingual");
  const auto r = pipeline::run_e2e_toy(options);
  o.require(r.trajectory.size() == 3, "expected three recall points");
  if (!o.pass) return o;
  const double before = r.trajectory[0].recall_multi, after = r.trajectory[2].recall_multi;
  o.require(after - before >= 0.10, fmt("R^multi@10 gain %.3f", after - before));
  o.require(r.seconds < 300.0, fmt("took %.1f s", r.seconds));
  o.detail = fmt("R^multi@10 %.3f", before) + fmt(" -> %.3f", r.trajectory[1].recall_multi) +
             fmt(" -> %.3f", after) + fmt(" (cross-lingual %.3f", r.trajectory[0].recall_multi_cross_lingual) +
             fmt(" -> %.3f)", r.trajectory[2].recall_multi_cross_lingual) + fmt(" in %.1f s", r.seconds);
  return o;
}

Outcome metrics() {
  Outcome o;
  o.require(eval::token_f1("a b", {"a b c"}, "en") == 0.8, "token_f1 example is not 0.8");
  std::mt19937_64 rng(53);
  const std::vector<std::string> words = {"a", "B", "the", "c.", "1957", "an", "Ｘ", "x"};
  auto answer = [&] {
    std::string s;
    for (std::size_t n = rng() % 4; n > 0; --n) s += words[rng() % words.size()] + " ";
    return s;
  };
  std::size_t em_cases = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto pred = answer();
    const std::vector<std::string> golds = {answer(), answer()};
    if (eval::exact_match(pred, golds, "en")) {
      ++em_cases;
      o.require(eval::token_f1(pred, golds, "en") == 1.0, "EM without F1 = 1 on '" + pred + "'");
    }
  }
  const eval::AnswerSet answers = {{"en", {"gold"}}, {"ja", {"金"}}};
  const std::vector<std::string> texts = {"none", "a gold bar", "金貨", "other"};
  for (int t = 0; t < 1000; ++t) {
    std::vector<Passage> ps;
    for (std::size_t n = rng() % 15; n > 0; --n) ps.push_back(Passage{"p-0", "p", "en", "T", texts[rng() % 4], 1});
    const std::string target = t % 2 ? "en" : "ja";
    eval::RecallHit prev;
    for (std::size_t k = 1; k <= 16; ++k) {
      const auto h = eval::recall_at_k(ps, answers, target, k);
      o.require((!prev.target || h.target) && (!prev.multi || h.multi), "recall not monotone in k");
      prev = h;
    }
  }
  const auto report = eval::aggregate({{"1", "en", 0.2, false, 0.0, std::nullopt},
                                       {"2", "ja", 0.4, false, 0.0, std::nullopt}});
  o.require(report.macro && std::abs(report.macro->f1 - 0.3) < 1e-15, "macro of 0.2 and 0.4 is not 0.3");
  if (o.pass) o.detail = "F1 0.8; " + std::to_string(em_cases) + " EM cases with F1 1; recall monotone; macro 0.3";
  return o;
}

Outcome categorization() {
  Outcome o;
  using C = eval::LanguageCategory;
  const std::vector<std::pair<std::string, C>> expected = {
      {"en", C::kSeen},      {"ar", C::kSeen},      {"bn", C::kSeen},      {"fi", C::kSeen},
      {"ja", C::kSeen},      {"ko", C::kSeen},      {"ru", C::kSeen},      {"te", C::kSeen},
      {"es", C::kMDPRSeen},  {"sv", C::kMDPRSeen},  {"he", C::kMDPRSeen},  {"th", C::kMDPRSeen},
      {"da", C::kMGENSeen},  {"de", C::kMGENSeen},  {"fr", C::kMGENSeen},  {"it", C::kMGENSeen},
      {"nl", C::kMGENSeen},  {"pl", C::kMGENSeen},  {"pt", C::kMGENSeen},  {"hu", C::kUnseen},
      {"vi", C::kUnseen},    {"ms", C::kUnseen},    {"km", C::kUnseen},    {"no", C::kUnseen},
      {"tr", C::kUnseen},    {"zh-cn", C::kUnseen}, {"zh-hk", C::kUnseen}, {"zh-tw", C::kUnseen}};
  const auto config = eval::CategoryConfig::reference();
  for (const auto& [lang, cat] : expected) {
    const auto got = eval::categorize_language(lang, config);
    o.require(got == cat, lang + " categorized as " + eval::to_string(got));
  }
  if (o.pass) o.detail = std::to_string(expected.size()) + " languages";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"segmentation-conservation", segmentation_conservation},
      {"filter-boundary", filter_boundary},
      {"loss-correctness", loss_correctness},
      {"index-exactness", index_exactness},
      {"prompt-grammar", prompt_grammar},
      {"mining-soundness", mining_soundness},
      {"iterative-improvement", iterative_improvement},
      {"metrics", metrics},
      {"language-categorization", categorization},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS  " : "FAIL  ") << name << "  " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
