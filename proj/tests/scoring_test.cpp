#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_backends.hpp"
#include "tproj/scoring.hpp"

using namespace tproj;
using testing_backends::TableScorer;

TEST(TranslationProb, GeometricMean) {
  TableScorer s;
  s.set("b", "x y", {0.25, 0.25});
  s.set("b", "x", {1.0});
  s.set("b", "x y z", {0.9, 0.1, 0.3});
  EXPECT_DOUBLE_EQ(translation_prob({"x", "y"}, {"b"}, s, "l", "l"), 0.25);
  EXPECT_DOUBLE_EQ(translation_prob({"x"}, {"b"}, s, "l", "l"), 1.0);
  EXPECT_NEAR(translation_prob({"x", "y", "z"}, {"b"}, s, "l", "l"), 0.3, 1e-12);
  EXPECT_NEAR(oracle::geo_mean({0.9, 0.1, 0.3}), 0.3, 1e-12);
  EXPECT_THROW(translation_prob({}, {"b"}, s, "l", "l"), PreconditionError);
}

TEST(TranslationProb, ContractViolations) {
  EXPECT_THROW(mean_logprob(std::vector<double>{}), BackendError);
  EXPECT_THROW(mean_logprob(std::vector<double>{std::nan("")}), BackendError);
  EXPECT_THROW(mean_logprob(std::vector<double>{std::numeric_limits<double>::infinity()}), BackendError);
  EXPECT_EQ(mean_logprob(std::vector<double>{-std::numeric_limits<double>::infinity(), 0.0}),
            -std::numeric_limits<double>::infinity());
}

TEST(TranslationProb, LengthNormalizationInvariance) {
  for (double q : {0.01, 0.3, 0.77, 1.0}) {
    TableScorer s(q);
    for (std::size_t n = 1; n <= 50; ++n) {
      Tokens a(n, "t");
      EXPECT_NEAR(translation_prob(a, {"b"}, s, "l", "l"), q, 1e-12) << n;
    }
  }
}

TEST(NormalizedSim, Examples) {
  TableScorer s;
  s.set("B", "A", {0.5});
  s.set("A", "A", {0.25});
  EXPECT_DOUBLE_EQ(normalized_sim({"A"}, {"B"}, s, "l", "l"), 2.0);
  EXPECT_DOUBLE_EQ(normalized_sim({"A"}, {"A"}, s, "l", "l"), 1.0);
}

TEST(NormalizedSim, ZeroSelfProbabilityIsDegenerate) {
  TableScorer s;
  s.set("A", "A", {0.0});
  EXPECT_THROW(normalized_sim({"A"}, {"B"}, s, "l", "l"), DegenerateScore);
}

TEST(SymSim, Examples) {
  TableScorer s;
  s.set("B", "A", {0.8});
  s.set("A", "B", {0.4});
  s.set("A", "A", {1.0});
  s.set("B", "B", {1.0});
  auto r = sym_sim({"A"}, {"B"}, s);
  EXPECT_DOUBLE_EQ(r.value, 0.6);
  EXPECT_DOUBLE_EQ(r.parts.p_a_given_b, 0.8);
  EXPECT_DOUBLE_EQ(r.parts.p_b_given_a, 0.4);
  EXPECT_EQ(sym_sim({"A"}, {"A"}, s).value, 1.0);
}

// Random per-token tables against the linear-space oracle.
TEST(SymSim, RandomTablesMatchOracle) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> p(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t na = 1 + rng() % 6, nb = 1 + rng() % 6;
    Tokens a, b;
    for (std::size_t i = 0; i < na; ++i) a.push_back("a" + std::to_string(i));
    for (std::size_t i = 0; i < nb; ++i) b.push_back("b" + std::to_string(i));
    auto draw = [&](std::size_t n) {
      std::vector<double> v;
      for (std::size_t i = 0; i < n; ++i) v.push_back(p(rng));
      return v;
    };
    auto ab = draw(na), ba = draw(nb), aa = draw(na), bb = draw(nb);
    TableScorer s;
    s.set(join(b), join(a), ab);
    s.set(join(a), join(b), ba);
    s.set(join(a), join(a), aa);
    s.set(join(b), join(b), bb);
    EXPECT_NEAR(translation_prob(a, b, s, "x", "y"), oracle::geo_mean(ab), 1e-12);
    EXPECT_NEAR(normalized_sim(a, b, s, "x", "y"), oracle::geo_mean(ab) / oracle::geo_mean(aa), 1e-12);
    auto fwd = sym_sim(a, b, s);
    auto bwd = sym_sim(b, a, s);
    EXPECT_NEAR(fwd.value, oracle::sym(ab, ba, aa, bb), 1e-12);
    EXPECT_EQ(fwd.value, bwd.value);
    EXPECT_EQ(sym_sim(a, a, s).value, 1.0);
  }
}

TEST(EmbeddingSim, Cosine) {
  TableScorer s;
  s.set_vector("x", {1.0, 2.0, 3.0});
  s.set_vector("y", {-2.0, 1.0, 0.0});
  s.set_vector("z", {0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(embedding_sim({"x"}, {"x"}, s), 1.0);
  EXPECT_DOUBLE_EQ(embedding_sim({"x"}, {"y"}, s), 0.0);
  EXPECT_THROW(embedding_sim({"x"}, {"z"}, s), DegenerateScore);

  std::mt19937 rng(2);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u(8), v(8);
    for (auto& x : u) x = d(rng);
    for (auto& x : v) x = d(rng);
    double dot = 0, nu = 0, nv = 0;
    for (int i = 0; i < 8; ++i) {
      dot += u[i] * v[i];
      nu += u[i] * u[i];
      nv += v[i] * v[i];
    }
    EXPECT_NEAR(cosine(u, v), dot / std::sqrt(nu * nv), 1e-12);
  }
  TableScorer no_embed;
  EXPECT_THROW(embedding_sim({"x"}, {"y"}, no_embed), BackendError);
}

TEST(ScoreTable, OneByOneEqualsSymSim) {
  TableScorer s;
  s.set("B", "A", {0.7});
  s.set("A", "B", {0.2});
  s.set("A", "A", {0.9});
  s.set("B", "B", {0.6});
  SelfProbCache cache;
  auto t = score_table({"A"}, {"B"}, s, &cache);
  ASSERT_TRUE(t.at(0, 0).valid);
  EXPECT_EQ(t.at(0, 0).value, sym_sim({"A"}, {"B"}, s).value);
  EXPECT_THROW(score_table({}, {"B"}, s, &cache), PreconditionError);
}

TEST(ScoreTable, SharedSurfaceRowsAreBitEqual) {
  TableScorer s(0.4);
  s.set("c1", "New York", {0.3, 0.6});
  SelfProbCache cache;
  auto t = score_table({"New York", "Boston", "New York"}, {"c1", "c2"}, s, &cache);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(t.at(0, c).value, t.at(2, c).value);
  EXPECT_EQ(cache.misses(), 4u);  // New York, Boston, c1, c2
}

TEST(ScoreTable, CacheTransparency) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> p(0.05, 1.0);
  TableScorer s;
  std::vector<std::string> rows = {"r0 x", "r1", "r2 y z"}, cols = {"c0", "c1 q", "c2", "c3 w e"};
  auto fill = [&](const std::string& cond, const std::string& scored) {
    std::vector<double> v;
    for (std::size_t i = 0; i < split_ws(scored).size(); ++i) v.push_back(p(rng));
    s.set(cond, scored, v);
  };
  for (const auto& r : rows) {
    fill(r, r);
    for (const auto& c : cols) {
      fill(c, r);
      fill(r, c);
    }
  }
  for (const auto& c : cols) fill(c, c);

  SelfProbCache cache;
  auto cached = score_table(rows, cols, s, &cache, {{}, 3, ScoreMode::Translation});
  auto cached_again = score_table(rows, cols, s, &cache, {{}, 5, ScoreMode::Translation});
  EXPECT_LE(s.max_batch, 5u);
  auto uncached = score_table(rows, cols, s, nullptr);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) {
      double direct = sym_sim(split_ws(rows[r]), split_ws(cols[c]), s).value;
      EXPECT_EQ(cached.at(r, c).value, direct);
      EXPECT_EQ(cached_again.at(r, c).value, direct);
      EXPECT_EQ(uncached.at(r, c).value, direct);
    }
  EXPECT_EQ(cache.misses(), 7u);
  EXPECT_EQ(cache.hits(), 7u);
}

TEST(ScoreTable, DegenerateCellIsInvalid) {
  TableScorer s(0.5);
  s.set("bad", "bad", {0.0});
  SelfProbCache cache;
  auto t = score_table({"A"}, {"ok", "bad"}, s, &cache);
  EXPECT_TRUE(t.at(0, 0).valid);
  EXPECT_FALSE(t.at(0, 1).valid);
  EXPECT_FALSE(t.at(0, 1).reason.empty());
}

TEST(ScoreTable, EmbeddingMode) {
  TableScorer s;
  s.set_vector("A", {1.0, 0.0});
  s.set_vector("B", {1.0, 1.0});
  s.set_vector("Z", {0.0, 0.0});
  auto t = score_table({"A"}, {"B", "Z"}, s, nullptr, {{}, 32, ScoreMode::Embedding});
  EXPECT_NEAR(t.at(0, 0).value, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_FALSE(t.at(0, 0).has_parts);
  EXPECT_FALSE(t.at(0, 1).valid);
}

TEST(SelfProbCache, ConcurrentLookupsComputeOnce) {
  SelfProbCache cache;
  std::atomic<int> computed{0};
  std::vector<SelfProbCache::Key> keys;
  for (int i = 0; i < 50; ++i) keys.push_back({"en", "k" + std::to_string(i)});
  auto fn = [&](const std::vector<SelfProbCache::Key>& ks) {
    computed += static_cast<int>(ks.size());
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    std::vector<double> out;
    for (const auto& k : ks) out.push_back(-static_cast<double>(k.text.size()));
    return out;
  };
  std::vector<std::thread> ts;
  for (int t = 0; t < 8; ++t)
    ts.emplace_back([&] {
      auto v = cache.get_or_compute(keys, fn);
      for (std::size_t i = 0; i < keys.size(); ++i)
        ASSERT_EQ(v[i], -static_cast<double>(keys[i].text.size()));
    });
  for (auto& t : ts) t.join();
  EXPECT_EQ(computed.load(), 50);
  EXPECT_EQ(cache.misses(), 50u);
  EXPECT_EQ(cache.hits(), 350u);
}

TEST(SelfProbCache, FailedComputeIsRetryable) {
  SelfProbCache cache;
  auto boom = [](const std::vector<SelfProbCache::Key>&) -> std::vector<double> {
    throw TransportError("down");
  };
  EXPECT_THROW(cache.get_or_compute({{"en", "x"}}, boom), TransportError);
  EXPECT_EQ(cache.size(), 0u);
  auto ok = [](const std::vector<SelfProbCache::Key>& ks) { return std::vector<double>(ks.size(), -1.0); };
  EXPECT_EQ(cache.get_or_compute({{"en", "x"}}, ok).front(), -1.0);
}
