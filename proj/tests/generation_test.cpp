#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tproj/backends/mock.hpp"
#include "tproj/generation.hpp"

using namespace tproj;

namespace {

const Tokens kTarget = {"Obama", "fue", "a", "Nueva", "York"};

ParallelPair obama() {
  LabeledSentence src{"0", {"Obama", "went", "to", "New", "York"}, {}};
  src.spans = {make_span(src.tokens, 0, 1, "Person"), make_span(src.tokens, 3, 5, "Location")};
  return make_parallel_pair(src, kTarget);
}

std::size_t position_ngrams(const CandidateGroup& g) {
  std::size_t n = 0;
  for (const auto& c : g.candidates) n += c.occurrences.size();
  return n;
}

}  // namespace

TEST(GenerateCandidates, ScriptedBeamsPassThrough) {
  auto pair = obama();
  auto prompt = build_prompt(pair, CategoryMap::defaults());
  mock::ScriptedGenerator gen;
  gen.add(prompt.text, {{"<Person>Obama</Person> <Location>Nueva York</Location>", -0.1},
                        {"<Person>Obama</Person> <Location>York</Location>", -0.9},
                        {"<Person>Obama <Location>", -1.5}});
  auto r = generate_candidates(prompt, gen, 100);
  EXPECT_EQ(r.returned, 3u);
  EXPECT_EQ(r.malformed, 1u);
  ASSERT_EQ(r.beams.size(), 2u);
  EXPECT_EQ(r.beams[1].slots[1].candidate_text, "York");

  auto greedy = generate_candidates(prompt, gen, 1);
  ASSERT_EQ(greedy.beams.size(), 1u);
  EXPECT_EQ(greedy.beams[0].slots[1].candidate_text, "Nueva York");

  auto groups = match_and_filter(r, prompt, pair.target_tokens);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].category, "Person");
  EXPECT_EQ(groups[0].candidates[0].text, "Obama");
  EXPECT_THROW(generate_candidates(prompt, gen, 0), PreconditionError);
}

TEST(GenerateCandidates, AllMalformedGivesEmpty) {
  auto prompt = build_prompt(obama(), CategoryMap::defaults());
  mock::ScriptedGenerator gen;
  gen.add(prompt.text, {{"<Person>", -0.1}});
  auto r = generate_candidates(prompt, gen, 10);
  EXPECT_TRUE(r.beams.empty());
  EXPECT_TRUE(match_and_filter(r, prompt, kTarget).empty());
}

TEST(MatchAndFilter, SubsequenceAndCaseFallback) {
  auto groups = match_and_filter({{"Nueva York", "Location", -1.0},
                                  {"Boston", "Location", -0.5},
                                  {"nueva york", "Location", -2.0},
                                  {"", "Location", -0.1},
                                  {"  Nueva   York ", "Location", -0.3}},
                                 kTarget);
  ASSERT_EQ(groups.size(), 1u);
  const auto& c = groups[0].candidates;
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].text, "Nueva York");
  EXPECT_EQ(c[0].occurrences, (std::vector<Range>{{3, 5}}));
  EXPECT_DOUBLE_EQ(c[0].best_beam_logprob, -0.3);
  EXPECT_EQ(c[1].text, "nueva york");
  EXPECT_EQ(c[1].occurrences, (std::vector<Range>{{3, 5}}));
}

TEST(MatchAndFilter, ExactMatchSuppressesCaseFallback) {
  Tokens t = {"US", "and", "us"};
  auto occ = find_occurrences({"us"}, t);
  EXPECT_EQ(occ, (std::vector<Range>{{2, 3}}));
  occ = find_occurrences({"Us"}, t);
  EXPECT_EQ(occ, (std::vector<Range>{{0, 1}, {2, 3}}));
}

TEST(MatchAndFilter, AgreesWithWindowOracle) {
  std::mt19937 rng(13);
  const std::vector<std::string> vocab = {"a", "A", "b", "B", "c"};
  for (int trial = 0; trial < 500; ++trial) {
    Tokens target;
    for (std::size_t i = 0, n = 1 + rng() % 8; i < n; ++i) target.push_back(vocab[rng() % vocab.size()]);
    Tokens needle;
    for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) needle.push_back(vocab[rng() % vocab.size()]);
    auto got = find_occurrences(needle, target);
    auto want = oracle::windows_matching(join(needle), target);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].start, want[i].first);
      EXPECT_EQ(got[i].end, want[i].second);
    }
  }
}

TEST(MatchAndFilter, SoundAndIdempotent) {
  std::mt19937 rng(17);
  const std::vector<std::string> vocab = {"x", "X", "y", "z"};
  for (int trial = 0; trial < 300; ++trial) {
    Tokens target;
    for (std::size_t i = 0, n = 1 + rng() % 7; i < n; ++i) target.push_back(vocab[rng() % vocab.size()]);
    std::vector<RawCandidate> raw;
    for (int k = 0; k < 6; ++k) {
      Tokens t;
      for (std::size_t i = 0, n = rng() % 3; i < n; ++i) t.push_back(vocab[rng() % vocab.size()]);
      raw.push_back({join(t), k % 2 ? "P" : "Q", -double(rng() % 10)});
    }
    auto once = match_and_filter(raw, target);
    for (const auto& g : once)
      for (const auto& c : g.candidates) {
        ASSERT_FALSE(c.occurrences.empty());
        EXPECT_EQ(c.category, g.category);
        for (const auto& o : c.occurrences)
          EXPECT_EQ(oracle::lower(surface_of(target, o)), oracle::lower(c.text));
      }
    std::vector<RawCandidate> again;
    for (const auto& g : once)
      for (const auto& c : g.candidates) again.push_back({c.text, c.category, c.best_beam_logprob});
    auto twice = match_and_filter(again, target);
    ASSERT_EQ(once.size(), twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      ASSERT_EQ(once[i].candidates.size(), twice[i].candidates.size());
      for (std::size_t j = 0; j < once[i].candidates.size(); ++j) {
        EXPECT_EQ(once[i].candidates[j].text, twice[i].candidates[j].text);
        EXPECT_EQ(once[i].candidates[j].occurrences, twice[i].candidates[j].occurrences);
        EXPECT_EQ(once[i].candidates[j].best_beam_logprob, twice[i].candidates[j].best_beam_logprob);
      }
    }
  }
}

TEST(NgramCandidates, CountIdentity) {
  auto g = ngram_candidates({"a", "b", "c", "d"}, {"X"});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].candidates.size(), 10u);
  EXPECT_EQ(position_ngrams(g[0]), 10u);
}

TEST(NgramCandidates, RepeatedToken) {
  auto g = ngram_candidates({"a", "a"}, {"X"});
  ASSERT_EQ(g[0].candidates.size(), 2u);
  EXPECT_EQ(g[0].candidates[0].text, "a");
  EXPECT_EQ(g[0].candidates[0].occurrences, (std::vector<Range>{{0, 1}, {1, 2}}));
  EXPECT_EQ(g[0].candidates[1].text, "a a");
}

TEST(NgramCandidates, BruteForceTwentyTokensTwoCategories) {
  Tokens t;
  for (int i = 0; i < 20; ++i) t.push_back("w" + std::to_string(i % 6));
  auto groups = ngram_candidates(t, {"P", "Q"});
  ASSERT_EQ(groups.size(), 2u);
  std::set<std::pair<std::size_t, std::size_t>> brute;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j <= t.size(); ++j) brute.emplace(i, j);
  for (const auto& g : groups) {
    EXPECT_EQ(position_ngrams(g), 210u);
    std::set<std::pair<std::size_t, std::size_t>> got;
    for (const auto& c : g.candidates)
      for (const auto& o : c.occurrences) {
        got.emplace(o.start, o.end);
        EXPECT_EQ(surface_of(t, o), c.text);
        EXPECT_EQ(c.category, g.category);
        EXPECT_EQ(c.best_beam_logprob, kUnscoredLogprob);
      }
    EXPECT_EQ(got, brute);
  }
  EXPECT_THROW(ngram_candidates({}, {"P"}), PreconditionError);
}
