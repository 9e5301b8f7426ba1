#pragma once

// Deterministic in-process backends for tests, offline runs and
// reproducibility checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tproj/corpus.hpp"
#include "tproj/error.hpp"
#include "tproj/generation.hpp"
#include "tproj/scoring.hpp"

namespace tproj::mock {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Word-level bilingual dictionary. Lines: "source<ws>target".
class Lexicon {
 public:
  static Lexicon read(std::istream& in) {
    Lexicon lx;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      Tokens cols = split_ws(line);
      if (cols.empty()) continue;
      if (cols.size() != 2) throw FormatError(lineno, "lexicon line needs two columns");
      lx.add(cols[0], cols[1]);
    }
    return lx;
  }

  void add(const std::string& src, const std::string& tgt) {
    fwd_[src].insert(tgt);
    bwd_[tgt].insert(src);
  }

  // True when a and b are equal or dictionary translations of each other.
  bool related(const std::string& a, const std::string& b) const {
    if (a == b) return true;
    auto f = fwd_.find(a);
    if (f != fwd_.end() && f->second.count(b)) return true;
    auto g = fwd_.find(b);
    return g != fwd_.end() && g->second.count(a);
  }

  // First listed translation, or the word itself.
  std::string translate(const std::string& w) const {
    auto f = fwd_.find(w);
    return f == fwd_.end() ? w : *f->second.begin();
  }

  // Language-neutral representative: target words map back to a source word.
  std::string concept_of(const std::string& w) const {
    auto b = bwd_.find(w);
    return b == bwd_.end() ? w : *b->second.begin();
  }

  std::size_t size() const { return fwd_.size(); }

 private:
  std::map<std::string, std::set<std::string>> fwd_;
  std::map<std::string, std::set<std::string>> bwd_;
};

// Each scored token gets probability `hit` when it equals or translates a
// token of the condition, `miss` otherwise. Self-probabilities are therefore
// always `hit`, and the exact translation of a span scores sim = 1.
class LexiconScorer : public ScorerBackend {
 public:
  explicit LexiconScorer(Lexicon lx, double hit = 0.9, double miss = 0.05, std::size_t dims = 64)
      : lx_(std::move(lx)), log_hit_(std::log(hit)), log_miss_(std::log(miss)), dims_(dims) {}

  Capabilities capabilities() const override { return {true, true}; }
  std::string identity() const override { return "mock:lexicon"; }

  std::vector<double> token_logprobs(const ScoreRequest& req) override {
    Tokens cond = split_ws(req.condition_text);
    std::vector<double> out;
    for (const auto& t : split_ws(req.scored_text)) {
      bool hit = std::any_of(cond.begin(), cond.end(),
                             [&](const std::string& c) { return lx_.related(c, t); });
      out.push_back(hit ? log_hit_ : log_miss_);
    }
    return out;
  }

  // Bag of concepts hashed into a fixed number of buckets.
  std::vector<double> embed(const std::string& text, const std::string&) override {
    std::vector<double> v(dims_, 0.0);
    for (const auto& t : split_ws(text)) v[fnv1a(lx_.concept_of(t)) % dims_] += 1.0;
    return v;
  }

  const Lexicon& lexicon() const { return lx_; }

 private:
  Lexicon lx_;
  double log_hit_;
  double log_miss_;
  std::size_t dims_;
};

// Pseudo-random but reproducible token log-probabilities in
// [log 0.02, log 0.98], a pure function of (condition, token, position).
class HashScorer : public ScorerBackend {
 public:
  explicit HashScorer(std::uint64_t seed = 0, std::size_t dims = 16) : seed_(seed), dims_(dims) {}

  Capabilities capabilities() const override { return {true, true}; }
  std::string identity() const override { return "mock:hash"; }

  std::vector<double> token_logprobs(const ScoreRequest& req) override {
    std::vector<double> out;
    Tokens toks = split_ws(req.scored_text);
    std::uint64_t base = fnv1a(req.condition_lang + '\x1f' + req.condition_text, fnv1a(std::to_string(seed_)));
    for (std::size_t i = 0; i < toks.size(); ++i) {
      std::uint64_t h = fnv1a(toks[i] + '\x1f' + std::to_string(i), base);
      double u = static_cast<double>(h % 1000003) / 1000003.0;
      out.push_back(std::log(0.02 + 0.96 * u));
    }
    return out;
  }

  std::vector<double> embed(const std::string& text, const std::string& lang) override {
    std::vector<double> v(dims_);
    for (std::size_t d = 0; d < dims_; ++d) {
      std::uint64_t h = fnv1a(text + '\x1f' + lang + '\x1f' + std::to_string(d), seed_ + 7);
      v[d] = static_cast<double>(h % 2001) / 1000.0 - 1.0;
    }
    return v;
  }

 private:
  std::uint64_t seed_;
  std::size_t dims_;
};

// Replays recorded beams keyed by prompt text. JSONL lines:
//   {"prompt": "...", "beams": [{"text": "...", "logprob": -1.2}, ...]}
class ScriptedGenerator : public Generator {
 public:
  ScriptedGenerator() = default;

  static ScriptedGenerator read_jsonl(std::istream& in) {
    ScriptedGenerator g;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (split_ws(line).empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        std::vector<Beam> beams;
        for (const auto& b : j.at("beams"))
          beams.push_back({b.at("text").get<std::string>(), b.at("logprob").get<double>()});
        g.add(j.at("prompt").get<std::string>(), std::move(beams));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(lineno, std::string("beam file: ") + e.what());
      }
    }
    return g;
  }

  void add(const std::string& prompt, std::vector<Beam> beams) {
    std::stable_sort(beams.begin(), beams.end(),
                     [](const Beam& a, const Beam& b) { return a.logprob > b.logprob; });
    script_[prompt] = std::move(beams);
  }

  std::vector<Beam> generate(const GenerateRequest& req) override {
    auto it = script_.find(req.prompt);
    if (it == script_.end()) return {};
    std::vector<Beam> out = it->second;
    if (out.size() > static_cast<std::size_t>(req.n_beams)) out.resize(static_cast<std::size_t>(req.n_beams));
    return out;
  }

  std::string identity() const override { return "mock:scripted"; }

 private:
  std::unordered_map<std::string, std::vector<Beam>> script_;
};

// Word-by-word dictionary translation of plain text; a single beam. Tagged
// prompts get no beams.
class LexiconTranslator : public Generator {
 public:
  explicit LexiconTranslator(Lexicon lx) : lx_(std::move(lx)) {}

  std::vector<Beam> generate(const GenerateRequest& req) override {
    if (req.prompt.find('<') != std::string::npos) return {};
    Tokens out;
    for (const auto& w : split_ws(req.prompt)) out.push_back(lx_.translate(w));
    if (out.empty()) return {};
    return {Beam{join(out), 0.0}};
  }

  std::string identity() const override { return "mock:lexicon-translator"; }

 private:
  Lexicon lx_;
};

}  // namespace tproj::mock
