#pragma once

// Translation-probability similarity between source spans and candidates.
//
//   p(A|B)    = exp(mean_i log p(A_i | B, A_<i))    length-normalized
//   sim(A|B)  = p(A|B) / p(A|A)
//   sim(A,B)  = sim(A|B)/2 + sim(B|A)/2
//
// Everything stays in log space until the ratio is taken.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tproj/corpus.hpp"
#include "tproj/error.hpp"

namespace tproj {

struct ScoreRequest {
  std::string condition_text;
  std::string condition_lang;
  std::string scored_text;
  std::string scored_lang;

  friend bool operator==(const ScoreRequest&, const ScoreRequest&) = default;
  friend auto operator<=>(const ScoreRequest&, const ScoreRequest&) = default;
};

struct Capabilities {
  bool conditional_logprobs = false;
  bool embeddings = false;
};

// Conditional token log-probabilities and, optionally, sentence embeddings.
// Implementations must tolerate concurrent calls.
class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual Capabilities capabilities() const = 0;
  virtual std::string identity() const = 0;

  // One log-probability per (backend-defined) token of scored_text.
  virtual std::vector<double> token_logprobs(const ScoreRequest& req) = 0;

  virtual std::vector<std::vector<double>> token_logprobs_batch(
      const std::vector<ScoreRequest>& reqs) {
    std::vector<std::vector<double>> out;
    out.reserve(reqs.size());
    for (const auto& r : reqs) out.push_back(token_logprobs(r));
    return out;
  }

  virtual std::vector<double> embed(const std::string& text, const std::string& lang) {
    (void)text;
    (void)lang;
    throw BackendError(identity() + ": embeddings not supported");
  }
};

// Source spans are in `source`, candidates in `target`.
struct LanguagePair {
  std::string source = "src";
  std::string target = "tgt";
};

// Mean token log-probability. -inf tokens are allowed (probability zero);
// NaN, +inf and empty streams break the backend contract.
inline double mean_logprob(std::span<const double> lps) {
  if (lps.empty()) throw BackendError("backend returned no token log-probabilities");
  double sum = 0.0;
  for (double lp : lps) {
    if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
      throw BackendError("backend returned a non-finite token log-probability");
    sum += lp;
  }
  return sum / static_cast<double>(lps.size());
}

inline double log_translation_prob(const Tokens& a, const Tokens& b, ScorerBackend& backend,
                                   const std::string& a_lang, const std::string& b_lang) {
  if (a.empty()) throw PreconditionError("translation_prob: empty scored sequence");
  auto lps = backend.token_logprobs({join(b), b_lang, join(a), a_lang});
  return mean_logprob(lps);
}

// p(A|B): geometric mean of the per-token probabilities of A given B.
inline double translation_prob(const Tokens& a, const Tokens& b, ScorerBackend& backend,
                               const std::string& a_lang, const std::string& b_lang) {
  return std::exp(log_translation_prob(a, b, backend, a_lang, b_lang));
}

// exp(log p(A|B) - log p(A|A)).
inline double normalized_from_logs(double log_a_given_b, double log_a_given_a) {
  if (!std::isfinite(log_a_given_a))
    throw DegenerateScore("self-probability p(A|A) is zero");
  double r = std::exp(log_a_given_b - log_a_given_a);
  if (!std::isfinite(r)) throw DegenerateScore("normalized similarity overflows");
  return r;
}

inline double normalized_sim(const Tokens& a, const Tokens& b, ScorerBackend& backend,
                             const std::string& a_lang, const std::string& b_lang) {
  double ab = log_translation_prob(a, b, backend, a_lang, b_lang);
  double aa = log_translation_prob(a, a, backend, a_lang, a_lang);
  return normalized_from_logs(ab, aa);
}

struct SimParts {
  double p_a_given_b = 0.0;
  double p_b_given_a = 0.0;
  double p_a_given_a = 0.0;
  double p_b_given_b = 0.0;
};

struct SimScore {
  double value = 0.0;
  SimParts parts;
};

inline SimScore sym_from_logs(double l_ab, double l_ba, double l_aa, double l_bb) {
  double fwd = normalized_from_logs(l_ab, l_aa);
  double bwd = normalized_from_logs(l_ba, l_bb);
  return {0.5 * fwd + 0.5 * bwd,
          {std::exp(l_ab), std::exp(l_ba), std::exp(l_aa), std::exp(l_bb)}};
}

// A is in langs.source, B in langs.target.
inline SimScore sym_sim(const Tokens& a, const Tokens& b, ScorerBackend& backend,
                        const LanguagePair& langs = {}) {
  const std::string& la = langs.source;
  const std::string& lb = langs.target;
  return sym_from_logs(log_translation_prob(a, b, backend, la, lb),
                       log_translation_prob(b, a, backend, lb, la),
                       log_translation_prob(a, a, backend, la, la),
                       log_translation_prob(b, b, backend, lb, lb));
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw BackendError("embedding dimensions differ");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw DegenerateScore("zero embedding vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

inline double embedding_sim(const Tokens& a, const Tokens& b, ScorerBackend& backend,
                            const LanguagePair& langs = {}) {
  if (!backend.capabilities().embeddings)
    throw BackendError(backend.identity() + ": embeddings not supported");
  auto u = backend.embed(join(a), langs.source);
  auto v = backend.embed(join(b), langs.target);
  return cosine(u, v);
}

// ---------------------------------------------------------------------------

// Self-probabilities log p(X|X), keyed by (language, text). Each key is
// computed at most once; concurrent requests for an in-flight key wait for
// it.
class SelfProbCache {
 public:
  struct Key {
    std::string lang;
    std::string text;
  };

  using ComputeFn = std::function<std::vector<double>(const std::vector<Key>&)>;

  std::vector<double> get_or_compute(const std::vector<Key>& keys, const ComputeFn& compute) {
    std::vector<std::shared_future<double>> futures(keys.size());
    std::vector<Key> mine;
    std::vector<std::promise<double>> promises;
    std::vector<std::string> mine_ids;
    {
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < keys.size(); ++i) {
        std::string id = keys[i].lang + '\x1f' + keys[i].text;
        auto it = entries_.find(id);
        if (it != entries_.end()) {
          futures[i] = it->second;
          ++hits_;
          continue;
        }
        promises.emplace_back();
        futures[i] = promises.back().get_future().share();
        entries_.emplace(id, futures[i]);
        mine.push_back(keys[i]);
        mine_ids.push_back(std::move(id));
        ++misses_;
      }
    }
    if (!mine.empty()) {
      try {
        std::vector<double> values = compute(mine);
        if (values.size() != mine.size()) throw BackendError("self-probability batch size mismatch");
        for (std::size_t i = 0; i < mine.size(); ++i) promises[i].set_value(values[i]);
      } catch (...) {
        {
          std::lock_guard lock(mu_);
          for (const auto& id : mine_ids) entries_.erase(id);
        }
        for (auto& p : promises) p.set_exception(std::current_exception());
        throw;
      }
    }
    std::vector<double> out;
    out.reserve(keys.size());
    for (auto& f : futures) out.push_back(f.get());
    return out;
  }

  // Seeds a resolved entry (e.g. from a persisted cache). Existing keys win.
  void insert(const std::string& lang, const std::string& text, double value) {
    std::promise<double> p;
    p.set_value(value);
    std::lock_guard lock(mu_);
    entries_.emplace(lang + '\x1f' + text, p.get_future().share());
  }

  // Resolved entries as (lang, text, value), sorted.
  std::vector<std::tuple<std::string, std::string, double>> snapshot() const {
    std::vector<std::tuple<std::string, std::string, double>> out;
    std::lock_guard lock(mu_);
    for (const auto& [id, f] : entries_) {
      if (f.wait_for(std::chrono::seconds(0)) != std::future_status::ready) continue;
      auto sep = id.find('\x1f');
      out.emplace_back(id.substr(0, sep), id.substr(sep + 1), f.get());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::shared_future<double>> entries_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// ---------------------------------------------------------------------------

enum class ScoreMode { Translation, Embedding };

struct ScoreOptions {
  LanguagePair langs;
  std::size_t batch_size = 32;
  ScoreMode mode = ScoreMode::Translation;
};

struct ScoreCell {
  bool valid = false;
  double value = 0.0;
  bool has_parts = false;  // translation mode only
  SimParts parts;
  std::string reason;  // why the cell is invalid
};

// rows = source span surfaces, cols = candidate texts.
struct ScoreTable {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<ScoreCell> cells;

  const ScoreCell& at(std::size_t r, std::size_t c) const { return cells.at(r * cols.size() + c); }
  ScoreCell& at(std::size_t r, std::size_t c) { return cells.at(r * cols.size() + c); }
};

struct TableSpec {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
};

namespace detail {

// Sends requests in chunks of batch_size; returns one result per request.
inline std::vector<std::vector<double>> batched(ScorerBackend& backend,
                                                const std::vector<ScoreRequest>& reqs,
                                                std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  std::vector<std::vector<double>> out;
  out.reserve(reqs.size());
  for (std::size_t i = 0; i < reqs.size(); i += batch_size) {
    std::vector<ScoreRequest> chunk(reqs.begin() + static_cast<std::ptrdiff_t>(i),
                                    reqs.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min(reqs.size(), i + batch_size)));
    auto res = backend.token_logprobs_batch(chunk);
    if (res.size() != chunk.size()) throw BackendError("batch response size mismatch");
    for (auto& r : res) out.push_back(std::move(r));
  }
  return out;
}

// Mean log-probability, or nullopt with the contract violation in `why`.
inline std::optional<double> try_mean(const std::vector<double>& lps, std::string& why) {
  try {
    return mean_logprob(lps);
  } catch (const BackendError& e) {
    why = e.what();
    return std::nullopt;
  }
}

inline std::vector<ScoreTable> translation_tables(const std::vector<TableSpec>& specs,
                                                  ScorerBackend& backend, SelfProbCache* cache,
                                                  const ScoreOptions& opt) {
  const std::string& ls = opt.langs.source;
  const std::string& lt = opt.langs.target;

  // Distinct cross requests across all tables of the pair.
  std::map<ScoreRequest, std::size_t> cross_idx;
  std::vector<ScoreRequest> cross;
  auto add_cross = [&](ScoreRequest r) {
    auto [it, inserted] = cross_idx.try_emplace(r, cross.size());
    if (inserted) cross.push_back(std::move(r));
  };
  std::map<std::pair<std::string, std::string>, std::size_t> self_idx;
  std::vector<SelfProbCache::Key> self_keys;
  auto add_self = [&](const std::string& lang, const std::string& text) {
    auto [it, inserted] = self_idx.try_emplace({lang, text}, self_keys.size());
    if (inserted) self_keys.push_back({lang, text});
  };
  for (const auto& spec : specs) {
    for (const auto& a : spec.rows) add_self(ls, a);
    for (const auto& b : spec.cols) add_self(lt, b);
    for (const auto& a : spec.rows)
      for (const auto& b : spec.cols) {
        add_cross({b, lt, a, ls});  // p(A|B)
        add_cross({a, ls, b, lt});  // p(B|A)
      }
  }

  // Self-probabilities. A backend contract violation poisons the key as NaN.
  auto compute_self = [&](const std::vector<SelfProbCache::Key>& keys) {
    std::vector<ScoreRequest> reqs;
    for (const auto& k : keys) reqs.push_back({k.text, k.lang, k.text, k.lang});
    auto res = batched(backend, reqs, opt.batch_size);
    std::vector<double> out;
    for (const auto& r : res) {
      std::string why;
      out.push_back(try_mean(r, why).value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    return out;
  };
  std::vector<double> self = cache ? cache->get_or_compute(self_keys, compute_self)
                                   : compute_self(self_keys);

  std::vector<double> cross_lp;
  std::vector<std::string> cross_err(cross.size());
  {
    auto res = batched(backend, cross, opt.batch_size);
    for (std::size_t i = 0; i < res.size(); ++i)
      cross_lp.push_back(
          try_mean(res[i], cross_err[i]).value_or(std::numeric_limits<double>::quiet_NaN()));
  }

  std::vector<ScoreTable> tables;
  for (const auto& spec : specs) {
    ScoreTable t{spec.rows, spec.cols, std::vector<ScoreCell>(spec.rows.size() * spec.cols.size())};
    for (std::size_t r = 0; r < spec.rows.size(); ++r) {
      for (std::size_t c = 0; c < spec.cols.size(); ++c) {
        const std::string& a = spec.rows[r];
        const std::string& b = spec.cols[c];
        ScoreCell& cell = t.at(r, c);
        std::size_t i_ab = cross_idx.at({b, lt, a, ls});
        std::size_t i_ba = cross_idx.at({a, ls, b, lt});
        double l_aa = self[self_idx.at({ls, a})];
        double l_bb = self[self_idx.at({lt, b})];
        double l_ab = cross_lp[i_ab];
        double l_ba = cross_lp[i_ba];
        if (std::isnan(l_ab) || std::isnan(l_ba) || std::isnan(l_aa) || std::isnan(l_bb)) {
          cell.reason = "backend contract violation";
          if (!cross_err[i_ab].empty()) cell.reason = cross_err[i_ab];
          else if (!cross_err[i_ba].empty()) cell.reason = cross_err[i_ba];
          continue;
        }
        try {
          SimScore s = sym_from_logs(l_ab, l_ba, l_aa, l_bb);
          cell.valid = true;
          cell.value = s.value;
          cell.parts = s.parts;
          cell.has_parts = true;
        } catch (const DegenerateScore& e) {
          cell.reason = e.what();
        }
      }
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

inline std::vector<ScoreTable> embedding_tables(const std::vector<TableSpec>& specs,
                                                ScorerBackend& backend, const ScoreOptions& opt) {
  if (!backend.capabilities().embeddings)
    throw BackendError(backend.identity() + ": embeddings not supported");
  std::map<std::pair<std::string, std::string>, std::vector<double>> memo;
  auto vec = [&](const std::string& lang, const std::string& text) -> const std::vector<double>& {
    auto it = memo.find({lang, text});
    if (it == memo.end()) it = memo.emplace(std::make_pair(lang, text), backend.embed(text, lang)).first;
    return it->second;
  };
  std::vector<ScoreTable> tables;
  for (const auto& spec : specs) {
    ScoreTable t{spec.rows, spec.cols, std::vector<ScoreCell>(spec.rows.size() * spec.cols.size())};
    for (std::size_t r = 0; r < spec.rows.size(); ++r)
      for (std::size_t c = 0; c < spec.cols.size(); ++c) {
        ScoreCell& cell = t.at(r, c);
        try {
          cell.value = cosine(vec(opt.langs.source, spec.rows[r]), vec(opt.langs.target, spec.cols[c]));
          cell.valid = true;
        } catch (const DegenerateScore& e) {
          cell.reason = e.what();
        }
      }
    tables.push_back(std::move(t));
  }
  return tables;
}

}  // namespace detail

// Scores several span x candidate tables in one batched pass (one call per
// parallel pair). `cache` may be null.
inline std::vector<ScoreTable> score_tables(const std::vector<TableSpec>& specs,
                                            ScorerBackend& backend, SelfProbCache* cache,
                                            const ScoreOptions& opt = {}) {
  if (opt.mode == ScoreMode::Embedding) return detail::embedding_tables(specs, backend, opt);
  return detail::translation_tables(specs, backend, cache, opt);
}

inline ScoreTable score_table(const std::vector<std::string>& spans,
                              const std::vector<std::string>& candidates, ScorerBackend& backend,
                              SelfProbCache* cache, const ScoreOptions& opt = {}) {
  if (spans.empty() || candidates.empty())
    throw PreconditionError("score_table: spans and candidates must be non-empty");
  return score_tables({{spans, candidates}}, backend, cache, opt).front();
}

}  // namespace tproj
