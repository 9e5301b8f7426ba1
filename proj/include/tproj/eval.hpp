#pragma once

// Exact-match span precision / recall / F1 (CoNLL convention).

#include <cstddef>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "tproj/corpus.hpp"
#include "tproj/error.hpp"

namespace tproj {

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double f1() const {
    double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

struct EvalReport {
  std::map<std::string, Counts> per_category;
  std::size_t sentences = 0;
  std::map<std::string, std::size_t> unassigned;  // reason -> count

  Counts micro() const {
    Counts c;
    for (const auto& [_, v] : per_category) c += v;
    return c;
  }

  // Associative merge of two partial reports.
  EvalReport& merge(const EvalReport& o) {
    for (const auto& [k, v] : o.per_category) per_category[k] += v;
    for (const auto& [k, v] : o.unassigned) unassigned[k] += v;
    sentences += o.sentences;
    return *this;
  }
};

inline EvalReport span_f1_sentence(const LabeledSentence& pred, const LabeledSentence& gold) {
  using Key = std::tuple<std::size_t, std::size_t, std::string>;
  std::set<Key> g;
  EvalReport r;
  r.sentences = 1;
  for (const Span& s : gold.spans) {
    g.emplace(s.start, s.end, s.category);
    r.per_category[s.category];
  }
  std::set<Key> matched;
  for (const Span& s : pred.spans) {
    Key k{s.start, s.end, s.category};
    if (g.count(k) && matched.insert(k).second) ++r.per_category[s.category].tp;
    else ++r.per_category[s.category].fp;
  }
  for (const Span& s : gold.spans)
    if (!matched.count({s.start, s.end, s.category})) ++r.per_category[s.category].fn;
  return r;
}

// A predicted span is a true positive iff (start, end, category) equals a
// gold span. Sentences are paired by position and must share ids.
inline EvalReport span_f1(const std::vector<LabeledSentence>& pred,
                          const std::vector<LabeledSentence>& gold) {
  if (pred.size() != gold.size())
    throw Error("span_f1: sentence count mismatch: predicted=" + std::to_string(pred.size()) +
                " gold=" + std::to_string(gold.size()));
  EvalReport r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].id != gold[i].id)
      throw Error("span_f1: id mismatch at " + std::to_string(i) + ": '" + pred[i].id + "' vs '" +
                  gold[i].id + "'");
    r.merge(span_f1_sentence(pred[i], gold[i]));
  }
  return r;
}

inline nlohmann::json counts_json(const std::string& category, const Counts& c) {
  return {{"category", category}, {"tp", c.tp},
          {"fp", c.fp},           {"fn", c.fn},
          {"p", c.precision()},   {"r", c.recall()},
          {"f1", c.f1()}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& [k, v] : r.per_category) cats.push_back(counts_json(k, v));
  nlohmann::json un = nlohmann::json::object();
  for (const auto& [k, v] : r.unassigned) un[k] = v;
  return {{"categories", cats},
          {"micro", counts_json("ALL", r.micro())},
          {"sentences", r.sentences},
          {"unassigned", un}};
}

inline std::string to_table(const EvalReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %7s %7s %7s %8s %8s %8s\n", "category", "tp", "fp", "fn",
                "P", "R", "F1");
  out += buf;
  auto row = [&](const std::string& k, const Counts& c) {
    std::snprintf(buf, sizeof buf, "%-20s %7zu %7zu %7zu %8.2f %8.2f %8.2f\n", k.c_str(), c.tp,
                  c.fp, c.fn, 100.0 * c.precision(), 100.0 * c.recall(), 100.0 * c.f1());
    out += buf;
  };
  for (const auto& [k, v] : r.per_category) row(k, v);
  row("ALL (micro)", r.micro());
  std::snprintf(buf, sizeof buf, "sentences: %zu\n", r.sentences);
  out += buf;
  for (const auto& [k, v] : r.unassigned) {
    std::snprintf(buf, sizeof buf, "unassigned %s: %zu\n", k.c_str(), v);
    out += buf;
  }
  return out;
}

}  // namespace tproj
