#pragma once

// Assigning one target occurrence to each source span.

#include <algorithm>
#include <functional>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "tproj/corpus.hpp"
#include "tproj/generation.hpp"
#include "tproj/prompting.hpp"
#include "tproj/scoring.hpp"

namespace tproj {

namespace reason {
inline constexpr const char* kExhausted = "exhausted";
inline constexpr const char* kNoMatch = "no-match";
inline constexpr const char* kNoBeam = "no-beam";
inline constexpr const char* kNoAlignment = "no-alignment";
inline constexpr const char* kConflict = "conflict";
}  // namespace reason

struct AssignedSpan {
  std::size_t source_index = 0;
  Range target;
  std::string category;
  std::string text;
  std::optional<double> score;
  std::optional<SimParts> parts;
  std::string method;
};

struct UnassignedSpan {
  std::size_t source_index = 0;
  std::string reason;
};

struct Assignment {
  std::vector<AssignedSpan> assigned;  // source order
  std::vector<UnassignedSpan> unassigned;
  std::vector<std::string> diagnostics;

  void sort_by_source() {
    auto by_src = [](const auto& a, const auto& b) { return a.source_index < b.source_index; };
    std::stable_sort(assigned.begin(), assigned.end(), by_src);
    std::stable_sort(unassigned.begin(), unassigned.end(), by_src);
  }
};

// Target positions already consumed by a selected span.
class Occupancy {
 public:
  explicit Occupancy(std::size_t n) : used_(n, false) {}

  bool is_free(Range r) const {
    if (r.end > used_.size()) return false;
    for (std::size_t i = r.start; i < r.end; ++i)
      if (used_[i]) return false;
    return true;
  }
  void take(Range r) {
    for (std::size_t i = r.start; i < r.end; ++i) used_[i] = true;
  }

 private:
  std::vector<bool> used_;
};

inline std::optional<Range> leftmost_free(const std::vector<Range>& occ, const Occupancy& mask) {
  for (const Range& r : occ)
    if (mask.is_free(r)) return r;
  return std::nullopt;
}

// Throws std::logic_error when two assigned spans overlap or a source span is
// accounted for twice.
inline void check_assignment(const Assignment& a, std::size_t n_source) {
  std::vector<int> seen(n_source, 0);
  for (const auto& s : a.assigned) ++seen.at(s.source_index);
  for (const auto& u : a.unassigned) ++seen.at(u.source_index);
  for (std::size_t i = 0; i < n_source; ++i)
    if (seen[i] != 1) throw std::logic_error("source span " + std::to_string(i) + " accounted " +
                                             std::to_string(seen[i]) + " times");
  for (std::size_t i = 0; i < a.assigned.size(); ++i)
    for (std::size_t j = i + 1; j < a.assigned.size(); ++j)
      if (a.assigned[i].target.overlaps(a.assigned[j].target))
        throw std::logic_error("assigned target spans overlap");
}

// Target-side labeled sentence holding the assigned spans.
inline LabeledSentence to_labeled(const std::string& id, const Tokens& target,
                                  const Assignment& a) {
  LabeledSentence s{id, target, {}};
  for (const auto& as : a.assigned)
    s.spans.push_back(make_span(target, as.target.start, as.target.end, as.category));
  std::sort(s.spans.begin(), s.spans.end(),
            [](const Span& x, const Span& y) { return x.start < y.start; });
  validate(s);
  return s;
}

// ---------------------------------------------------------------------------

// Candidates of one category scored against the source spans of that
// category. Row r of `table` belongs to source span `spans[r]`; column c to
// `group.candidates[c]`.
struct CategoryScores {
  CandidateGroup group;
  std::vector<std::size_t> spans;
  ScoreTable table;
};

// Builds the per-category row/column layout for a source sentence; scoring is
// left to the caller.
inline std::vector<CategoryScores> layout_scores(const LabeledSentence& source,
                                                 const std::vector<CandidateGroup>& groups) {
  std::vector<CategoryScores> out;
  for (const std::string& cat : categories_of(source)) {
    CategoryScores cs;
    cs.group.category = cat;
    for (const auto& g : groups)
      if (g.category == cat) cs.group = g;
    for (std::size_t i = 0; i < source.spans.size(); ++i)
      if (source.spans[i].category == cat) {
        cs.spans.push_back(i);
        cs.table.rows.push_back(source.spans[i].surface);
      }
    for (const auto& c : cs.group.candidates) cs.table.cols.push_back(c.text);
    cs.table.cells.resize(cs.table.rows.size() * cs.table.cols.size());
    out.push_back(std::move(cs));
  }
  return out;
}

// Layout plus one batched scoring pass over every category of the sentence.
inline std::vector<CategoryScores> score_groups(const LabeledSentence& source,
                                                const std::vector<CandidateGroup>& groups,
                                                ScorerBackend& backend, SelfProbCache* cache,
                                                const ScoreOptions& opt) {
  std::vector<CategoryScores> out = layout_scores(source, groups);
  std::vector<TableSpec> specs;
  std::vector<std::size_t> which;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].table.rows.empty() || out[k].table.cols.empty()) continue;
    specs.push_back({out[k].table.rows, out[k].table.cols});
    which.push_back(k);
  }
  if (specs.empty()) return out;
  auto tables = score_tables(specs, backend, cache, opt);
  for (std::size_t i = 0; i < which.size(); ++i) out[which[i]].table = std::move(tables[i]);
  return out;
}

namespace detail {

struct Pick {
  std::size_t candidate = 0;
  Range occurrence;
  double score = 0.0;
};

// Best valid candidate with a free occurrence. Ties: higher beam logprob,
// then leftmost occurrence, then fewer tokens, then text.
inline std::optional<Pick> best_pick(const CategoryScores& cs, std::size_t row,
                                     const Occupancy& mask) {
  std::optional<Pick> best;
  for (std::size_t c = 0; c < cs.group.candidates.size(); ++c) {
    const ScoreCell& cell = cs.table.at(row, c);
    if (!cell.valid) continue;
    const Candidate& cand = cs.group.candidates[c];
    auto occ = leftmost_free(cand.occurrences, mask);
    if (!occ) continue;
    if (best) {
      const Candidate& inc = cs.group.candidates[best->candidate];
      auto key = [](double s, const Candidate& k, Range o) {
        return std::make_tuple(-s, -k.best_beam_logprob, o.start, o.length(), std::cref(k.text));
      };
      if (!(key(cell.value, cand, *occ) < key(best->score, inc, best->occurrence))) continue;
    }
    best = Pick{c, *occ, cell.value};
  }
  return best;
}

inline const CategoryScores* scores_for(const std::vector<CategoryScores>& scored,
                                        std::size_t span, std::size_t& row) {
  for (const auto& cs : scored)
    for (std::size_t r = 0; r < cs.spans.size(); ++r)
      if (cs.spans[r] == span) {
        row = r;
        return &cs;
      }
  return nullptr;
}

inline void greedy_span(std::size_t span, const LabeledSentence& source,
                        const std::vector<CategoryScores>& scored, Occupancy& mask,
                        const std::string& method, Assignment& out) {
  std::size_t row = 0;
  const CategoryScores* cs = scores_for(scored, span, row);
  std::optional<Pick> pick;
  if (cs) pick = best_pick(*cs, row, mask);
  if (!pick) {
    out.unassigned.push_back({span, reason::kExhausted});
    return;
  }
  const ScoreCell& cell = cs->table.at(row, pick->candidate);
  mask.take(pick->occurrence);
  std::optional<SimParts> parts;
  if (cell.has_parts) parts = cell.parts;
  out.assigned.push_back({span, pick->occurrence, source.spans[span].category,
                          cs->group.candidates[pick->candidate].text, cell.value, parts, method});
}

}  // namespace detail

// Source spans left to right; each takes its highest-scoring candidate at the
// leftmost free occurrence, which then blocks every overlapping occurrence of
// any category.
inline Assignment select_greedy(const LabeledSentence& source,
                                const std::vector<CategoryScores>& scored,
                                std::size_t target_len) {
  Assignment out;
  Occupancy mask(target_len);
  for (std::size_t i = 0; i < source.spans.size(); ++i)
    detail::greedy_span(i, source, scored, mask, "greedy", out);
  check_assignment(out, source.spans.size());
  return out;
}

// Uses only the highest-logprob well-formed beam (earliest on ties); no
// scoring.
inline Assignment select_most_probable(const LabeledSentence& source, const TagPrompt& prompt,
                                       const GenerationResult& gen, const Tokens& target) {
  Assignment out;
  const ParsedBeam* top = nullptr;
  for (const auto& b : gen.beams)
    if (!top || b.logprob > top->logprob ||
        (b.logprob == top->logprob && b.beam_index < top->beam_index))
      top = &b;
  if (!top) {
    for (std::size_t i = 0; i < source.spans.size(); ++i)
      out.unassigned.push_back({i, reason::kNoBeam});
    return out;
  }
  Occupancy mask(target.size());
  std::vector<bool> done(source.spans.size(), false);
  for (const SlotOutput& s : top->slots) {
    std::size_t span = prompt.slots.at(s.slot).source_span;
    auto occ = leftmost_free(find_occurrences(split_ws(s.candidate_text), target), mask);
    if (!occ) continue;
    mask.take(*occ);
    done[span] = true;
    out.assigned.push_back({span, *occ, source.spans[span].category, join(split_ws(s.candidate_text)),
                            std::nullopt, std::nullopt, "most-probable"});
  }
  for (std::size_t i = 0; i < source.spans.size(); ++i)
    if (!done[i]) out.unassigned.push_back({i, reason::kNoMatch});
  out.sort_by_source();
  check_assignment(out, source.spans.size());
  return out;
}

// Evaluation-only upper bound. Starts from the greedy assignment and keeps
// its correct spans; the other spans of a category take, in source order, the
// remaining gold spans of that category found among the candidates. Greedy
// picks overlapping a gold span taken this way are re-selected greedily over
// the positions left free. Spans without a reachable gold span keep their
// greedy choice.
inline Assignment oracle_upper_bound(const LabeledSentence& source,
                                     const std::vector<CategoryScores>& scored,
                                     const LabeledSentence& gold) {
  const std::size_t n = source.spans.size();
  Assignment greedy = select_greedy(source, scored, gold.tokens.size());
  std::vector<std::optional<AssignedSpan>> by_span(n);
  std::vector<std::string> why(n, reason::kExhausted);
  for (auto& a : greedy.assigned) by_span[a.source_index] = a;
  for (auto& u : greedy.unassigned) why[u.source_index] = u.reason;

  auto is_gold = [&](const AssignedSpan& a) {
    return std::any_of(gold.spans.begin(), gold.spans.end(), [&](const Span& g) {
      return g.range() == a.target && g.category == a.category;
    });
  };
  std::vector<bool> displaced(n, false);
  for (const auto& cs : scored) {
    std::vector<const Span*> open;
    for (const Span& g : gold.spans) {
      if (g.category != cs.group.category) continue;
      bool reachable = std::any_of(cs.group.candidates.begin(), cs.group.candidates.end(),
                                   [&](const Candidate& c) {
                                     return std::find(c.occurrences.begin(), c.occurrences.end(),
                                                      g.range()) != c.occurrences.end();
                                   });
      bool taken = std::any_of(by_span.begin(), by_span.end(), [&](const auto& a) {
        return a && a->target == g.range() && a->category == g.category;
      });
      if (reachable && !taken) open.push_back(&g);
    }
    std::size_t k = 0;
    for (std::size_t span : cs.spans) {
      if (k == open.size()) break;
      if (by_span[span] && is_gold(*by_span[span])) continue;
      const Span& g = *open[k++];
      for (std::size_t i = 0; i < n; ++i)
        if (i != span && by_span[i] && by_span[i]->target.overlaps(g.range())) {
          by_span[i].reset();
          displaced[i] = true;
        }
      by_span[span] = AssignedSpan{span, g.range(), g.category, g.surface, std::nullopt,
                                   std::nullopt, "oracle"};
      displaced[span] = false;
    }
  }

  Occupancy mask(gold.tokens.size());
  for (const auto& a : by_span)
    if (a) mask.take(a->target);
  Assignment out;
  out.diagnostics = greedy.diagnostics;
  for (std::size_t i = 0; i < n; ++i) {
    if (by_span[i]) out.assigned.push_back(*by_span[i]);
    else if (displaced[i]) detail::greedy_span(i, source, scored, mask, "greedy", out);
    else out.unassigned.push_back({i, why[i]});
  }
  out.sort_by_source();
  check_assignment(out, n);
  return out;
}

// Translates each source span on its own and takes the most probable
// translation that occurs in the target.
inline Assignment project_via_span_translation(const LabeledSentence& source,
                                               const Tokens& target, Generator& translator,
                                               int n_beams, int max_new_tokens = 64) {
  if (n_beams < 1) throw PreconditionError("n_beams must be positive");
  Assignment out;
  Occupancy mask(target.size());
  for (std::size_t i = 0; i < source.spans.size(); ++i) {
    std::vector<Beam> beams = translator.generate({source.spans[i].surface, n_beams, max_new_tokens});
    if (beams.size() > static_cast<std::size_t>(n_beams)) beams.resize(static_cast<std::size_t>(n_beams));
    std::stable_sort(beams.begin(), beams.end(),
                     [](const Beam& a, const Beam& b) { return a.logprob > b.logprob; });
    bool assigned = false;
    for (const Beam& b : beams) {
      Tokens toks = split_ws(b.text);
      auto occ = leftmost_free(find_occurrences(toks, target), mask);
      if (!occ) continue;
      mask.take(*occ);
      out.assigned.push_back({i, *occ, source.spans[i].category, join(toks), b.logprob,
                              std::nullopt, "span-translation"});
      assigned = true;
      break;
    }
    if (!assigned) out.unassigned.push_back({i, reason::kNoMatch});
  }
  check_assignment(out, source.spans.size());
  return out;
}

}  // namespace tproj
