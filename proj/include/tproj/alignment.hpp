#pragma once

// Projection through externally produced word alignments (Pharaoh "i-j").

#include <algorithm>
#include <charconv>
#include <istream>
#include <optional>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tproj/corpus.hpp"
#include "tproj/error.hpp"
#include "tproj/selection.hpp"

namespace tproj {

struct AlignmentMap {
  std::set<std::pair<std::size_t, std::size_t>> links;  // (source, target)
};

// Parses "0-0 3-3 4-4". Errors carry the 1-based item offset.
inline AlignmentMap parse_pharaoh(std::string_view line) {
  AlignmentMap m;
  Tokens items = split_ws(line);
  for (std::size_t k = 0; k < items.size(); ++k) {
    const std::string& it = items[k];
    auto dash = it.find('-');
    auto num = [&](std::string_view s, std::size_t& v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      return !s.empty() && ec == std::errc() && p == s.data() + s.size();
    };
    std::size_t i = 0, j = 0;
    if (dash == std::string::npos ||
        !num(std::string_view(it).substr(0, dash), i) ||
        !num(std::string_view(it).substr(dash + 1), j))
      throw FormatError(k + 1, "bad alignment item '" + it + "'");
    m.links.emplace(i, j);
  }
  return m;
}

inline std::vector<AlignmentMap> read_pharaoh(std::istream& in) {
  std::vector<AlignmentMap> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      out.push_back(parse_pharaoh(line));
    } catch (const FormatError& e) {
      throw FormatError(lineno, std::string("item ") + e.what());
    }
  }
  return out;
}

struct HullProjection {
  std::size_t source_index = 0;
  std::vector<std::size_t> aligned;  // distinct target indices, ascending
  std::size_t support = 0;           // number of links
  std::optional<Range> hull;
};

// Contiguous hull [min, max+1] of the target indices aligned to the span.
inline HullProjection hull_of(const Span& span, std::size_t index, const AlignmentMap& m) {
  HullProjection h{index, {}, 0, std::nullopt};
  std::set<std::size_t> tgt;
  for (const auto& [s, t] : m.links)
    if (s >= span.start && s < span.end) {
      tgt.insert(t);
      ++h.support;
    }
  h.aligned.assign(tgt.begin(), tgt.end());
  if (!tgt.empty()) h.hull = Range{*tgt.begin(), *tgt.rbegin() + 1};
  return h;
}

// Per span, the hull of its aligned target tokens. Overlapping hulls are
// resolved in favor of the span with more links (earlier span on ties); the
// loser keeps the free sub-range of its hull holding most of its aligned
// tokens (leftmost on ties), or becomes unassigned.
inline Assignment project_via_alignments(const LabeledSentence& source, const AlignmentMap& m,
                                         std::size_t target_len) {
  for (const auto& [s, t] : m.links)
    if (s >= source.tokens.size() || t >= target_len)
      throw PreconditionError("alignment link " + std::to_string(s) + "-" + std::to_string(t) +
                              " out of bounds for pair " + source.id);

  std::vector<HullProjection> hulls;
  for (std::size_t i = 0; i < source.spans.size(); ++i) {
    hulls.push_back(hull_of(source.spans[i], i, m));
  }

  Assignment out;
  for (const auto& h : hulls) {
    if (h.hull && h.hull->length() > 2 * h.aligned.size())
      out.diagnostics.push_back("wide-hull span=" + std::to_string(h.source_index) + " hull=[" +
                                std::to_string(h.hull->start) + "," + std::to_string(h.hull->end) +
                                ") aligned=" + std::to_string(h.aligned.size()));
  }

  std::vector<const HullProjection*> order;
  for (const auto& h : hulls) order.push_back(&h);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return a->support > b->support;
  });

  Occupancy mask(target_len);
  for (const HullProjection* h : order) {
    std::size_t i = h->source_index;
    if (!h->hull) {
      out.unassigned.push_back({i, reason::kNoAlignment});
      continue;
    }
    // Maximal free runs inside the hull.
    std::optional<Range> best;
    std::size_t best_support = 0;
    std::size_t p = h->hull->start;
    while (p < h->hull->end) {
      if (!mask.is_free({p, p + 1})) {
        ++p;
        continue;
      }
      std::size_t q = p;
      while (q < h->hull->end && mask.is_free({q, q + 1})) ++q;
      std::size_t sup = static_cast<std::size_t>(std::count_if(
          h->aligned.begin(), h->aligned.end(), [&](std::size_t t) { return t >= p && t < q; }));
      if (sup > 0 && (!best || sup > best_support)) {
        best = Range{p, q};
        best_support = sup;
      }
      p = q;
    }
    if (!best) {
      out.unassigned.push_back({i, reason::kConflict});
      continue;
    }
    // Trim to the aligned tokens inside the run.
    std::size_t lo = best->end, hi = best->start;
    for (std::size_t t : h->aligned)
      if (t >= best->start && t < best->end) {
        lo = std::min(lo, t);
        hi = std::max(hi, t + 1);
      }
    Range r{lo, hi};
    if (r != *h->hull)
      out.diagnostics.push_back("truncated span=" + std::to_string(i) + " to [" +
                                std::to_string(r.start) + "," + std::to_string(r.end) + ")");
    mask.take(r);
    out.assigned.push_back({i, r, source.spans[i].category, "", static_cast<double>(h->support),
                            std::nullopt, "alignment"});
  }
  out.sort_by_source();
  check_assignment(out, source.spans.size());
  return out;
}

// Fills in the target surface of every assigned span.
inline void fill_surfaces(Assignment& a, const Tokens& target) {
  for (auto& s : a.assigned) s.text = surface_of(target, s.target);
}

}  // namespace tproj
