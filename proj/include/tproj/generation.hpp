#pragma once

// Projection candidates: beams from a text-to-text generator or every n-gram
// of the target sentence, filtered to contiguous target subsequences and
// grouped by category.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tproj/corpus.hpp"
#include "tproj/error.hpp"
#include "tproj/prompting.hpp"

namespace tproj {

struct Beam {
  std::string text;
  double logprob = 0.0;
};

struct GenerateRequest {
  std::string prompt;
  int n_beams = 100;
  int max_new_tokens = 64;
};

// Produces beams ordered by descending logprob. Implementations must be
// callable from several threads at once.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::vector<Beam> generate(const GenerateRequest& req) = 0;
  virtual std::string identity() const = 0;
};

struct ParsedBeam {
  std::size_t beam_index = 0;  // rank in the generator's response
  double logprob = 0.0;
  std::vector<SlotOutput> slots;
};

struct GenerationResult {
  std::vector<ParsedBeam> beams;  // well-formed beams, response order
  std::size_t returned = 0;
  std::size_t malformed = 0;
};

// Parses raw beams against the prompt, dropping malformed ones.
inline GenerationResult parse_beams(const std::vector<Beam>& raw, const TagPrompt& prompt) {
  GenerationResult out;
  out.returned = raw.size();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto slots = parse_beam(raw[i].text, prompt, raw[i].logprob);
    if (!slots) {
      ++out.malformed;
      continue;
    }
    out.beams.push_back({i, raw[i].logprob, std::move(*slots)});
  }
  return out;
}

inline GenerationResult generate_candidates(const TagPrompt& prompt, Generator& generator,
                                            int n_beams, int max_new_tokens = 64) {
  if (n_beams < 1) throw PreconditionError("n_beams must be positive");
  if (prompt.slots.empty()) return {};
  std::vector<Beam> raw = generator.generate({prompt.text, n_beams, max_new_tokens});
  if (raw.size() > static_cast<std::size_t>(n_beams)) raw.resize(static_cast<std::size_t>(n_beams));
  return parse_beams(raw, prompt);
}

// ---------------------------------------------------------------------------

// Logprob carried by candidates that never went through a beam.
inline constexpr double kUnscoredLogprob = 0.0;

struct Candidate {
  std::string text;
  std::string category;
  double best_beam_logprob = kUnscoredLogprob;
  std::vector<Range> occurrences;  // ascending
};

struct CandidateGroup {
  std::string category;
  std::vector<Candidate> candidates;
};

inline std::string ascii_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<Range> find_exact(const Tokens& needle, const Tokens& hay) {
  std::vector<Range> out;
  if (needle.empty() || needle.size() > hay.size()) return out;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i)))
      out.push_back({i, i + needle.size()});
  }
  return out;
}

// Contiguous token matches of `needle` in `hay`; one case-insensitive pass
// only when there is no exact match.
inline std::vector<Range> find_occurrences(const Tokens& needle, const Tokens& hay) {
  std::vector<Range> out = find_exact(needle, hay);
  if (!out.empty() || needle.empty()) return out;
  Tokens ln, lh;
  for (const auto& t : needle) ln.push_back(ascii_lower(t));
  for (const auto& t : hay) lh.push_back(ascii_lower(t));
  return find_exact(ln, lh);
}

struct RawCandidate {
  std::string text;
  std::string category;
  double logprob = kUnscoredLogprob;
};

// Drops empty and non-matching texts, merges duplicates (max logprob) and
// groups by category. Groups and candidates keep first-seen order.
inline std::vector<CandidateGroup> match_and_filter(const std::vector<RawCandidate>& raw,
                                                    const Tokens& target) {
  std::vector<CandidateGroup> groups;
  std::map<std::string, std::size_t> group_of;
  std::vector<std::unordered_map<std::string, std::size_t>> index;
  std::unordered_map<std::string, std::vector<Range>> occ_cache;

  for (const RawCandidate& rc : raw) {
    Tokens toks = split_ws(rc.text);
    if (toks.empty()) continue;
    std::string text = join(toks);
    auto oc = occ_cache.find(text);
    if (oc == occ_cache.end()) oc = occ_cache.emplace(text, find_occurrences(toks, target)).first;
    if (oc->second.empty()) continue;

    auto [git, inserted] = group_of.try_emplace(rc.category, groups.size());
    if (inserted) {
      groups.push_back({rc.category, {}});
      index.emplace_back();
    }
    CandidateGroup& g = groups[git->second];
    auto& idx = index[git->second];
    auto it = idx.find(text);
    if (it == idx.end()) {
      idx.emplace(text, g.candidates.size());
      g.candidates.push_back({text, rc.category, rc.logprob, oc->second});
    } else {
      Candidate& c = g.candidates[it->second];
      c.best_beam_logprob = std::max(c.best_beam_logprob, rc.logprob);
    }
  }
  return groups;
}

// Slot texts of every parsed beam, tagged with the slot's category.
inline std::vector<RawCandidate> raw_candidates(const GenerationResult& gen,
                                                const TagPrompt& prompt) {
  std::vector<RawCandidate> out;
  for (const ParsedBeam& b : gen.beams)
    for (const SlotOutput& s : b.slots)
      out.push_back({s.candidate_text, prompt.slots.at(s.slot).category, b.logprob});
  return out;
}

inline std::vector<CandidateGroup> match_and_filter(const GenerationResult& gen,
                                                    const TagPrompt& prompt,
                                                    const Tokens& target) {
  return match_and_filter(raw_candidates(gen, prompt), target);
}

// Every contiguous token subsequence as a candidate of every category.
inline std::vector<CandidateGroup> ngram_candidates(const Tokens& target,
                                                    const std::vector<std::string>& categories) {
  if (target.empty()) throw PreconditionError("ngram_candidates: empty target sentence");
  std::vector<Candidate> base;
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t len = 1; len <= target.size(); ++len) {
    for (std::size_t i = 0; i + len <= target.size(); ++i) {
      std::string text = surface_of(target, {i, i + len});
      auto [it, inserted] = idx.try_emplace(text, base.size());
      if (inserted) base.push_back({std::move(text), {}, kUnscoredLogprob, {}});
      base[it->second].occurrences.push_back({i, i + len});
    }
  }
  std::vector<CandidateGroup> groups;
  for (const std::string& cat : categories) {
    if (std::any_of(groups.begin(), groups.end(),
                    [&](const CandidateGroup& g) { return g.category == cat; }))
      continue;
    CandidateGroup g{cat, base};
    for (Candidate& c : g.candidates) c.category = cat;
    groups.push_back(std::move(g));
  }
  return groups;
}

// Distinct span categories of a sentence in first-seen order.
inline std::vector<std::string> categories_of(const LabeledSentence& s) {
  std::vector<std::string> out;
  for (const Span& sp : s.spans)
    if (std::find(out.begin(), out.end(), sp.category) == out.end()) out.push_back(sp.category);
  return out;
}

}  // namespace tproj
