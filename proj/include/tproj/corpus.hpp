#pragma once

// Labeled corpora: spans over tokens, CoNLL/JSONL I/O and BIO conversion.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tproj/error.hpp"

namespace tproj {

using Tokens = std::vector<std::string>;

// Half-open token range [start, end).
struct Range {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool overlaps(const Range& o) const { return start < o.end && o.start < end; }
  bool contains(const Range& o) const { return start <= o.start && o.end <= end; }

  friend bool operator==(const Range&, const Range&) = default;
  friend auto operator<=>(const Range&, const Range&) = default;
};

inline Tokens split_ws(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename It>
std::string join(It first, It last, std::string_view sep = " ") {
  std::string out;
  for (It it = first; it != last; ++it) {
    if (it != first) out += sep;
    out += *it;
  }
  return out;
}

inline std::string join(const Tokens& tokens, std::string_view sep = " ") {
  return join(tokens.begin(), tokens.end(), sep);
}

inline std::string surface_of(const Tokens& tokens, Range r) {
  return join(tokens.begin() + static_cast<std::ptrdiff_t>(r.start),
              tokens.begin() + static_cast<std::ptrdiff_t>(r.end));
}

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string category;  // verbalized name, e.g. "Person"
  std::string surface;

  Range range() const { return {start, end}; }
  std::size_t length() const { return end - start; }

  friend bool operator==(const Span&, const Span&) = default;
};

// Builds a span over `tokens`, filling in the surface. Throws on bad bounds.
inline Span make_span(const Tokens& tokens, std::size_t start, std::size_t end,
                      std::string category) {
  if (!(start < end && end <= tokens.size()))
    throw PreconditionError("span [" + std::to_string(start) + "," + std::to_string(end) +
                            ") out of bounds for sentence of length " +
                            std::to_string(tokens.size()));
  return Span{start, end, std::move(category), surface_of(tokens, {start, end})};
}

struct LabeledSentence {
  std::string id;
  Tokens tokens;
  std::vector<Span> spans;  // sorted by start, pairwise disjoint

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

// Checks bounds, surfaces, ordering and disjointness of the spans.
inline void validate(const LabeledSentence& s) {
  for (std::size_t i = 0; i < s.spans.size(); ++i) {
    const Span& sp = s.spans[i];
    if (!(sp.start < sp.end && sp.end <= s.tokens.size()))
      throw PreconditionError("sentence " + s.id + ": span " + std::to_string(i) +
                              " out of bounds");
    if (sp.surface != surface_of(s.tokens, sp.range()))
      throw PreconditionError("sentence " + s.id + ": span " + std::to_string(i) +
                              " surface does not match tokens");
    if (i > 0 && s.spans[i - 1].end > sp.start)
      throw PreconditionError("sentence " + s.id + ": spans unsorted or overlapping at " +
                              std::to_string(i));
  }
}

struct ParallelPair {
  std::string id;
  LabeledSentence source;
  Tokens target_tokens;
};

inline ParallelPair make_parallel_pair(LabeledSentence source, Tokens target) {
  if (target.empty())
    throw PreconditionError("pair " + source.id + ": empty target sentence");
  validate(source);
  std::string id = source.id;
  return ParallelPair{std::move(id), std::move(source), std::move(target)};
}

// Raw tag -> verbalized category name ("PER" -> "Person"). Injective.
class CategoryMap {
 public:
  CategoryMap() = default;

  static CategoryMap defaults() {
    CategoryMap m;
    m.add("PER", "Person");
    m.add("LOC", "Location");
    m.add("ORG", "Organization");
    m.add("MISC", "Miscellaneous");
    return m;
  }

  // Parses {"PER": "Person", ...}.
  static CategoryMap from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("category map must be a JSON object");
    CategoryMap m;
    for (const auto& [raw, name] : j.items()) {
      if (!name.is_string())
        throw ConfigError("category map: value for '" + raw + "' is not a string");
      m.add(raw, name.get<std::string>());
    }
    return m;
  }

  static CategoryMap from_json_stream(std::istream& in) {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("category map: ") + e.what());
    }
    return from_json(j);
  }

  void add(const std::string& raw, const std::string& name) {
    if (raw.empty() || name.empty()) throw ConfigError("category map: empty entry");
    if (name.find_first_of("<>") != std::string::npos)
      throw ConfigError("category map: name '" + name + "' contains angle brackets");
    auto it = to_name_.find(raw);
    if (it != to_name_.end()) {
      if (it->second == name) return;
      throw ConfigError("category map: tag '" + raw + "' mapped twice");
    }
    if (to_raw_.count(name))
      throw ConfigError("category map: '" + name + "' verbalizes both '" + to_raw_[name] +
                        "' and '" + raw + "'");
    to_name_[raw] = name;
    to_raw_[name] = raw;
  }

  // Adds raw -> raw when `raw` is neither a known tag nor a known name.
  void add_identity_if_unknown(const std::string& raw) {
    if (to_name_.count(raw) || to_raw_.count(raw)) return;
    add(raw, raw);
  }

  // Unknown tags pass through unchanged.
  std::string verbalize(const std::string& raw) const {
    auto it = to_name_.find(raw);
    return it == to_name_.end() ? raw : it->second;
  }

  std::string raw_tag(const std::string& name) const {
    auto it = to_raw_.find(name);
    return it == to_raw_.end() ? name : it->second;
  }

  bool has_name(const std::string& name) const { return to_raw_.count(name) > 0; }
  const std::map<std::string, std::string>& entries() const { return to_name_; }
  bool empty() const { return to_name_.empty(); }

 private:
  std::map<std::string, std::string> to_name_;
  std::map<std::string, std::string> to_raw_;
};

// ---------------------------------------------------------------------------
// BIO

struct BioTag {
  char prefix = 'O';  // 'O', 'B' or 'I'
  std::string category;
};

inline std::optional<BioTag> parse_bio_tag(std::string_view tag) {
  if (tag == "O") return BioTag{'O', {}};
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-')
    return BioTag{tag[0], std::string(tag.substr(2))};
  return std::nullopt;
}

// Converts a tag sequence into spans. An I- tag that does not continue a run
// of the same category opens a new span (conlleval convention).
inline std::vector<Span> spans_from_tags(const Tokens& tokens, const std::vector<BioTag>& tags) {
  std::vector<Span> spans;
  std::optional<std::size_t> open;
  std::string open_cat;
  auto close = [&](std::size_t end) {
    if (open) spans.push_back(make_span(tokens, *open, end, open_cat));
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const BioTag& t = tags[i];
    if (t.prefix == 'O') {
      close(i);
    } else if (t.prefix == 'B' || !open || open_cat != t.category) {
      close(i);
      open = i;
      open_cat = t.category;
    }
  }
  close(tags.size());
  return spans;
}

inline std::vector<std::string> spans_to_bio(const LabeledSentence& s) {
  std::vector<std::string> tags(s.tokens.size(), "O");
  for (const Span& sp : s.spans) {
    tags[sp.start] = "B-" + sp.category;
    for (std::size_t i = sp.start + 1; i < sp.end; ++i) tags[i] = "I-" + sp.category;
  }
  return tags;
}

// ---------------------------------------------------------------------------
// CoNLL

struct ConllOptions {
  // When false, single-column lines are accepted and read as "O".
  bool require_tags = true;
};

struct ConllStats {
  std::size_t docstart_lines = 0;
};

// Reads whitespace-column CoNLL: first column token, last column BIO tag,
// blank line between sentences. -DOCSTART- lines are skipped. Tag categories
// are verbalized through `map`.
inline std::vector<LabeledSentence> parse_conll(std::istream& in, const CategoryMap& map,
                                                ConllOptions opts = {},
                                                ConllStats* stats = nullptr) {
  std::vector<LabeledSentence> out;
  Tokens tokens;
  std::vector<BioTag> tags;
  auto flush = [&] {
    if (tokens.empty()) return;
    LabeledSentence s;
    s.id = std::to_string(out.size());
    s.spans = spans_from_tags(tokens, tags);
    s.tokens = std::move(tokens);
    out.push_back(std::move(s));
    tokens.clear();
    tags.clear();
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Tokens cols = split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols.front() == "-DOCSTART-") {
      flush();
      if (stats) ++stats->docstart_lines;
      continue;
    }
    BioTag tag;
    if (cols.size() == 1) {
      if (opts.require_tags) throw FormatError(lineno, "missing tag column");
    } else {
      auto parsed = parse_bio_tag(cols.back());
      if (!parsed) throw FormatError(lineno, "not a BIO tag: '" + cols.back() + "'");
      tag = std::move(*parsed);
      if (tag.prefix != 'O') tag.category = map.verbalize(tag.category);
    }
    tokens.push_back(std::move(cols.front()));
    tags.push_back(std::move(tag));
  }
  flush();
  return out;
}

// Writes "token tag" lines with raw tags, one blank line between sentences.
inline void write_conll(std::ostream& out, const std::vector<LabeledSentence>& sentences,
                        const CategoryMap& map) {
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    if (k > 0) out << '\n';
    const LabeledSentence& s = sentences[k];
    std::vector<std::string> tags(s.tokens.size(), "O");
    for (const Span& sp : s.spans) {
      const std::string raw = map.raw_tag(sp.category);
      tags[sp.start] = "B-" + raw;
      for (std::size_t i = sp.start + 1; i < sp.end; ++i) tags[i] = "I-" + raw;
    }
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << ' ' << tags[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSONL

struct TokenLine {
  std::optional<std::string> id;
  Tokens tokens;
};

// One JSON object per line with a "tokens" array and an optional "id".
// Tokens are taken verbatim.
inline std::vector<TokenLine> parse_jsonl_tokens(std::istream& in) {
  std::vector<TokenLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_ws(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array())
      throw FormatError(lineno, "object with a \"tokens\" array expected");
    TokenLine tl;
    for (const auto& t : j["tokens"]) {
      if (!t.is_string()) throw FormatError(lineno, "non-string token");
      tl.tokens.push_back(t.get<std::string>());
    }
    if (j.contains("id")) {
      const auto& id = j["id"];
      tl.id = id.is_string() ? id.get<std::string>() : id.dump();
    }
    out.push_back(std::move(tl));
  }
  return out;
}

enum class TargetFormat { Auto, Conll, Jsonl };

inline TargetFormat sniff_format(std::istream& in) {
  std::streampos pos = in.tellg();
  TargetFormat fmt = TargetFormat::Conll;
  char c;
  while (in.get(c)) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    fmt = c == '{' ? TargetFormat::Jsonl : TargetFormat::Conll;
    break;
  }
  in.clear();
  in.seekg(pos);
  return fmt;
}

// Zips a labeled source corpus with its target sentences. Target tags, if
// any, are ignored.
inline std::vector<ParallelPair> load_parallel(std::istream& source, std::istream& target,
                                               const CategoryMap& map,
                                               TargetFormat fmt = TargetFormat::Auto,
                                               ConllStats* stats = nullptr) {
  std::vector<LabeledSentence> src = parse_conll(source, map, {}, stats);
  if (fmt == TargetFormat::Auto) fmt = sniff_format(target);
  std::vector<Tokens> tgt;
  if (fmt == TargetFormat::Jsonl) {
    for (auto& tl : parse_jsonl_tokens(target)) tgt.push_back(std::move(tl.tokens));
  } else {
    for (auto& s : parse_conll(target, map, {.require_tags = false}, stats))
      tgt.push_back(std::move(s.tokens));
  }
  if (src.size() != tgt.size())
    throw Error("sentence count mismatch: source=" + std::to_string(src.size()) +
                " target=" + std::to_string(tgt.size()));
  std::vector<ParallelPair> pairs;
  pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) pairs.push_back(make_parallel_pair(std::move(src[i]), std::move(tgt[i])));
  return pairs;
}

}  // namespace tproj
