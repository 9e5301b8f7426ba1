#pragma once

// HTML-tag style generation prompts and parsing of the tagged beams.
//
//   prompt:  "Obama fue a Nueva York <Person>None</Person> <Location>None</Location>"
//   beam:    "<Person>Obama</Person> <Location>Nueva York</Location>"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tproj/corpus.hpp"
#include "tproj/error.hpp"

namespace tproj {

struct PromptSlot {
  std::size_t index = 0;
  std::string category;
  std::size_t source_span = 0;
};

struct TagPrompt {
  std::string text;
  std::vector<PromptSlot> slots;
};

struct SlotOutput {
  std::size_t slot = 0;
  std::string candidate_text;
  double beam_logprob = 0.0;

  friend bool operator==(const SlotOutput&, const SlotOutput&) = default;
};

inline std::string tag_block(std::string_view category, std::string_view content) {
  std::string out;
  out.reserve(2 * category.size() + content.size() + 5);
  out += '<';
  out += category;
  out += '>';
  out += content;
  out += "</";
  out += category;
  out += '>';
  return out;
}

// Target sentence followed by one "<C>None</C>" block per source span, in
// source order, single-space separated.
inline TagPrompt build_prompt(const ParallelPair& pair, const CategoryMap& map) {
  TagPrompt p;
  p.text = join(pair.target_tokens);
  for (std::size_t i = 0; i < pair.source.spans.size(); ++i) {
    const std::string& cat = pair.source.spans[i].category;
    if (!map.has_name(cat))
      throw ConfigError("pair " + pair.id + ": category '" + cat + "' is not in the category map");
    if (cat.find_first_of("<>") != std::string::npos)
      throw ConfigError("category '" + cat + "' contains angle brackets");
    p.text += ' ';
    p.text += tag_block(cat, "None");
    p.slots.push_back({i, cat, i});
  }
  return p;
}

struct TagPair {
  std::string category;
  std::string content;
};

// Splits a beam into its top-level <C>...</C> pairs. Returns nullopt when
// tags nest, cross, are unclosed or when a closing tag has no opener. Text
// outside tag pairs is ignored.
inline std::optional<std::vector<TagPair>> scan_tag_pairs(std::string_view text) {
  std::vector<TagPair> pairs;
  std::optional<std::string> open;
  std::size_t content_begin = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '<') {
      if (text[i] == '>') return std::nullopt;
      ++i;
      continue;
    }
    std::size_t close = text.find_first_of("<>", i + 1);
    if (close == std::string_view::npos || text[close] != '>') return std::nullopt;
    std::string_view name = text.substr(i + 1, close - i - 1);
    bool closing = !name.empty() && name.front() == '/';
    if (closing) name.remove_prefix(1);
    if (name.empty()) return std::nullopt;
    if (closing) {
      if (!open || *open != name) return std::nullopt;
      std::string_view body = text.substr(content_begin, i - content_begin);
      pairs.push_back({std::move(*open), join(split_ws(body))});
      open.reset();
    } else {
      if (open) return std::nullopt;
      open = std::string(name);
      content_begin = close + 1;
    }
    i = close + 1;
  }
  if (open) return std::nullopt;
  return pairs;
}

// Maps a decoded beam onto the prompt's slots. The i-th tag pair fills slot i
// while categories agree; a shorter or diverging beam fills only the leading
// slots. nullopt marks a malformed beam.
inline std::optional<std::vector<SlotOutput>> parse_beam(std::string_view output,
                                                         const TagPrompt& prompt,
                                                         double beam_logprob = 0.0) {
  auto pairs = scan_tag_pairs(output);
  if (!pairs) return std::nullopt;
  std::vector<SlotOutput> slots;
  for (std::size_t i = 0; i < prompt.slots.size() && i < pairs->size(); ++i) {
    if ((*pairs)[i].category != prompt.slots[i].category) break;
    slots.push_back({prompt.slots[i].index, std::move((*pairs)[i].content), beam_logprob});
  }
  return slots;
}

// Inverse of parse_beam for well-formed outputs.
inline std::string serialize_slots(const std::vector<SlotOutput>& slots, const TagPrompt& prompt) {
  std::string out;
  for (const SlotOutput& s : slots) {
    if (!out.empty()) out += ' ';
    out += tag_block(prompt.slots.at(s.slot).category, s.candidate_text);
  }
  return out;
}

}  // namespace tproj
