#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stylegate {

/// Multiplier applied per level of bare `( ... )` emphasis.
inline constexpr double kBareEmphasis = 1.1;

struct PromptSegment {
  std::string text;  // unescaped literal text
  double weight = 1.0;

  friend bool operator==(const PromptSegment&, const PromptSegment&) = default;
};

struct WeightedPrompt {
  std::vector<PromptSegment> segments;

  bool empty() const { return segments.empty(); }
  friend bool operator==(const WeightedPrompt&, const WeightedPrompt&) = default;
};

/// Same texts and weights within `tol`.
bool approx_equal(const WeightedPrompt& a, const WeightedPrompt& b, double tol = 1e-9);

/// Grammar:
///   prompt  := item*
///   item    := text | '(' item+ [':' NUMBER] ')'
///   text    := (char | '\(' | '\)' | '\:' | '\\')+
/// `(x:w)` scales everything inside by w, bare parentheses by 1.1.
/// Throws PromptParseError on unbalanced parentheses, bad weights or empty groups.
WeightedPrompt parse_prompt(std::string_view raw);

/// Renders weights != 1 as `(text:w)`. A unit-weight segment directly following
/// another bare unit-weight segment is written `(text:1)` so it stays separate.
std::string serialize_prompt(const WeightedPrompt& prompt);

/// Minimal decimal form, at most 4 fractional digits (half-even) unless that
/// loses more than 1e-9, in which case the shortest exact form is used.
std::string format_weight(double weight);

/// Escapes `(`, `)`, `:` and `\` for embedding in a prompt.
std::string escape_prompt_text(std::string_view text);

struct SkinToneTag {
  std::string name;
  std::string suffix = " skin";

  std::string text() const { return name + suffix; }
  friend bool operator==(const SkinToneTag&, const SkinToneTag&) = default;
};

inline constexpr std::array<std::string_view, 7> kSkinToneTagNames = {
    "deepest black", "black", "dark brown", "brown", "light brown", "white", "deepest white"};

/// Default emphasis for augmentation tags; not a published value.
inline constexpr double kDefaultTagWeight = 1.2;

std::vector<SkinToneTag> canonical_skin_tone_tags();
bool is_canonical_tag(std::string_view name);

/// One prompt per canonical tag, in canonical order, each being `base` with a
/// leading `(tag skin:weight)` segment.
std::vector<std::pair<SkinToneTag, WeightedPrompt>> skin_tone_prompt_set(
    const WeightedPrompt& base, double weight = kDefaultTagWeight);

}  // namespace stylegate
