#include "stylegate/prompt_weight.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "stylegate/error.hpp"

namespace stylegate {

namespace {

bool is_escapable(char c) { return c == '(' || c == ')' || c == ':' || c == '\\'; }

class PromptParser {
 public:
  explicit PromptParser(std::string_view raw) : src_(raw) {}

  WeightedPrompt run() {
    WeightedPrompt out;
    parse_sequence(out.segments, 0);
    return out;
  }

 private:
  // Consumes items until an unescaped ')' or ':' (left unconsumed) or the end.
  void parse_sequence(std::vector<PromptSegment>& out, int depth) {
    std::string text;
    auto flush = [&] {
      if (!text.empty()) out.push_back({std::move(text), 1.0});
      text.clear();
    };
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\\') {
        if (pos_ + 1 < src_.size() && is_escapable(src_[pos_ + 1])) {
          text.push_back(src_[pos_ + 1]);
          pos_ += 2;
        } else {
          text.push_back(c);
          ++pos_;
        }
      } else if (c == '(') {
        flush();
        parse_group(out, depth);
      } else if (c == ')') {
        if (depth == 0) throw PromptParseError(Errc::unbalanced_parenthesis, pos_, "unmatched ')'");
        flush();
        return;
      } else if (c == ':') {
        if (depth == 0) {
          throw PromptParseError(Errc::malformed_weight, pos_, "weight outside of parentheses");
        }
        flush();
        return;
      } else {
        text.push_back(c);
        ++pos_;
      }
    }
    flush();
  }

  void parse_group(std::vector<PromptSegment>& out, int depth) {
    const std::size_t open = pos_++;
    const std::size_t first = out.size();
    parse_sequence(out, depth + 1);
    if (pos_ >= src_.size()) throw PromptParseError(Errc::unbalanced_parenthesis, open, "unclosed '('");

    double multiplier = kBareEmphasis;
    if (src_[pos_] == ':') {
      const std::size_t colon = pos_;
      const std::size_t close = src_.find(')', colon + 1);
      if (close == std::string_view::npos) {
        throw PromptParseError(Errc::unbalanced_parenthesis, open, "unclosed '('");
      }
      multiplier = parse_weight(src_.substr(colon + 1, close - colon - 1), colon + 1);
      pos_ = close;
    }
    if (out.size() == first) throw PromptParseError(Errc::empty_segment, open, "empty group");
    for (auto it = out.begin() + static_cast<std::ptrdiff_t>(first); it != out.end(); ++it) {
      it->weight *= multiplier;
    }
    ++pos_;  // ')'
  }

  static double parse_weight(std::string_view s, std::size_t at) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(value)) {
      throw PromptParseError(Errc::malformed_weight, at, "weight '" + std::string(s) + "' is not a number");
    }
    if (value <= 0.0) {
      throw PromptParseError(Errc::malformed_weight, at, "weight must be positive");
    }
    return value;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

// Round a plain decimal string ("123.456789") to `places` fractional digits,
// ties to even.
std::string round_decimal_half_even(const std::string& fixed, std::size_t places) {
  const auto dot = fixed.find('.');
  std::string digits = fixed.substr(0, dot) + fixed.substr(dot + 1);
  const std::size_t int_len = dot;
  const std::size_t keep = int_len + places;
  const std::string dropped = digits.substr(keep);
  digits.resize(keep);

  bool round_up = false;
  if (dropped[0] > '5') {
    round_up = true;
  } else if (dropped[0] == '5') {
    const bool exact_tie = std::all_of(dropped.begin() + 1, dropped.end(), [](char c) { return c == '0'; });
    round_up = !exact_tie || ((digits.back() - '0') % 2 == 1);
  }
  std::size_t new_int_len = int_len;
  if (round_up) {
    std::size_t i = digits.size();
    while (i > 0) {
      --i;
      if (digits[i] == '9') {
        digits[i] = '0';
      } else {
        ++digits[i];
        break;
      }
      if (i == 0) {
        digits.insert(digits.begin(), '1');
        ++new_int_len;
      }
    }
  }
  return digits.substr(0, new_int_len) + "." + digits.substr(new_int_len);
}

std::string strip_fraction(std::string s) {
  if (s.find('.') == std::string::npos) return s;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

}  // namespace

WeightedPrompt parse_prompt(std::string_view raw) { return PromptParser(raw).run(); }

std::string format_weight(double weight) {
  char buf[512];
  const auto res = std::to_chars(buf, buf + sizeof buf, weight, std::chars_format::fixed);
  std::string shortest(buf, res.ptr);
  const auto dot = shortest.find('.');
  if (dot == std::string::npos || shortest.size() - dot - 1 <= 4) return strip_fraction(shortest);

  std::string rounded = strip_fraction(round_decimal_half_even(shortest, 4));
  double back = 0.0;
  std::from_chars(rounded.data(), rounded.data() + rounded.size(), back);
  if (std::abs(back - weight) <= 1e-9) return rounded;
  return shortest;
}

std::string escape_prompt_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (is_escapable(c)) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string serialize_prompt(const WeightedPrompt& prompt) {
  std::string out;
  bool previous_bare = false;
  for (const auto& seg : prompt.segments) {
    const std::string w = format_weight(seg.weight);
    const std::string text = escape_prompt_text(seg.text);
    if (w == "1" && !previous_bare) {
      out += text;
      previous_bare = true;
    } else {
      out += "(" + text + ":" + w + ")";
      previous_bare = false;
    }
  }
  return out;
}

bool approx_equal(const WeightedPrompt& a, const WeightedPrompt& b, double tol) {
  if (a.segments.size() != b.segments.size()) return false;
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    if (a.segments[i].text != b.segments[i].text) return false;
    if (std::abs(a.segments[i].weight - b.segments[i].weight) > tol) return false;
  }
  return true;
}

std::vector<SkinToneTag> canonical_skin_tone_tags() {
  std::vector<SkinToneTag> tags;
  for (auto name : kSkinToneTagNames) tags.push_back({std::string(name)});
  return tags;
}

bool is_canonical_tag(std::string_view name) {
  return std::find(kSkinToneTagNames.begin(), kSkinToneTagNames.end(), name) != kSkinToneTagNames.end();
}

std::vector<std::pair<SkinToneTag, WeightedPrompt>> skin_tone_prompt_set(const WeightedPrompt& base,
                                                                         double weight) {
  if (!(weight > 0.0) || !std::isfinite(weight)) {
    throw Error(Errc::malformed_weight, "skin-tone weight must be positive");
  }
  std::vector<std::pair<SkinToneTag, WeightedPrompt>> out;
  for (auto& tag : canonical_skin_tone_tags()) {
    WeightedPrompt p;
    p.segments.reserve(base.segments.size() + 1);
    p.segments.push_back({tag.text(), weight});
    p.segments.insert(p.segments.end(), base.segments.begin(), base.segments.end());
    out.emplace_back(std::move(tag), std::move(p));
  }
  return out;
}

}  // namespace stylegate
