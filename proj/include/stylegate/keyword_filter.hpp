#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stylegate {

inline constexpr std::size_t kMaxPhraseWords = 5;

struct Caption {
  std::string text;
  std::optional<std::string> language;  // BCP-47
};

/// Lowercase, NFKC, punctuation/symbols to single spaces, whitespace collapsed
/// and trimmed. Invalid UTF-8 sequences are treated as separators.
std::string normalize_caption(std::string_view text);
inline std::string normalize_caption(const Caption& c) { return normalize_caption(c.text); }

enum class DictionaryMode { production, test };

/// Immutable set of normalized keyword entries (1..5 words each).
class KeywordDictionary {
 public:
  KeywordDictionary() = default;

  /// Entries are normalized like captions; duplicates after normalization are
  /// dropped and recorded in warnings(). Throws Error(empty_dictionary) in
  /// production mode when nothing remains, Error(invalid_entry) for phrases
  /// longer than kMaxPhraseWords.
  static KeywordDictionary from_entries(const std::vector<std::string>& raw_entries,
                                        long version = 0, std::string source = {},
                                        DictionaryMode mode = DictionaryMode::test);

  const std::set<std::string>& entries() const { return entries_; }
  long version() const { return version_; }
  const std::string& source() const { return source_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& entry) const { return entries_.count(entry) != 0; }

  /// Phrases (as word lists) starting with `first_word`, longest first.
  const std::vector<std::vector<std::string>>* phrases_starting_with(const std::string& first_word) const;

 private:
  std::set<std::string> entries_;
  std::unordered_map<std::string, std::vector<std::vector<std::string>>> index_;
  long version_ = 0;
  std::string source_;
  std::vector<std::string> warnings_;
};

/// Newline-delimited entries, `#` comments, blank lines ignored, optional
/// `#!version N` header. Throws Error(io_error) when unreadable.
KeywordDictionary load_dictionary(const std::filesystem::path& path,
                                  DictionaryMode mode = DictionaryMode::production);

/// Small synthetic dictionary shipped for tests and the mock profile.
KeywordDictionary builtin_test_dictionary();

struct KeywordHit {
  std::string entry;
  std::size_t start = 0;  // byte offsets into the normalized caption
  std::size_t end = 0;

  friend bool operator==(const KeywordHit&, const KeywordHit&) = default;
};

struct KeywordMatchResult {
  bool matched = false;
  std::vector<KeywordHit> hits;
  std::string normalized;
};

/// Whole-word / whole-phrase matching; reports all non-overlapping hits,
/// scanning left to right and preferring the longest phrase at each word.
KeywordMatchResult match_keywords(const Caption& caption, const KeywordDictionary& dict);

/// Holder that lets a reload swap in a new immutable snapshot while readers
/// keep using the one they already hold.
class DictionaryHandle {
 public:
  explicit DictionaryHandle(KeywordDictionary dict)
      : current_(std::make_shared<const KeywordDictionary>(std::move(dict))) {}

  std::shared_ptr<const KeywordDictionary> get() const {
    std::lock_guard lock(mu_);
    return current_;
  }
  void replace(KeywordDictionary dict) {
    auto next = std::make_shared<const KeywordDictionary>(std::move(dict));
    std::lock_guard lock(mu_);
    current_ = std::move(next);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const KeywordDictionary> current_;
};

}  // namespace stylegate
