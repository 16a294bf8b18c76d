#include "stylegate/keyword_filter.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cctype>
#include <sstream>

#include "stylegate/error.hpp"
#include "stylegate/util.hpp"

namespace stylegate {

namespace {

bool is_word_char(UChar32 cp) {
  return u_isalnum(cp) || (U_GET_GC_MASK(cp) & U_GC_M_MASK) != 0;
}

std::vector<std::string> split_words(const std::string& normalized) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < normalized.size()) {
    const auto j = normalized.find(' ', i);
    const auto end = j == std::string::npos ? normalized.size() : j;
    words.push_back(normalized.substr(i, end - i));
    i = end + 1;
  }
  return words;
}

struct Token {
  std::string_view word;
  std::size_t start, end;
};

std::vector<Token> tokenize(const std::string& normalized) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < normalized.size()) {
    const auto j = normalized.find(' ', i);
    const auto end = j == std::string::npos ? normalized.size() : j;
    tokens.push_back({std::string_view(normalized).substr(i, end - i), i, end});
    i = end + 1;
  }
  return tokens;
}

}  // namespace

std::string normalize_caption(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) throw Error(Errc::io_error, "ICU NFKC normalizer unavailable");

  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfkc->normalize(u, status);
  if (U_FAILURE(status)) throw Error(Errc::io_error, "ICU normalization failed");
  normalized.toLower(icu::Locale::getRoot());

  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 cp = normalized.char32At(i);
    i += U16_LENGTH(cp);
    if (is_word_char(cp)) {
      if (pending_space && !out.isEmpty()) out.append(static_cast<UChar>(' '));
      pending_space = false;
      out.append(cp);
    } else {
      pending_space = true;
    }
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

KeywordDictionary KeywordDictionary::from_entries(const std::vector<std::string>& raw_entries, long version,
                                                  std::string source, DictionaryMode mode) {
  KeywordDictionary dict;
  dict.version_ = version;
  dict.source_ = std::move(source);
  for (const auto& raw : raw_entries) {
    std::string entry = normalize_caption(raw);
    if (entry.empty()) {
      dict.warnings_.push_back("entry '" + raw + "' is empty after normalization, skipped");
      continue;
    }
    const auto words = split_words(entry);
    if (words.size() > kMaxPhraseWords) {
      throw Error(Errc::invalid_entry, "entry '" + raw + "' has more than " +
                                           std::to_string(kMaxPhraseWords) + " words");
    }
    if (!dict.entries_.insert(entry).second) {
      dict.warnings_.push_back("DuplicateAfterNormalization: '" + raw + "'");
      continue;
    }
    dict.index_[words.front()].push_back(words);
  }
  for (auto& [first, phrases] : dict.index_) {
    std::sort(phrases.begin(), phrases.end(), [](const auto& a, const auto& b) {
      return a.size() != b.size() ? a.size() > b.size() : a < b;
    });
  }
  if (dict.entries_.empty() && mode == DictionaryMode::production) {
    throw Error(Errc::empty_dictionary, "keyword dictionary has no entries");
  }
  return dict;
}

const std::vector<std::vector<std::string>>* KeywordDictionary::phrases_starting_with(
    const std::string& first_word) const {
  const auto it = index_.find(first_word);
  return it == index_.end() ? nullptr : &it->second;
}

KeywordDictionary load_dictionary(const std::filesystem::path& path, DictionaryMode mode) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  long version = 0;
  std::vector<std::string> entries;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("#!version", 0) == 0) {
      try {
        version = std::stol(line.substr(9));
      } catch (const std::exception&) {
        throw Error(Errc::invalid_entry, "bad version header '" + line + "'");
      }
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    entries.push_back(line);
  }
  return KeywordDictionary::from_entries(entries, version, path.string(), mode);
}

KeywordDictionary builtin_test_dictionary() {
  return KeywordDictionary::from_entries({"naked", "nude", "nudity", "topless", "explicit", "lingerie",
                                          "bare breasts", "no clothes", "without clothes"},
                                         1, "builtin synthetic test dictionary", DictionaryMode::production);
}

KeywordMatchResult match_keywords(const Caption& caption, const KeywordDictionary& dict) {
  KeywordMatchResult result;
  result.normalized = normalize_caption(caption);
  const auto tokens = tokenize(result.normalized);
  std::string key;
  for (std::size_t i = 0; i < tokens.size();) {
    key.assign(tokens[i].word);
    const auto* phrases = dict.phrases_starting_with(key);
    std::size_t consumed = 0;
    if (phrases != nullptr) {
      for (const auto& phrase : *phrases) {
        if (i + phrase.size() > tokens.size()) continue;
        bool ok = true;
        for (std::size_t k = 1; k < phrase.size() && ok; ++k) ok = tokens[i + k].word == phrase[k];
        if (!ok) continue;
        const auto start = tokens[i].start;
        const auto end = tokens[i + phrase.size() - 1].end;
        result.hits.push_back({result.normalized.substr(start, end - start), start, end});
        consumed = phrase.size();
        break;
      }
    }
    i += consumed == 0 ? 1 : consumed;
  }
  result.matched = !result.hits.empty();
  return result;
}

}  // namespace stylegate
