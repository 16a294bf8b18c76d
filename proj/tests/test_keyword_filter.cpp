#include "doctest.h"
#include "stylegate/error.hpp"
#include "stylegate/keyword_filter.hpp"
#include "stylegate/util.hpp"
#include "support.hpp"

using namespace stylegate;

namespace {
bool flagged(const std::string& caption, const KeywordDictionary& d) { return match_keywords({caption, {}}, d).matched; }
}  // namespace

TEST_CASE("normalization folds case, width and punctuation") {
  CHECK(normalize_caption("  A  NUDE, figure!! ") == "a nude figure");
  CHECK(normalize_caption("ＮＵＤＥ") == "nude");  // fullwidth
  CHECK(normalize_caption("t-shirt/jeans") == "t shirt jeans");
  CHECK(normalize_caption("Ünïcode Façade") == "ünïcode façade");
}

TEST_CASE("whole-word matching only") {
  const auto d = KeywordDictionary::from_entries({"nude", "bare breasts"}, 1);
  CHECK(flagged("a nude woman", d));
  CHECK_FALSE(flagged("a denude process", d));
  CHECK_FALSE(flagged("nudes", d));
  CHECK(flagged("Bare   Breasts.", d));
  CHECK_FALSE(flagged("bare feet and breasts", d));
}

TEST_CASE("hits are leftmost-longest and non-overlapping with byte offsets") {
  const auto d = KeywordDictionary::from_entries({"no", "no clothes", "clothes"}, 1);
  const auto r = match_keywords({"Wearing NO clothes, no hat", {}}, d);
  REQUIRE(r.hits.size() == 2);
  CHECK(r.hits[0].entry == "no clothes");
  CHECK(r.normalized.substr(r.hits[0].start, r.hits[0].end - r.hits[0].start) == "no clothes");
  CHECK(r.hits[1].entry == "no");
  CHECK(r.normalized.substr(r.hits[1].start, r.hits[1].end - r.hits[1].start) == "no");
}

TEST_CASE("dictionary loading and validation") {
  const auto dir = testsupport::fresh_temp_dir("dict");
  write_text_file(dir / "d.txt", "#!version 7\n# comment\nNude\n\nnude\n  topless \n!!!\n");
  const auto d = load_dictionary(dir / "d.txt");
  CHECK(d.version() == 7);
  CHECK(d.size() == 2);
  CHECK(d.contains("topless"));
  CHECK_FALSE(d.warnings().empty());

  write_text_file(dir / "empty.txt", "# nothing\n");
  CHECK_THROWS_AS(load_dictionary(dir / "empty.txt"), Error);
  CHECK_NOTHROW(load_dictionary(dir / "empty.txt", DictionaryMode::test));
  CHECK_THROWS_AS(load_dictionary(dir / "missing.txt"), Error);
  CHECK_THROWS_AS(KeywordDictionary::from_entries({"one two three four five six"}), Error);
}

TEST_CASE("builtin dictionary and handle swap") {
  const auto d = builtin_test_dictionary();
  CHECK(d.size() >= 5);
  DictionaryHandle h(d);
  auto held = h.get();
  h.replace(KeywordDictionary::from_entries({"only"}, 2));
  CHECK(held->size() == d.size());
  CHECK(h.get()->version() == 2);
}

TEST_CASE("agrees with a token-scan oracle on generated pairs") {
  testsupport::Rng rng(7);
  const auto words = testsupport::word_pool();
  for (int i = 0; i < 1500; ++i) {
    const auto entries = testsupport::random_entries(rng, words, 1 + static_cast<int>(rng() % 6));
    const auto caption = testsupport::random_caption(rng, words, 0, 12);
    const auto d = KeywordDictionary::from_entries(entries, 1);
    CAPTURE(caption);
    const auto r = match_keywords({caption, {}}, d);
    CHECK(r.matched == testsupport::token_scan_matches(caption, entries));
    for (const auto& h : r.hits) {
      CHECK(testsupport::token_scan_matches(caption, {h.entry}));
      CHECK(r.normalized.substr(h.start, h.end - h.start) == h.entry);
    }
    const auto perturbed = testsupport::perturb_case_and_punctuation(rng, caption);
    CHECK(flagged(perturbed, d) == r.matched);
  }
}
