#pragma once

// Independent oracles and generators shared by the unit and acceptance tests.
// Nothing here calls into the code under test except for plain data types.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stylegate/eval.hpp"
#include "stylegate/image.hpp"

namespace testsupport {

using Rng = std::mt19937_64;

// --- prompts ---------------------------------------------------------------

struct CharWeight {
  char ch;
  double weight;
};

/// Character-by-character evaluation: for every literal character, the product
/// of the weights of all enclosing groups. A group's weight is the number after
/// its last same-depth ':' or 1.1 when there is none.
std::vector<CharWeight> brute_force_weights(const std::string& prompt);

/// Random valid prompt, up to `max_depth` nested groups, with escapes.
std::string random_prompt(Rng& rng, int max_depth = 3);

// --- keywords --------------------------------------------------------------

/// Lowercase ASCII words split on every non-alphanumeric byte.
std::vector<std::string> ascii_tokens(const std::string& text);

/// True iff some entry's token sequence occurs contiguously in the caption's tokens.
bool token_scan_matches(const std::string& caption, const std::vector<std::string>& entries);

/// Entries found by a contiguous token scan, in dictionary order.
std::vector<std::string> token_scan_entries(const std::string& caption, const std::vector<std::string>& entries);

std::vector<std::string> word_pool();
std::string random_caption(Rng& rng, const std::vector<std::string>& words, int min_words, int max_words);
std::vector<std::string> random_entries(Rng& rng, const std::vector<std::string>& words, int count);
/// Flips letter case at random and swaps separators for other punctuation.
std::string perturb_case_and_punctuation(Rng& rng, const std::string& caption);

// --- KDE / EMD -------------------------------------------------------------

/// (1 / (n h)) * sum_i phi((g - x_i) / h) for g = 0..255, one kernel at a time.
std::vector<double> kde_grid_double_loop(const std::vector<double>& samples, double h);

/// Midpoint rule over [lo, hi] of the same double-loop density.
double kde_mass_midpoint(const std::vector<double>& samples, double h, double lo, double hi, int steps);

/// Transport cost of moving normalized histogram a onto b with a greedy
/// left-to-right matcher, |i - j| per unit mass.
double greedy_transport_emd(std::vector<double> a, std::vector<double> b);

// --- metrics ---------------------------------------------------------------

struct NaiveMetrics {
  std::optional<double> accuracy, precision, recall, f1_nudity;
  std::optional<double> precision_neutral, recall_neutral, f1_neutral, f1_macro, f1_weighted;
};

/// Expands the matrix into per-entry (truth, prediction) pairs and recounts.
NaiveMetrics naive_recount(const stylegate::ConfusionMatrix& cm);

// --- images ----------------------------------------------------------------

/// Deterministic portrait-like fixture: background with a skin-coloured
/// ellipse. The top-left pixel's red value is `probe_red`.
stylegate::PortraitImage portrait_fixture(int w, int h, stylegate::Rgb skin, std::uint8_t probe_red = 90,
                                          std::uint64_t seed = 1);
stylegate::SkinMask ellipse_mask(int w, int h);

std::filesystem::path fresh_temp_dir(const std::string& tag);

}  // namespace testsupport
