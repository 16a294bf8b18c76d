#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <unistd.h>

namespace testsupport {

namespace {

struct Group {
  std::size_t open = 0;
  std::size_t close = 0;
  std::optional<std::size_t> colon;  // same-depth weight separator
};

bool is_escape_at(const std::string& s, std::size_t i) {
  return s[i] == '\\' && i + 1 < s.size() &&
         (s[i + 1] == '(' || s[i + 1] == ')' || s[i + 1] == ':' || s[i + 1] == '\\');
}

}  // namespace

std::vector<CharWeight> brute_force_weights(const std::string& p) {
  // Pass 1: find groups by explicit bracket matching.
  std::vector<Group> groups;
  std::vector<std::size_t> stack;
  std::vector<bool> escaped_literal(p.size(), false);
  std::vector<bool> skip(p.size(), false);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (is_escape_at(p, i)) {
      skip[i] = true;
      escaped_literal[i + 1] = true;
      ++i;
      continue;
    }
    if (p[i] == '(') {
      stack.push_back(groups.size());
      groups.push_back({i, 0, std::nullopt});
    } else if (p[i] == ')') {
      if (stack.empty()) throw std::runtime_error("oracle: unbalanced");
      groups[stack.back()].close = i;
      stack.pop_back();
    } else if (p[i] == ':') {
      if (stack.empty()) throw std::runtime_error("oracle: colon at top level");
      groups[stack.back()].colon = i;
    }
  }
  if (!stack.empty()) throw std::runtime_error("oracle: unbalanced");

  std::vector<double> weight_of(groups.size(), 1.1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (!groups[g].colon) continue;
    const std::size_t a = *groups[g].colon + 1;
    std::string num = p.substr(a, groups[g].close - a);
    weight_of[g] = std::stod(num);
    for (std::size_t k = *groups[g].colon; k < groups[g].close; ++k) skip[k] = true;
  }

  // Pass 2: every remaining literal character gets the product of its enclosing groups.
  std::vector<CharWeight> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (skip[i]) continue;
    if (!escaped_literal[i] && (p[i] == '(' || p[i] == ')')) continue;
    double w = 1.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].open < i && i < groups[g].close) w *= weight_of[g];
    }
    out.push_back({p[i], w});
  }
  return out;
}

namespace {

std::string random_text(Rng& rng) {
  static const std::vector<std::string> atoms = {"a",  "b",   "cat", "dark", " ",   ", ",  "skin", "brown",
                                                 "-",  "x9",  "é",   "\\(",  "\\)", "\\:", "\\\\", "portrait",
                                                 "ab", "q.", "!",   "Z"};
  std::uniform_int_distribution<int> len(1, 4);
  std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
  std::string s;
  for (int i = 0, n = len(rng); i < n; ++i) s += atoms[pick(rng)];
  return s;
}

std::string random_weight(Rng& rng) {
  static const std::vector<std::string> w = {"0.5", "1.2", "1.5", "0.8", "2", "1.05", "0.333", "1", "1.25", "3.5"};
  return w[std::uniform_int_distribution<std::size_t>(0, w.size() - 1)(rng)];
}

std::string random_group_body(Rng& rng, int depth) {
  std::uniform_int_distribution<int> parts(1, 3);
  std::bernoulli_distribution nest(depth > 0 ? 0.4 : 0.0);
  std::string s;
  for (int i = 0, n = parts(rng); i < n; ++i) {
    if (nest(rng)) {
      s += "(" + random_group_body(rng, depth - 1);
      if (std::bernoulli_distribution(0.6)(rng)) s += ":" + random_weight(rng);
      s += ")";
    } else {
      s += random_text(rng);
    }
  }
  return s;
}

}  // namespace

std::string random_prompt(Rng& rng, int max_depth) {
  std::string p;
  std::uniform_int_distribution<int> parts(1, 4);
  for (int i = 0, n = parts(rng); i < n; ++i) {
    if (std::bernoulli_distribution(0.5)(rng)) {
      p += "(" + random_group_body(rng, max_depth - 1);
      if (std::bernoulli_distribution(0.6)(rng)) p += ":" + random_weight(rng);
      p += ")";
    } else {
      p += random_text(rng);
    }
  }
  return p;
}

std::vector<std::string> ascii_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

static bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

bool token_scan_matches(const std::string& caption, const std::vector<std::string>& entries) {
  return !token_scan_entries(caption, entries).empty();
}

std::vector<std::string> token_scan_entries(const std::string& caption, const std::vector<std::string>& entries) {
  const auto hay = ascii_tokens(caption);
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (contains_run(hay, ascii_tokens(e))) out.push_back(e);
  }
  return out;
}

std::vector<std::string> word_pool() {
  return {"a",     "woman", "man",  "nude", "naked", "bare",  "breasts", "beach", "portrait", "topless", "sunset",
          "smile", "red",   "dress", "no",  "clothes", "nudes", "art",   "denude", "lingerie", "park",  "cat"};
}

std::string random_caption(Rng& rng, const std::vector<std::string>& words, int min_words, int max_words) {
  static const std::vector<std::string> seps = {" ", " ", " ", ", ", ". ", "-", "! ", "  ", "/", "'"};
  std::uniform_int_distribution<int> n(min_words, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::uniform_int_distribution<std::size_t> sep(0, seps.size() - 1);
  std::string s;
  for (int i = 0, k = n(rng); i < k; ++i) {
    if (i) s += seps[sep(rng)];
    s += words[pick(rng)];
  }
  return s;
}

std::vector<std::string> random_entries(Rng& rng, const std::vector<std::string>& words, int count) {
  std::uniform_int_distribution<int> len(1, 3);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) {
    std::string e;
    for (int j = 0, k = len(rng); j < k; ++j) e += (j ? " " : "") + words[pick(rng)];
    out.push_back(e);
  }
  return out;
}

std::string perturb_case_and_punctuation(Rng& rng, const std::string& caption) {
  static const std::string punct = " ,.;:!?-_/()[]\"'";
  std::bernoulli_distribution flip(0.5);
  std::uniform_int_distribution<std::size_t> pick(0, punct.size() - 1);
  std::string out;
  for (unsigned char c : caption) {
    if (std::isalpha(c)) {
      out.push_back(static_cast<char>(flip(rng) ? std::toupper(c) : std::tolower(c)));
    } else if (!std::isalnum(c)) {
      out.push_back(punct[pick(rng)]);
      if (flip(rng)) out.push_back(punct[pick(rng)]);
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  if (flip(rng)) out = "\"" + out + "!!";
  return out;
}

std::vector<double> kde_grid_double_loop(const std::vector<double>& samples, double h) {
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> grid(256, 0.0);
  for (int g = 0; g < 256; ++g) {
    double acc = 0.0;
    for (double x : samples) {
      const double u = (g - x) / h;
      acc += std::exp(-0.5 * u * u);
    }
    grid[static_cast<std::size_t>(g)] = acc * norm;
  }
  return grid;
}

double kde_mass_midpoint(const std::vector<double>& samples, double h, double lo, double hi, int steps) {
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  const double dx = (hi - lo) / steps;
  double mass = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double v = lo + (k + 0.5) * dx;
    double acc = 0.0;
    for (double x : samples) {
      const double u = (v - x) / h;
      acc += std::exp(-0.5 * u * u);
    }
    mass += acc * norm * dx;
  }
  return mass;
}

double greedy_transport_emd(std::vector<double> a, std::vector<double> b) {
  double sa = 0, sb = 0;
  for (double v : a) sa += v;
  for (double v : b) sb += v;
  for (double& v : a) v /= sa;
  for (double& v : b) v /= sb;
  std::size_t i = 0, j = 0;
  double cost = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= 1e-300) {
      ++i;
      continue;
    }
    if (b[j] <= 1e-300) {
      ++j;
      continue;
    }
    const double m = std::min(a[i], b[j]);
    cost += m * std::abs(static_cast<double>(i) - static_cast<double>(j));
    a[i] -= m;
    b[j] -= m;
  }
  return cost;
}

NaiveMetrics naive_recount(const stylegate::ConfusionMatrix& cm) {
  using stylegate::Label;
  std::vector<std::pair<Label, Label>> rows;  // (truth, predicted)
  for (std::uint64_t k = 0; k < cm.tp; ++k) rows.emplace_back(Label::nudity, Label::nudity);
  for (std::uint64_t k = 0; k < cm.fp; ++k) rows.emplace_back(Label::neutral, Label::nudity);
  for (std::uint64_t k = 0; k < cm.tn; ++k) rows.emplace_back(Label::neutral, Label::neutral);
  for (std::uint64_t k = 0; k < cm.fn; ++k) rows.emplace_back(Label::nudity, Label::neutral);

  auto frac = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  auto f1 = [](std::optional<double> p, std::optional<double> r) -> std::optional<double> {
    if (!p || !r) return std::nullopt;
    if (*p == 0.0 && *r == 0.0) return 0.0;
    return 2.0 * *p * *r / (*p + *r);
  };
  auto per_class = [&](Label c, std::optional<double>& prec, std::optional<double>& rec) {
    std::uint64_t hit = 0, predicted = 0, actual = 0;
    for (const auto& [t, p] : rows) {
      hit += (t == c && p == c);
      predicted += (p == c);
      actual += (t == c);
    }
    prec = frac(hit, predicted);
    rec = frac(hit, actual);
    return actual;
  };

  NaiveMetrics m;
  std::uint64_t correct = 0;
  for (const auto& [t, p] : rows) correct += (t == p);
  m.accuracy = frac(correct, rows.size());
  const auto pos = per_class(Label::nudity, m.precision, m.recall);
  const auto neg = per_class(Label::neutral, m.precision_neutral, m.recall_neutral);
  m.f1_nudity = f1(m.precision, m.recall);
  m.f1_neutral = f1(m.precision_neutral, m.recall_neutral);
  if (m.f1_nudity && m.f1_neutral) m.f1_macro = (*m.f1_nudity + *m.f1_neutral) / 2.0;
  const bool pos_ok = pos == 0 || m.f1_nudity.has_value();
  const bool neg_ok = neg == 0 || m.f1_neutral.has_value();
  if (!rows.empty() && pos_ok && neg_ok) {
    double acc = 0.0;
    if (pos) acc += static_cast<double>(pos) * *m.f1_nudity;
    if (neg) acc += static_cast<double>(neg) * *m.f1_neutral;
    m.f1_weighted = acc / static_cast<double>(rows.size());
  }
  return m;
}

stylegate::PortraitImage portrait_fixture(int w, int h, stylegate::Rgb skin, std::uint8_t probe_red,
                                          std::uint64_t seed) {
  stylegate::PortraitImage img(w, h, stylegate::Rgb{70, 95, 130});
  Rng rng(seed);
  std::uniform_int_distribution<int> jitter(-6, 6);
  const auto mask = ellipse_mask(w, h);
  auto clamp8 = [](int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask(x, y)) {
        img.set(x, y, {clamp8(skin.r + jitter(rng)), clamp8(skin.g + jitter(rng)), clamp8(skin.b + jitter(rng))});
      } else {
        const int shade = (x * 40) / std::max(1, w - 1);
        img.set(x, y, {clamp8(60 + shade), clamp8(90 + shade / 2), clamp8(130 - shade / 3)});
      }
    }
  }
  auto px = img.at(0, 0);
  px.r = probe_red;
  img.set(0, 0, px);
  return img;
}

stylegate::SkinMask ellipse_mask(int w, int h) {
  stylegate::MaskPlane m(h, w);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double rx = w * 0.3, ry = h * 0.38;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      m(y, x) = dx * dx + dy * dy <= 1.0;
    }
  }
  return stylegate::SkinMask(m);
}

std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("stylegate-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
