#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stylegate/error.hpp"
#include "stylegate/image.hpp"

namespace stylegate {

/// Densities are evaluated at the integer intensities 0..255.
inline constexpr int kGridSize = 256;

template <typename Scalar>
using DensityGrid = Eigen::Array<Scalar, kGridSize, 1>;

enum class Channel { R = 0, G = 1, B = 2 };
std::string_view to_string(Channel c);

inline constexpr Eigen::Index kDefaultMinSkinPixels = 64;
inline constexpr double kDefaultDensityFloor = 1e-4;

/// Per-channel skin intensities in row-major pixel order.
struct SkinSamples {
  std::array<Eigen::ArrayXd, 3> channels;

  Eigen::Index size() const { return channels[0].size(); }
  /// Concatenation; the pooling step is an associative merge.
  void append(const SkinSamples& other);
};

/// Throws Error(dimension_mismatch) or Error(insufficient_skin_pixels).
SkinSamples extract_skin_pixels(const PortraitImage& image, const SkinMask& mask,
                                Eigen::Index min_skin_pixels = kDefaultMinSkinPixels);

/// Gaussian KDE of one channel. Keeps the (value, multiplicity) support so the
/// density can be evaluated off-grid.
template <typename Scalar = double>
class ChannelKde {
 public:
  ChannelKde() = default;

  Channel channel() const { return channel_; }
  Scalar bandwidth() const { return bandwidth_; }
  Eigen::Index sample_count() const { return sample_count_; }
  const DensityGrid<Scalar>& grid() const { return grid_; }

  Scalar density(Scalar v) const {
    const Scalar norm = Scalar(1) / (Scalar(sample_count_) * bandwidth_ * std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>));
    return norm * (counts_ * (Scalar(-0.5) * ((support_ - v) / bandwidth_).square()).exp()).sum();
  }

  /// Trapezoidal integral of the density over [-5h, 255 + 5h].
  Scalar integral() const {
    const Scalar lo = -5 * bandwidth_;
    const Scalar hi = Scalar(kGridSize - 1) + 5 * bandwidth_;
    const Scalar step = std::min(Scalar(1), bandwidth_ / 8);
    const auto n = static_cast<Eigen::Index>(std::ceil((hi - lo) / step));
    const Scalar dx = (hi - lo) / Scalar(n);
    Scalar acc = (density(lo) + density(hi)) / 2;
    for (Eigen::Index i = 1; i < n; ++i) acc += density(lo + dx * Scalar(i));
    return acc * dx;
  }

  template <typename Derived>
  friend ChannelKde<typename Derived::Scalar> estimate_kde(const Eigen::ArrayBase<Derived>& samples,
                                                           typename Derived::Scalar bandwidth, Channel channel);

 private:
  Channel channel_ = Channel::R;
  Scalar bandwidth_ = 0;
  Eigen::Index sample_count_ = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> support_;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> counts_;
  DensityGrid<Scalar> grid_ = DensityGrid<Scalar>::Zero();
};

/// density(v) = 1/(n h sqrt(2 pi)) * sum_i exp(-(v - s_i)^2 / (2 h^2)) on the
/// 256-point grid. Repeated sample values are folded into multiplicities
/// first, which makes 8-bit pixel data cost O(256 * 256) per channel.
template <typename Derived>
ChannelKde<typename Derived::Scalar> estimate_kde(const Eigen::ArrayBase<Derived>& samples,
                                                  typename Derived::Scalar bandwidth,
                                                  Channel channel = Channel::R) {
  using Scalar = typename Derived::Scalar;
  if (samples.size() == 0) throw Error(Errc::empty_samples, "KDE needs at least one sample");
  if (!(bandwidth > Scalar(0)) || !std::isfinite(bandwidth)) {
    throw Error(Errc::non_positive_bandwidth, "KDE bandwidth must be positive");
  }

  const Eigen::Array<Scalar, Eigen::Dynamic, 1> flat = samples;
  std::vector<Scalar> sorted(flat.data(), flat.data() + flat.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<Scalar> values, counts;
  for (Scalar s : sorted) {
    if (!values.empty() && values.back() == s) {
      counts.back() += 1;
    } else {
      values.push_back(s);
      counts.push_back(1);
    }
  }

  ChannelKde<Scalar> kde;
  kde.channel_ = channel;
  kde.bandwidth_ = bandwidth;
  kde.sample_count_ = samples.size();
  kde.support_ = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(values.data(), static_cast<Eigen::Index>(values.size()));
  kde.counts_ = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(counts.data(), static_cast<Eigen::Index>(counts.size()));
  for (int v = 0; v < kGridSize; ++v) kde.grid_(v) = kde.density(Scalar(v));
  return kde;
}

/// 0.9 * min(sigma, IQR / 1.34) * n^(-1/5). Falls back to sigma when the IQR
/// is zero and to 1.0 when the samples are constant.
template <typename Derived>
typename Derived::Scalar silverman_bandwidth(const Eigen::ArrayBase<Derived>& samples) {
  using Scalar = typename Derived::Scalar;
  const auto n = samples.size();
  if (n == 0) throw Error(Errc::empty_samples, "bandwidth needs at least one sample");
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> flat = samples;
  std::vector<Scalar> sorted(flat.data(), flat.data() + n);
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](Scalar q) {
    const Scalar pos = q * Scalar(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - Scalar(lo)) * (sorted[hi] - sorted[lo]);
  };
  const Scalar mean = flat.mean();
  const Scalar sigma = n > 1 ? std::sqrt((flat - mean).square().sum() / Scalar(n - 1)) : Scalar(0);
  const Scalar iqr = quantile(Scalar(0.75)) - quantile(Scalar(0.25));
  Scalar spread = std::min(sigma, iqr / Scalar(1.34));
  if (!(spread > 0)) spread = sigma;
  if (!(spread > 0)) return Scalar(1);
  return Scalar(0.9) * spread * std::pow(Scalar(n), Scalar(-0.2));
}

/// Fraction of grid points whose density exceeds `floor`.
template <typename Derived>
double grid_coverage(const Eigen::ArrayBase<Derived>& grid, double floor) {
  return static_cast<double>((grid > typename Derived::Scalar(floor)).count()) / static_cast<double>(grid.size());
}

/// 1-D earth mover's distance between two grid densities after normalising
/// each to unit mass: sum_k |CDF_a(k) - CDF_b(k)| with unit spacing.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar grid_emd(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar sa = a.sum();
  const Scalar sb = b.sum();
  Scalar cdf_a = 0, cdf_b = 0, total = 0;
  for (Eigen::Index k = 0; k + 1 < a.size(); ++k) {
    cdf_a += a(k) / sa;
    cdf_b += b(k) / sb;
    total += std::abs(cdf_a - cdf_b);
  }
  return total;
}

enum class SourceTag { real_world, original, augmented, other };
std::string_view to_string(SourceTag tag);
SourceTag source_tag_from_string(std::string_view name);

struct SkinToneDistribution {
  std::array<ChannelKde<double>, 3> kdes;
  std::array<double, 3> channel_coverage{};
  double coverage = 0.0;  // mean of channel_coverage
  SourceTag source_tag = SourceTag::other;
  Eigen::Index pixel_count = 0;
  std::size_t used_entries = 0;
  std::size_t skipped_entries = 0;

  const DensityGrid<double>& grid(Channel c) const { return kdes[static_cast<std::size_t>(c)].grid(); }
};

struct AnalysisOptions {
  std::optional<double> bandwidth;  // Silverman per channel when unset
  double density_floor = kDefaultDensityFloor;
  Eigen::Index min_skin_pixels = kDefaultMinSkinPixels;
  SourceTag source_tag = SourceTag::other;
};

struct MaskedImage {
  PortraitImage image;
  SkinMask mask;
};

SkinToneDistribution distribution_from_samples(const SkinSamples& samples, const AnalysisOptions& opts = {});

/// Pools the skin pixels of every usable entry before estimating. Entries with
/// too few skin pixels are skipped; throws Error(no_usable_entries) if none remain.
SkinToneDistribution analyze_dataset(std::span<const MaskedImage> entries, const AnalysisOptions& opts = {});

/// Flat density over the grid (full coverage), the "even distribution" target.
std::array<DensityGrid<double>, 3> uniform_reference_grids();

struct DivergenceReport {
  std::array<double, 3> emd{};
  double mean_emd = 0.0;
  double coverage_delta = 0.0;  // b.coverage - a.coverage
};

DivergenceReport compare_distributions(const SkinToneDistribution& a, const SkinToneDistribution& b);

/// Mean over channels of the EMD between the distribution and the uniform reference.
double emd_to_uniform(const SkinToneDistribution& d);

nlohmann::json to_json(const SkinToneDistribution& d);
nlohmann::json to_json(const DivergenceReport& r);

}  // namespace stylegate
