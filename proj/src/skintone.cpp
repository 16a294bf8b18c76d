#include "stylegate/skintone.hpp"

namespace stylegate {

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::R: return "R";
    case Channel::G: return "G";
    case Channel::B: return "B";
  }
  return "R";
}

std::string_view to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::real_world: return "real_world";
    case SourceTag::original: return "original";
    case SourceTag::augmented: return "augmented";
    case SourceTag::other: return "other";
  }
  return "other";
}

SourceTag source_tag_from_string(std::string_view name) {
  if (name == "real_world") return SourceTag::real_world;
  if (name == "original") return SourceTag::original;
  if (name == "augmented") return SourceTag::augmented;
  if (name == "other" || name.empty()) return SourceTag::other;
  throw Error(Errc::invalid_manifest, "unknown source tag '" + std::string(name) + "'");
}

void SkinSamples::append(const SkinSamples& other) {
  for (std::size_t c = 0; c < 3; ++c) {
    Eigen::ArrayXd merged(channels[c].size() + other.channels[c].size());
    merged << channels[c], other.channels[c];
    channels[c] = std::move(merged);
  }
}

SkinSamples extract_skin_pixels(const PortraitImage& image, const SkinMask& mask, Eigen::Index min_skin_pixels) {
  if (mask.width() != image.width() || mask.height() != image.height()) {
    throw Error(Errc::dimension_mismatch, "mask is " + std::to_string(mask.width()) + "x" +
                                              std::to_string(mask.height()) + ", image is " +
                                              std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  const Eigen::Index n = mask.count();
  if (n < min_skin_pixels || n == 0) {
    throw Error(Errc::insufficient_skin_pixels,
                std::to_string(n) + " skin pixels, need " + std::to_string(std::max<Eigen::Index>(min_skin_pixels, 1)));
  }
  SkinSamples out;
  for (auto& ch : out.channels) ch.resize(n);
  Eigen::Index k = 0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!mask(x, y)) continue;
      for (int c = 0; c < 3; ++c) out.channels[static_cast<std::size_t>(c)](k) = image.channel(c)(y, x);
      ++k;
    }
  }
  return out;
}

SkinToneDistribution distribution_from_samples(const SkinSamples& samples, const AnalysisOptions& opts) {
  SkinToneDistribution d;
  d.source_tag = opts.source_tag;
  d.pixel_count = samples.size();
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& ch = samples.channels[c];
    const double h = opts.bandwidth ? *opts.bandwidth : silverman_bandwidth(ch);
    d.kdes[c] = estimate_kde(ch, h, static_cast<Channel>(c));
    d.channel_coverage[c] = grid_coverage(d.kdes[c].grid(), opts.density_floor);
  }
  d.coverage = (d.channel_coverage[0] + d.channel_coverage[1] + d.channel_coverage[2]) / 3.0;
  return d;
}

SkinToneDistribution analyze_dataset(std::span<const MaskedImage> entries, const AnalysisOptions& opts) {
  SkinSamples pooled;
  std::size_t used = 0, skipped = 0;
  for (const auto& e : entries) {
    try {
      pooled.append(extract_skin_pixels(e.image, e.mask, opts.min_skin_pixels));
      ++used;
    } catch (const Error& err) {
      if (err.code() != Errc::insufficient_skin_pixels) throw;
      ++skipped;
    }
  }
  if (used == 0) throw Error(Errc::no_usable_entries, "no entry has enough skin pixels");
  SkinToneDistribution d = distribution_from_samples(pooled, opts);
  d.used_entries = used;
  d.skipped_entries = skipped;
  return d;
}

std::array<DensityGrid<double>, 3> uniform_reference_grids() {
  const DensityGrid<double> flat = DensityGrid<double>::Constant(1.0 / kGridSize);
  return {flat, flat, flat};
}

DivergenceReport compare_distributions(const SkinToneDistribution& a, const SkinToneDistribution& b) {
  DivergenceReport r;
  for (std::size_t c = 0; c < 3; ++c) {
    r.emd[c] = grid_emd(a.kdes[c].grid(), b.kdes[c].grid());
  }
  r.mean_emd = (r.emd[0] + r.emd[1] + r.emd[2]) / 3.0;
  r.coverage_delta = b.coverage - a.coverage;
  return r;
}

double emd_to_uniform(const SkinToneDistribution& d) {
  const auto ref = uniform_reference_grids();
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) total += grid_emd(d.kdes[c].grid(), ref[c]);
  return total / 3.0;
}

nlohmann::json to_json(const SkinToneDistribution& d) {
  nlohmann::json j;
  j["source"] = to_string(d.source_tag);
  j["coverage"] = d.coverage;
  j["pixel_count"] = d.pixel_count;
  j["used_entries"] = d.used_entries;
  j["skipped_entries"] = d.skipped_entries;
  j["emd_to_uniform"] = emd_to_uniform(d);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& kde = d.kdes[c];
    const auto& g = kde.grid();
    j["channels"][std::string(to_string(kde.channel()))] = {
        {"bandwidth", kde.bandwidth()},
        {"sample_count", kde.sample_count()},
        {"coverage", d.channel_coverage[c]},
        {"grid", std::vector<double>(g.data(), g.data() + g.size())},
    };
  }
  return j;
}

nlohmann::json to_json(const DivergenceReport& r) {
  return {{"emd", {{"R", r.emd[0]}, {"G", r.emd[1]}, {"B", r.emd[2]}}},
          {"mean_emd", r.mean_emd},
          {"coverage_delta", r.coverage_delta}};
}

}  // namespace stylegate
