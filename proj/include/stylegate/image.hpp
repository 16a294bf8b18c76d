#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stylegate/util.hpp"

namespace stylegate {

/// One 8-bit image plane, rows = height, cols = width.
using Plane = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskPlane = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// An RGB portrait, stored planar (3 x H x W). Channel values are 8-bit so
/// the [0, 255] range holds by construction.
class PortraitImage {
 public:
  PortraitImage() = default;
  PortraitImage(int width, int height, Rgb fill = {});

  static PortraitImage from_interleaved(int width, int height, std::span<const std::uint8_t> rgb);

  int width() const { return static_cast<int>(planes_[0].cols()); }
  int height() const { return static_cast<int>(planes_[0].rows()); }
  bool empty() const { return planes_[0].size() == 0; }

  Plane& channel(int c) { return planes_[static_cast<std::size_t>(c)]; }
  const Plane& channel(int c) const { return planes_[static_cast<std::size_t>(c)]; }

  Rgb at(int x, int y) const { return {planes_[0](y, x), planes_[1](y, x), planes_[2](y, x)}; }
  void set(int x, int y, Rgb v) {
    planes_[0](y, x) = v.r;
    planes_[1](y, x) = v.g;
    planes_[2](y, x) = v.b;
  }

  std::vector<std::uint8_t> interleaved() const;

  friend bool operator==(const PortraitImage& a, const PortraitImage& b);

 private:
  std::array<Plane, 3> planes_;
};

class SkinMask {
 public:
  SkinMask() = default;
  SkinMask(int width, int height, bool fill = false) : bits_(MaskPlane::Constant(height, width, fill)) {}
  explicit SkinMask(MaskPlane bits) : bits_(std::move(bits)) {}

  int width() const { return static_cast<int>(bits_.cols()); }
  int height() const { return static_cast<int>(bits_.rows()); }
  Eigen::Index count() const { return bits_.count(); }

  bool operator()(int x, int y) const { return bits_(y, x); }
  bool& operator()(int x, int y) { return bits_(y, x); }
  const MaskPlane& bits() const { return bits_; }

  /// 0/255 single-channel rendering.
  Plane to_plane() const;
  /// Values above 127 count as skin.
  static SkinMask from_plane(const Plane& plane);

 private:
  MaskPlane bits_;
};

enum class ConditionKind { edge, depth };

std::string_view to_string(ConditionKind kind);
ConditionKind condition_kind_from_string(std::string_view name);

struct ConditionImage {
  ConditionKind kind = ConditionKind::edge;
  Plane pixels;

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
  friend bool operator==(const ConditionImage& a, const ConditionImage& b) {
    return a.kind == b.kind && a.pixels.rows() == b.pixels.rows() &&
           a.pixels.cols() == b.pixels.cols() && (a.pixels == b.pixels).all();
  }
};

bool looks_like_png(std::span<const std::uint8_t> bytes);

Bytes encode_png(const PortraitImage& image);
Bytes encode_png(const Plane& gray);
/// Any PNG colour type is converted to 8-bit RGB. Throws Error(unsupported_format).
PortraitImage decode_png_rgb(std::span<const std::uint8_t> bytes);
Plane decode_png_gray(std::span<const std::uint8_t> bytes);

PortraitImage load_png_rgb(const std::string& path);
SkinMask load_png_mask(const std::string& path);

/// Content digest over dimensions and pixel values (independent of PNG encoding).
std::string image_digest(const PortraitImage& image);
std::string plane_digest(const Plane& plane);

/// ITU-R BT.601 luma, rounded.
Plane luminance(const PortraitImage& image);

}  // namespace stylegate
