#include "stylegate/image.hpp"

#include <png.h>

#include <cstring>

#include "stylegate/error.hpp"

namespace stylegate {

PortraitImage::PortraitImage(int width, int height, Rgb fill) {
  if (width <= 0 || height <= 0) {
    throw Error(Errc::dimension_mismatch, "image dimensions must be positive");
  }
  planes_[0] = Plane::Constant(height, width, fill.r);
  planes_[1] = Plane::Constant(height, width, fill.g);
  planes_[2] = Plane::Constant(height, width, fill.b);
}

PortraitImage PortraitImage::from_interleaved(int width, int height,
                                              std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw Error(Errc::dimension_mismatch, "interleaved buffer does not match W x H x 3");
  }
  PortraitImage image(width, height);
  std::size_t i = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) image.planes_[c](y, x) = rgb[i++];
    }
  }
  return image;
}

std::vector<std::uint8_t> PortraitImage::interleaved() const {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(width()) * static_cast<std::size_t>(height()) * 3);
  for (int y = 0; y < height(); ++y) {
    for (int x = 0; x < width(); ++x) {
      for (const auto& p : planes_) out.push_back(p(y, x));
    }
  }
  return out;
}

bool operator==(const PortraitImage& a, const PortraitImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) return false;
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(a.planes_[c] == b.planes_[c]).all()) return false;
  }
  return true;
}

Plane SkinMask::to_plane() const {
  return bits_.select(Plane::Constant(bits_.rows(), bits_.cols(), 255),
                      Plane::Zero(bits_.rows(), bits_.cols()));
}

SkinMask SkinMask::from_plane(const Plane& plane) {
  return SkinMask(MaskPlane(plane > std::uint8_t{127}));
}

std::string_view to_string(ConditionKind kind) {
  return kind == ConditionKind::edge ? "edge" : "depth";
}

ConditionKind condition_kind_from_string(std::string_view name) {
  if (name == "edge") return ConditionKind::edge;
  if (name == "depth") return ConditionKind::depth;
  throw Error(Errc::unsupported_format, "unknown condition kind '" + std::string(name) + "'");
}

bool looks_like_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSig, 8) == 0;
}

namespace {

Bytes write_png(const std::uint8_t* pixels, int width, int height, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw Error(Errc::io_error, std::string("png encode failed: ") + img.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw Error(Errc::io_error, std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> read_png(std::span<const std::uint8_t> bytes, png_uint_32 format,
                                   int& width, int& height) {
  if (!looks_like_png(bytes)) throw Error(Errc::unsupported_format, "payload is not a PNG image");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(Errc::unsupported_format, std::string("png decode failed: ") + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  // Alpha is composited onto black when the target format has none.
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&img, &background, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(Errc::unsupported_format, std::string("png decode failed: ") + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  if (width <= 0 || height <= 0) throw Error(Errc::unsupported_format, "empty PNG image");
  return buffer;
}

}  // namespace

Bytes encode_png(const PortraitImage& image) {
  const auto rgb = image.interleaved();
  return write_png(rgb.data(), image.width(), image.height(), PNG_FORMAT_RGB);
}

Bytes encode_png(const Plane& gray) {
  return write_png(gray.data(), static_cast<int>(gray.cols()), static_cast<int>(gray.rows()),
                   PNG_FORMAT_GRAY);
}

PortraitImage decode_png_rgb(std::span<const std::uint8_t> bytes) {
  int w = 0, h = 0;
  const auto rgb = read_png(bytes, PNG_FORMAT_RGB, w, h);
  return PortraitImage::from_interleaved(w, h, rgb);
}

Plane decode_png_gray(std::span<const std::uint8_t> bytes) {
  int w = 0, h = 0;
  const auto gray = read_png(bytes, PNG_FORMAT_GRAY, w, h);
  return Eigen::Map<const Plane>(gray.data(), h, w);
}

PortraitImage load_png_rgb(const std::string& path) { return decode_png_rgb(read_file(path)); }

SkinMask load_png_mask(const std::string& path) {
  return SkinMask::from_plane(decode_png_gray(read_file(path)));
}

std::string image_digest(const PortraitImage& image) {
  auto bytes = image.interleaved();
  const std::string header = std::to_string(image.width()) + "x" + std::to_string(image.height());
  bytes.insert(bytes.begin(), header.begin(), header.end());
  return sha256_hex(bytes);
}

std::string plane_digest(const Plane& plane) {
  Bytes bytes(plane.data(), plane.data() + plane.size());
  const std::string header = std::to_string(plane.cols()) + "x" + std::to_string(plane.rows());
  bytes.insert(bytes.begin(), header.begin(), header.end());
  return sha256_hex(bytes);
}

Plane luminance(const PortraitImage& image) {
  const auto r = image.channel(0).cast<double>();
  const auto g = image.channel(1).cast<double>();
  const auto b = image.channel(2).cast<double>();
  return (0.299 * r + 0.587 * g + 0.114 * b).round().min(255.0).cast<std::uint8_t>();
}

}  // namespace stylegate
