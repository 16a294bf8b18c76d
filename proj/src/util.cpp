#include "stylegate/util.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "stylegate/error.hpp"

namespace stylegate {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::unbalanced_parenthesis: return "UnbalancedParenthesis";
    case Errc::malformed_weight: return "MalformedWeight";
    case Errc::empty_segment: return "EmptySegment";
    case Errc::io_error: return "IoError";
    case Errc::empty_dictionary: return "EmptyDictionary";
    case Errc::invalid_entry: return "InvalidEntry";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::insufficient_skin_pixels: return "InsufficientSkinPixels";
    case Errc::empty_samples: return "EmptySamples";
    case Errc::non_positive_bandwidth: return "NonPositiveBandwidth";
    case Errc::no_usable_entries: return "NoUsableEntries";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::target_below_original_count: return "TargetBelowOriginalCount";
    case Errc::invalid_target: return "InvalidTarget";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::invalid_manifest: return "InvalidManifest";
    case Errc::missing_offline_fields: return "MissingOfflineFields";
    case Errc::unsupported_format: return "UnsupportedFormat";
    case Errc::invalid_state: return "InvalidState";
    case Errc::backend: return "BackendError";
  }
  return "Unknown";
}

std::string_view to_string(BackendRole role) {
  switch (role) {
    case BackendRole::score: return "score";
    case BackendRole::caption: return "caption";
    case BackendRole::condition: return "condition";
    case BackendRole::diffusion: return "diffusion";
    case BackendRole::segmentation: return "segmentation";
  }
  return "unknown";
}

std::string_view to_string(BackendFailure cause) {
  switch (cause) {
    case BackendFailure::unavailable: return "unavailable";
    case BackendFailure::timeout: return "timeout";
    case BackendFailure::http_status: return "http_status";
    case BackendFailure::malformed_response: return "malformed_response";
    case BackendFailure::dimension_mismatch: return "dimension_mismatch";
  }
  return "unknown";
}

BackendRole backend_role_from_string(std::string_view name) {
  for (auto role : {BackendRole::score, BackendRole::caption, BackendRole::condition,
                    BackendRole::diffusion, BackendRole::segmentation}) {
    if (to_string(role) == name) return role;
  }
  throw Error(Errc::invalid_config, "unknown backend role '" + std::string(name) + "'");
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(data.data(), data.size(), digest.data());
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(digest.size() * 2);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw Error(Errc::unsupported_format, "base64 payload length is not a multiple of 4");
  }
  Bytes out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(Errc::unsupported_format, "malformed base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::io_error, "short write to '" + path.string() + "'");
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string derive_uuid(std::string_view key) {
  std::string hex = sha256_hex(key).substr(0, 32);
  // RFC 4122 layout with version 8 (custom) and the variant bits set.
  hex[12] = '8';
  hex[16] = "89ab"[std::stoi(hex.substr(16, 1), nullptr, 16) & 0x3];
  return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" +
         hex.substr(16, 4) + "-" + hex.substr(20, 12);
}

}  // namespace stylegate
