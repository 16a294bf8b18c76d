#include "stylegate/wire.hpp"

#include "stylegate/error.hpp"
#include "stylegate/util.hpp"

namespace stylegate::wire {

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* name, BackendRole role) {
  if (!j.is_object() || !j.contains(name)) {
    throw BackendError(role, BackendFailure::malformed_response, std::string("missing field '") + name + "'");
  }
  return j.at(name);
}

Bytes decode_payload(const nlohmann::json& v, BackendRole role, const char* name) {
  if (!v.is_string()) {
    throw BackendError(role, BackendFailure::malformed_response, std::string("'") + name + "' is not a string");
  }
  try {
    return base64_decode(v.get<std::string>());
  } catch (const Error& e) {
    throw BackendError(role, BackendFailure::malformed_response, std::string("'") + name + "': " + e.what());
  }
}

template <class Fn>
auto guard(BackendRole role, const char* name, Fn fn) {
  try {
    return fn();
  } catch (const BackendError&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError(role, BackendFailure::malformed_response, std::string("'") + name + "': " + e.what());
  }
}

const nlohmann::json& req_field(const nlohmann::json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw Error(Errc::unsupported_format, std::string("request lacks field '") + name + "'");
  }
  return j.at(name);
}

PortraitImage image_field(const nlohmann::json& j, const char* name) {
  const auto& v = req_field(j, name);
  if (!v.is_string()) throw Error(Errc::unsupported_format, std::string("'") + name + "' is not a string");
  return decode_png_rgb(base64_decode(v.get<std::string>()));
}

}  // namespace

std::string encode_image(const PortraitImage& image) { return base64_encode(encode_png(image)); }
std::string encode_plane(const Plane& plane) { return base64_encode(encode_png(plane)); }

nlohmann::json score_request(const PortraitImage& image) { return {{"image", encode_image(image)}}; }
nlohmann::json caption_request(const PortraitImage& image) { return {{"image", encode_image(image)}}; }
nlohmann::json segmentation_request(const PortraitImage& image) { return {{"image", encode_image(image)}}; }

nlohmann::json condition_request(const PortraitImage& image, ConditionKind kind) {
  return {{"image", encode_image(image)}, {"kind", to_string(kind)}};
}

nlohmann::json diffusion_request(const DiffusionRequest& req) {
  nlohmann::json j = {{"image", encode_image(req.image)},
                      {"condition_kind", req.condition ? std::string(to_string(req.condition->kind)) : "none"},
                      {"prompt", serialize_prompt(req.prompt)},
                      {"denoising_strength", req.denoising_strength},
                      {"seed", req.seed}};
  j["condition_image"] = req.condition ? nlohmann::json(encode_plane(req.condition->pixels)) : nlohmann::json(nullptr);
  return j;
}

NudityScore parse_score_response(const nlohmann::json& j) {
  const auto& v = field(j, "score", BackendRole::score);
  if (!v.is_number()) throw BackendError(BackendRole::score, BackendFailure::malformed_response, "'score' is not a number");
  NudityScore s{v.get<double>(), "remote"};
  if (j.contains("backend_id") && j["backend_id"].is_string()) s.backend_id = j["backend_id"].get<std::string>();
  check_score_range(BackendRole::score, s.value);
  return s;
}

Caption parse_caption_response(const nlohmann::json& j) {
  const auto& v = field(j, "caption", BackendRole::caption);
  if (!v.is_string()) {
    throw BackendError(BackendRole::caption, BackendFailure::malformed_response, "'caption' is not a string");
  }
  Caption c{v.get<std::string>(), std::nullopt};
  if (j.contains("language") && j["language"].is_string()) c.language = j["language"].get<std::string>();
  return c;
}

ConditionImage parse_condition_response(const nlohmann::json& j, ConditionKind kind) {
  const auto bytes = decode_payload(field(j, "condition_image", BackendRole::condition), BackendRole::condition,
                                    "condition_image");
  return ConditionImage{kind, guard(BackendRole::condition, "condition_image", [&] { return decode_png_gray(bytes); })};
}

PortraitImage parse_diffusion_response(const nlohmann::json& j) {
  const auto bytes = decode_payload(field(j, "image", BackendRole::diffusion), BackendRole::diffusion, "image");
  return guard(BackendRole::diffusion, "image", [&] { return decode_png_rgb(bytes); });
}

SkinMask parse_segmentation_response(const nlohmann::json& j) {
  const auto bytes = decode_payload(field(j, "mask", BackendRole::segmentation), BackendRole::segmentation, "mask");
  return guard(BackendRole::segmentation, "mask", [&] { return SkinMask::from_plane(decode_png_gray(bytes)); });
}

PortraitImage parse_image_request(const nlohmann::json& j) { return image_field(j, "image"); }

ConditionKind parse_condition_kind(const nlohmann::json& j) {
  const auto& v = req_field(j, "kind");
  if (!v.is_string()) throw Error(Errc::unsupported_format, "'kind' is not a string");
  return condition_kind_from_string(v.get<std::string>());
}

DiffusionRequest parse_diffusion_request(const nlohmann::json& j) {
  try {
    DiffusionRequest req;
    req.image = image_field(j, "image");
    const std::string kind = req_field(j, "condition_kind").get<std::string>();
    if (kind != "none") {
      const auto& cond = req_field(j, "condition_image");
      if (!cond.is_string()) throw Error(Errc::unsupported_format, "'condition_image' is not a string");
      req.condition = ConditionImage{condition_kind_from_string(kind), decode_png_gray(base64_decode(cond.get<std::string>()))};
    }
    req.prompt = parse_prompt(req_field(j, "prompt").get<std::string>());
    req.denoising_strength = req_field(j, "denoising_strength").get<double>();
    req.seed = req_field(j, "seed").get<std::uint64_t>();
    if (!(req.denoising_strength >= 0.0 && req.denoising_strength <= 1.0)) {
      throw Error(Errc::unsupported_format, "denoising_strength outside [0, 1]");
    }
    return req;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::unsupported_format, e.what());
  }
}

nlohmann::json score_response(const NudityScore& s) { return {{"score", s.value}, {"backend_id", s.backend_id}}; }

nlohmann::json caption_response(const Caption& c) {
  nlohmann::json j = {{"caption", c.text}};
  if (c.language) j["language"] = *c.language;
  return j;
}

nlohmann::json condition_response(const ConditionImage& c) {
  return {{"condition_image", encode_plane(c.pixels)}, {"kind", to_string(c.kind)}};
}

nlohmann::json diffusion_response(const PortraitImage& image) { return {{"image", encode_image(image)}}; }

nlohmann::json segmentation_response(const SkinMask& mask) { return {{"mask", encode_plane(mask.to_plane())}}; }

}  // namespace stylegate::wire
