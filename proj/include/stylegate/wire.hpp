#pragma once

#include "json.hpp"
#include "stylegate/backend.hpp"

/// Backend wire protocol. Every body is JSON; image fields carry base64 PNG.
///
///   score         {image}                                   -> {score}
///   caption       {image}                                   -> {caption}
///   condition     {image, kind}                             -> {condition_image}
///   diffusion     {image, condition_image?, condition_kind,
///                  prompt, denoising_strength, seed}        -> {image}
///   segmentation  {image}                                   -> {mask}
///
/// Response parsers throw BackendError(malformed_response); request parsers
/// (server side) throw Error(unsupported_format).
namespace stylegate::wire {

std::string encode_image(const PortraitImage& image);
std::string encode_plane(const Plane& plane);

nlohmann::json score_request(const PortraitImage& image);
nlohmann::json caption_request(const PortraitImage& image);
nlohmann::json condition_request(const PortraitImage& image, ConditionKind kind);
nlohmann::json diffusion_request(const DiffusionRequest& req);
nlohmann::json segmentation_request(const PortraitImage& image);

NudityScore parse_score_response(const nlohmann::json& j);
Caption parse_caption_response(const nlohmann::json& j);
ConditionImage parse_condition_response(const nlohmann::json& j, ConditionKind kind);
PortraitImage parse_diffusion_response(const nlohmann::json& j);
SkinMask parse_segmentation_response(const nlohmann::json& j);

PortraitImage parse_image_request(const nlohmann::json& j);
ConditionKind parse_condition_kind(const nlohmann::json& j);
DiffusionRequest parse_diffusion_request(const nlohmann::json& j);

nlohmann::json score_response(const NudityScore& s);
nlohmann::json caption_response(const Caption& c);
nlohmann::json condition_response(const ConditionImage& c);
nlohmann::json diffusion_response(const PortraitImage& image);
nlohmann::json segmentation_response(const SkinMask& mask);

}  // namespace stylegate::wire
