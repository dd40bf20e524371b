// SPDX-License-Identifier: Apache-2.0
#pragma once

// Decoder wire protocol, version 1. Every frame is
//   u32 LE header length | UTF-8 JSON header | binary payload
// Request header: {"version":1, "image_id", "prompt":{"type":"point"|"boxes",
// "coords"}, "map_shape":[H,W], "embedding_ref"}; payload: the H x W map as
// float32 LE. Point coords are [x, y]; box coords are a list of
// [x_min, y_min, x_max, y_max].
// Response header: {"image_id", "mask_shape":[H,W], "confidences":[c1,c2,c3]};
// payload: one bit-packed mask per confidence, ceil(H*W/8) bytes each,
// row-major, most significant bit first. A header holding "error" is an error
// frame and carries no payload.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mias/segmentation.hpp"

namespace mias {

class Transport;

inline constexpr int kProtocolVersion = 1;

struct DecoderRequest {
    int version = kProtocolVersion;
    std::string image_id;
    Prompt prompt;
    int height = 0;
    int width = 0;
    std::string embedding_ref;
    std::vector<float> map;
};

struct DecoderResponse {
    std::string image_id;
    int height = 0;
    int width = 0;
    std::vector<float> confidences;
    std::vector<BinaryMask> masks;
};

std::vector<std::uint8_t> pack_mask(const BinaryMask& mask);
BinaryMask unpack_mask(std::span<const std::uint8_t> bytes, int height, int width);

std::vector<std::uint8_t> encode_request(const DecoderRequest& request);
std::vector<std::uint8_t> encode_response(const DecoderResponse& response);
std::vector<std::uint8_t> encode_error(const std::string& image_id, const std::string& message,
                                       const std::string& code = "decoder-failure");

// Read one frame. read_request returns false on a clean EOF before the frame.
bool read_request(Transport& transport, DecoderRequest& out, int timeout_ms = -1);
// Throws DecoderFailure for error frames, ProtocolVersion for a version
// mismatch and MalformedResponse for anything not shaped like three masks.
DecoderResponse read_response(Transport& transport, int timeout_ms = -1);

// Request/response exchange with id and shape validation.
DecoderResponse external_decode(Transport& transport, const DecoderRequest& request, int timeout_ms = -1);

} // namespace mias
