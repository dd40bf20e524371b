// SPDX-License-Identifier: Apache-2.0
#include "mias/wire_protocol.hpp"

#include <json.hpp>

#include "binary_io.hpp"
#include "mias/error.hpp"
#include "mias/transport.hpp"

namespace mias {

namespace {

using json = nlohmann::ordered_json;

constexpr std::uint32_t kMaxHeaderBytes = 1u << 24;
constexpr std::size_t kMaxMasks = 16;

std::size_t packed_bytes(int height, int width) {
    return (static_cast<std::size_t>(height) * width + 7) / 8;
}

void append_frame(std::vector<std::uint8_t>& buf, const json& header) {
    const std::string text = header.dump();
    io::append(buf, static_cast<std::uint32_t>(text.size()));
    io::put_bytes(buf, text.data(), text.size());
}

json prompt_json(const Prompt& prompt) {
    json p;
    if (const auto* point = std::get_if<PointPrompt>(&prompt)) {
        p["type"] = "point";
        p["coords"] = json::array({point->x, point->y});
    } else {
        p["type"] = "boxes";
        json coords = json::array();
        for (const Box& b : std::get<BoxPromptSet>(prompt).boxes) {
            coords.push_back(json::array({b.x_min, b.y_min, b.x_max, b.y_max}));
        }
        p["coords"] = std::move(coords);
    }
    return p;
}

// Reads "u32 length | JSON". Returns false on EOF before the first byte when
// allow_eof is set.
bool read_header(Transport& t, json& out, int timeout_ms, bool allow_eof, ErrorCode malformed) {
    std::uint8_t len_bytes[4];
    try {
        t.read_exact(len_bytes, timeout_ms);
    } catch (const Error& e) {
        if (allow_eof && e.code() == ErrorCode::DecoderFailure) {
            return false;
        }
        throw;
    }
    std::uint32_t len = 0;
    io::Reader(len_bytes).get(len);
    MIAS_THROW_IF_NOT(len > 0 && len <= kMaxHeaderBytes, malformed,
                      "frame header length " + std::to_string(len) + " out of range");
    std::string text(len, '\0');
    t.read_exact({reinterpret_cast<std::uint8_t*>(text.data()), text.size()}, timeout_ms);
    out = json::parse(text, nullptr, false);
    MIAS_THROW_IF_NOT(!out.is_discarded() && out.is_object(), malformed, "frame header is not a JSON object");
    return true;
}

std::pair<int, int> shape_of(const json& j, const char* key, ErrorCode malformed) {
    const auto it = j.find(key);
    MIAS_THROW_IF_NOT(it != j.end() && it->is_array() && it->size() == 2 && (*it)[0].is_number_integer() &&
                          (*it)[1].is_number_integer(),
                      malformed, std::string("missing or invalid '") + key + "'");
    const auto h = (*it)[0].get<long long>();
    const auto w = (*it)[1].get<long long>();
    MIAS_THROW_IF_NOT(h > 0 && w > 0 && h <= 1 << 16 && w <= 1 << 16, malformed,
                      std::string("'") + key + "' out of range");
    return {static_cast<int>(h), static_cast<int>(w)};
}

} // namespace

std::vector<std::uint8_t> pack_mask(const BinaryMask& mask) {
    std::vector<std::uint8_t> out(packed_bytes(mask.height, mask.width), 0);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i]) {
            out[i >> 3] |= static_cast<std::uint8_t>(0x80u >> (i & 7));
        }
    }
    return out;
}

BinaryMask unpack_mask(std::span<const std::uint8_t> bytes, int height, int width) {
    BinaryMask mask(height, width);
    MIAS_THROW_IF_NOT(bytes.size() == packed_bytes(height, width), ErrorCode::MalformedResponse,
                      "packed mask has the wrong length");
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        mask.bits[i] = (bytes[i >> 3] >> (7 - (i & 7))) & 1u;
    }
    return mask;
}

std::vector<std::uint8_t> encode_request(const DecoderRequest& request) {
    MIAS_THROW_IF_NOT(request.map.size() == static_cast<std::size_t>(request.height) * request.width,
                      ErrorCode::ShapeMismatch, "request map does not match map_shape");
    json header;
    header["version"] = request.version;
    header["image_id"] = request.image_id;
    header["prompt"] = prompt_json(request.prompt);
    header["map_shape"] = json::array({request.height, request.width});
    header["embedding_ref"] = request.embedding_ref;
    std::vector<std::uint8_t> buf;
    append_frame(buf, header);
    buf.reserve(buf.size() + request.map.size() * 4);
    for (float v : request.map) {
        io::append(buf, v);
    }
    return buf;
}

std::vector<std::uint8_t> encode_response(const DecoderResponse& response) {
    MIAS_THROW_IF_NOT(response.masks.size() == response.confidences.size(), ErrorCode::InvalidArgument,
                      "one confidence per mask");
    json header;
    header["image_id"] = response.image_id;
    header["mask_shape"] = json::array({response.height, response.width});
    header["confidences"] = response.confidences;
    std::vector<std::uint8_t> buf;
    append_frame(buf, header);
    for (const BinaryMask& m : response.masks) {
        MIAS_THROW_IF_NOT(m.height == response.height && m.width == response.width, ErrorCode::ShapeMismatch,
                          "mask shape differs from mask_shape");
        const auto packed = pack_mask(m);
        io::put_bytes(buf, packed.data(), packed.size());
    }
    return buf;
}

std::vector<std::uint8_t> encode_error(const std::string& image_id, const std::string& message,
                                       const std::string& code) {
    json header;
    header["image_id"] = image_id;
    header["error"] = message;
    header["code"] = code;
    std::vector<std::uint8_t> buf;
    append_frame(buf, header);
    return buf;
}

bool read_request(Transport& transport, DecoderRequest& out, int timeout_ms) try {
    json header;
    if (!read_header(transport, header, timeout_ms, true, ErrorCode::MalformedResponse)) {
        return false;
    }
    const auto version = header.value("version", -1);
    MIAS_THROW_IF_NOT(version == kProtocolVersion, ErrorCode::ProtocolVersion,
                      "unsupported protocol version " + std::to_string(version));
    out = DecoderRequest{};
    out.version = version;
    out.image_id = header.value("image_id", std::string{});
    out.embedding_ref = header.value("embedding_ref", std::string{});
    std::tie(out.height, out.width) = shape_of(header, "map_shape", ErrorCode::MalformedResponse);

    const json& p = header.at("prompt");
    const std::string type = p.value("type", std::string{});
    const json& coords = p.at("coords");
    if (type == "point") {
        MIAS_THROW_IF_NOT(coords.is_array() && coords.size() == 2, ErrorCode::MalformedResponse,
                          "point prompt needs [x, y]");
        out.prompt = PointPrompt{coords[0].get<double>(), coords[1].get<double>(), PointKind::CenterOfGravity};
    } else if (type == "boxes") {
        BoxPromptSet set;
        for (const json& b : coords) {
            MIAS_THROW_IF_NOT(b.is_array() && b.size() == 4, ErrorCode::MalformedResponse, "box needs 4 coords");
            set.boxes.push_back({b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()});
        }
        out.prompt = std::move(set);
    } else {
        throw Error(ErrorCode::MalformedResponse, "unknown prompt type '" + type + "'");
    }

    const std::size_t n = static_cast<std::size_t>(out.height) * out.width;
    std::vector<std::uint8_t> raw(n * 4);
    transport.read_exact(raw, timeout_ms);
    out.map.resize(n);
    io::Reader r(raw);
    r.get_floats(out.map);
    return true;
} catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("malformed request header: ") + e.what());
}

DecoderResponse read_response(Transport& transport, int timeout_ms) try {
    json header;
    read_header(transport, header, timeout_ms, false, ErrorCode::MalformedResponse);
    if (header.contains("error")) {
        const std::string code = header.value("code", std::string{});
        const std::string msg = "decoder error for '" + header.value("image_id", std::string{}) +
                                "': " + header["error"].dump();
        throw Error(code == "protocol-version" ? ErrorCode::ProtocolVersion : ErrorCode::DecoderFailure, msg);
    }
    if (header.contains("version")) {
        MIAS_THROW_IF_NOT(header["version"] == kProtocolVersion, ErrorCode::ProtocolVersion,
                          "decoder speaks protocol version " + header["version"].dump());
    }
    DecoderResponse out;
    MIAS_THROW_IF_NOT(header.contains("image_id") && header["image_id"].is_string(), ErrorCode::MalformedResponse,
                      "response lacks image_id");
    out.image_id = header["image_id"].get<std::string>();
    std::tie(out.height, out.width) = shape_of(header, "mask_shape", ErrorCode::MalformedResponse);
    const auto conf = header.find("confidences");
    MIAS_THROW_IF_NOT(conf != header.end() && conf->is_array() && conf->size() <= kMaxMasks,
                      ErrorCode::MalformedResponse, "response lacks a confidences list");
    for (const json& c : *conf) {
        MIAS_THROW_IF_NOT(c.is_number(), ErrorCode::MalformedResponse, "non-numeric confidence");
        out.confidences.push_back(c.get<float>());
    }
    // Drain every announced mask so the stream stays framed, then validate.
    std::vector<std::uint8_t> packed(packed_bytes(out.height, out.width));
    for (std::size_t k = 0; k < out.confidences.size(); ++k) {
        transport.read_exact(packed, timeout_ms);
        out.masks.push_back(unpack_mask(packed, out.height, out.width));
    }
    MIAS_THROW_IF_NOT(out.masks.size() == 3, ErrorCode::MalformedResponse,
                      "expected 3 masks, decoder sent " + std::to_string(out.masks.size()));
    return out;
} catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("malformed response header: ") + e.what());
}

DecoderResponse external_decode(Transport& transport, const DecoderRequest& request, int timeout_ms) {
    transport.write_all(encode_request(request));
    DecoderResponse response = read_response(transport, timeout_ms);
    MIAS_THROW_IF_NOT(response.image_id == request.image_id, ErrorCode::MalformedResponse,
                      "response for '" + response.image_id + "' does not match request '" + request.image_id + "'");
    MIAS_THROW_IF_NOT(response.height == request.height && response.width == request.width,
                      ErrorCode::MalformedResponse, "mask_shape does not match map_shape");
    return response;
}

} // namespace mias
