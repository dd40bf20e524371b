// SPDX-License-Identifier: Apache-2.0
#include "mias/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mias/error.hpp"
#include "mias/transport.hpp"
#include "mias/wire_protocol.hpp"

namespace mias {

namespace {

// Region of pixels >= threshold that is 4-connected to the seed.
BinaryMask grow(const AnomalyMap& map, int sx, int sy, float threshold, std::vector<int>& stack) {
    BinaryMask mask(map.height, map.width);
    const int w = map.width;
    mask.at(sy, sx) = 1;
    stack.assign(1, sy * w + sx);
    constexpr int dx[4] = {1, -1, 0, 0};
    constexpr int dy[4] = {0, 0, 1, -1};
    while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cy = cur / w;
        const int cx = cur % w;
        for (int k = 0; k < 4; ++k) {
            const int nx = cx + dx[k];
            const int ny = cy + dy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= map.height) {
                continue;
            }
            std::uint8_t& bit = mask.at(ny, nx);
            if (bit == 0 && map.at(ny, nx) >= threshold) {
                bit = 1;
                stack.push_back(ny * w + nx);
            }
        }
    }
    return mask;
}

void check_point(const AnomalyMap& map, double x, double y) {
    const bool inside = std::isfinite(x) && std::isfinite(y) && x >= 0.0 && y >= 0.0 &&
                        x <= map.width - 1 && y <= map.height - 1;
    if (!inside) {
        std::ostringstream msg;
        msg << "prompt (" << x << ", " << y << ") outside the " << map.width << "x" << map.height
            << " map of '" << map.image_id << "'";
        throw Error(ErrorCode::PromptOutOfBounds, msg.str());
    }
}

void check_shape(const MaskSet& set, const AnomalyMap& map, const std::string& who) {
    for (const BinaryMask& m : set.masks) {
        MIAS_THROW_IF_NOT(m.height == map.height && m.width == map.width &&
                              m.bits.size() == static_cast<std::size_t>(map.height) * map.width,
                          ErrorCode::DecoderFailure,
                          who + " decoder returned a mask of the wrong shape for '" + map.image_id + "'");
    }
}

} // namespace

MaskSet reference_decode(const AnomalyMap& map, const PointPrompt& seed, const Alphas& alphas) {
    MIAS_THROW_IF_NOT(0.0 < alphas.coarse && alphas.coarse < alphas.mid && alphas.mid < alphas.fine &&
                          alphas.fine <= 1.0,
                      ErrorCode::InvalidArgument, "alphas must satisfy 0 < a1 < a2 < a3 <= 1");
    MIAS_THROW_IF_NOT(map.height > 0 && map.width > 0, ErrorCode::InvalidArgument, "empty anomaly map");
    check_point(map, seed.x, seed.y);
    const int sx = std::clamp(static_cast<int>(std::lround(seed.x)), 0, map.width - 1);
    const int sy = std::clamp(static_cast<int>(std::lround(seed.y)), 0, map.height - 1);
    const float v = map.at(sy, sx);

    MaskSet out;
    if (!(v > 0.0f)) {
        BinaryMask only(map.height, map.width);
        only.at(sy, sx) = 1;
        out.masks = {only, only, only};
        return out;
    }
    std::vector<int> stack;
    const double a[3] = {alphas.coarse, alphas.mid, alphas.fine};
    for (int k = 0; k < 3; ++k) {
        out.masks[k] = grow(map, sx, sy, static_cast<float>(a[k] * v), stack);
    }
    return out;
}

ReferenceDecoder::ReferenceDecoder(Alphas alphas) : alphas_(alphas) {}

MaskSet ReferenceDecoder::decode_point(const EmbeddingGrid*, const AnomalyMap& map, const PointPrompt& point) {
    return reference_decode(map, point, alphas_);
}

MaskSet ReferenceDecoder::decode_box(const EmbeddingGrid*, const AnomalyMap& map, const Box& box) {
    const PointPrompt center{(box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0, PointKind::CenterOfGravity};
    return reference_decode(map, center, alphas_);
}

ExternalDecoder::ExternalDecoder(std::unique_ptr<Transport> transport, Options options)
    : transport_(std::move(transport)), options_(std::move(options)) {
    MIAS_THROW_IF_NOT(transport_ != nullptr, ErrorCode::InvalidArgument, "external decoder needs a transport");
}

ExternalDecoder::~ExternalDecoder() = default;

MaskSet ExternalDecoder::round_trip(const AnomalyMap& map, const Prompt& prompt) {
    DecoderRequest request;
    request.image_id = map.image_id;
    request.prompt = prompt;
    request.height = map.height;
    request.width = map.width;
    request.embedding_ref = options_.embedding_ref_prefix + map.image_id;
    request.map = map.values;

    DecoderResponse response;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        response = external_decode(*transport_, request, options_.timeout_ms);
    }
    MaskSet out;
    for (int k = 0; k < 3; ++k) {
        out.masks[k] = std::move(response.masks[k]);
        out.confidences[k] = response.confidences[k];
    }
    return out;
}

MaskSet ExternalDecoder::decode_point(const EmbeddingGrid*, const AnomalyMap& map, const PointPrompt& point) {
    return round_trip(map, point);
}

MaskSet ExternalDecoder::decode_box(const EmbeddingGrid*, const AnomalyMap& map, const Box& box) {
    return round_trip(map, BoxPromptSet{{box}});
}

MaskSet segment(Decoder& decoder, const EmbeddingGrid* embedding, const AnomalyMap& map, const Prompt& prompt) {
    MIAS_THROW_IF_NOT(map.normalized, ErrorCode::InvalidArgument,
                      "segment expects a normalized anomaly map ('" + map.image_id + "')");
    MIAS_THROW_IF_NOT(map.height > 0 && map.width > 0, ErrorCode::InvalidArgument, "empty anomaly map");

    if (const auto* point = std::get_if<PointPrompt>(&prompt)) {
        check_point(map, point->x, point->y);
        MaskSet set = decoder.decode_point(embedding, map, *point);
        check_shape(set, map, decoder.name());
        return set;
    }

    const auto& boxes = std::get<BoxPromptSet>(prompt).boxes;
    for (const Box& b : boxes) {
        MIAS_THROW_IF_NOT(b.x_min <= b.x_max && b.y_min <= b.y_max, ErrorCode::InvalidArgument,
                          "inverted box prompt");
        check_point(map, b.x_min, b.y_min);
        check_point(map, b.x_max, b.y_max);
    }
    MaskSet merged;
    for (BinaryMask& m : merged.masks) {
        m = BinaryMask(map.height, map.width);
    }
    for (const Box& b : boxes) {
        const MaskSet one = decoder.decode_box(embedding, map, b);
        check_shape(one, map, decoder.name());
        for (int k = 0; k < 3; ++k) {
            auto& dst = merged.masks[k].bits;
            const auto& src = one.masks[k].bits;
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] |= src[i];
            }
        }
    }
    return merged;
}

const BinaryMask& select_mask(const MaskSet& set, int rank) {
    MIAS_THROW_IF_NOT(rank >= 1 && rank <= 3, ErrorCode::InvalidArgument,
                      "mask rank must be 1, 2 or 3, got " + std::to_string(rank));
    return set.masks[static_cast<std::size_t>(rank - 1)];
}

} // namespace mias
