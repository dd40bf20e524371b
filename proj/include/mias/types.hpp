// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mias {

// H x W x channels, row-major, channel fastest; values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          pixels(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Encoder output, C x Hg x Wg (channel-major).
struct EmbeddingGrid {
    std::string image_id;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> features;

    EmbeddingGrid() = default;
    EmbeddingGrid(std::string id, int c, int h, int w)
        : image_id(std::move(id)), channels(c), height(h), width(w),
          features(static_cast<std::size_t>(c) * h * w, 0.0f) {}

    float& at(int c, int y, int x) {
        return features[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return features[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Where each patch sits on the embedding grid: patch (i, j) pools the
// window x window cells rooted at (i * stride, j * stride).
struct PatchGeometry {
    int window = 1;
    int stride = 1;
    int grid_height = 0;
    int grid_width = 0;
};

// Hp x Wp x C patch vectors, row-major over patches.
struct PatchGrid {
    std::string image_id;
    int rows = 0;
    int cols = 0;
    int dim = 0;
    PatchGeometry geometry;
    std::vector<float> vectors;

    std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
    std::span<const float> vector(std::size_t index) const {
        return {vectors.data() + index * dim, static_cast<std::size_t>(dim)};
    }
};

struct ScoreGrid {
    std::string image_id;
    int rows = 0;
    int cols = 0;
    PatchGeometry geometry;
    std::vector<float> scores;

    float at(int i, int j) const { return scores[static_cast<std::size_t>(i) * cols + j]; }
};

struct AnomalyMap {
    std::string image_id;
    int height = 0;
    int width = 0;
    bool normalized = false;
    std::vector<float> values;

    AnomalyMap() = default;
    AnomalyMap(int h, int w, float fill = 0.0f)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits; // one byte per pixel, 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }
    bool operator==(const BinaryMask&) const = default;
};

} // namespace mias
