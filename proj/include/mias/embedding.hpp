// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mias/types.hpp"

namespace mias {

struct ToyEncoderConfig {
    int grid_height = 64;
    int grid_width = 64;
    int out_dim = 256;
    std::uint64_t seed = 42;
};

// Deterministic stand-in for a learned encoder: each image block of
// (H / grid_height) x (W / grid_width) pixels is flattened (row, col, channel)
// and projected by a fixed Gaussian matrix scaled by 1 / sqrt(block length).
class ToyEncoder {
  public:
    ToyEncoder(const ToyEncoderConfig& config, int block_height, int block_width, int channels);

    // Builds an encoder sized for images of the given shape.
    static ToyEncoder for_image(const ToyEncoderConfig& config, int height, int width, int channels);

    EmbeddingGrid encode(const Image& image, std::string image_id = {}) const;

    const ToyEncoderConfig& config() const { return config_; }
    int block_height() const { return block_h_; }
    int block_width() const { return block_w_; }
    int channels() const { return channels_; }
    int input_dim() const { return block_h_ * block_w_ * channels_; }

    // Entry (out, k) of the projection; out in [0, out_dim), k in [0, input_dim).
    float weight(int out, int k) const {
        return transposed_[static_cast<std::size_t>(k) * config_.out_dim + out];
    }

  private:
    ToyEncoderConfig config_;
    int block_h_;
    int block_w_;
    int channels_;
    std::vector<float> transposed_; // input_dim x out_dim
};

EmbeddingGrid toy_encode(const Image& image, const ToyEncoderConfig& config, std::string image_id = {});

// Embedding container: "MIASEMB1", u32 count, u32 C, u32 Hg, u32 Wg,
// u32 id-table offset, count records of C*Hg*Wg little-endian float32
// (C-major), then count length-prefixed (u32) UTF-8 ids in record order.
inline constexpr char kEmbeddingMagic[8] = {'M', 'I', 'A', 'S', 'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmbeddingHeaderBytes = 8 + 5 * 4;

class EmbeddingWriter {
  public:
    explicit EmbeddingWriter(const std::filesystem::path& path);
    ~EmbeddingWriter();
    EmbeddingWriter(const EmbeddingWriter&) = delete;
    EmbeddingWriter& operator=(const EmbeddingWriter&) = delete;

    void add(const EmbeddingGrid& grid);
    // Writes the id table and patches the header. Returns the record count.
    std::uint32_t finish();

  private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::vector<std::string> ids_;
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    bool finished_ = false;
};

std::uint32_t write_embeddings(std::span<const EmbeddingGrid> grids, const std::filesystem::path& path);

struct EmbeddingShape {
    int channels = 0;
    int height = 0;
    int width = 0;
    bool operator==(const EmbeddingShape&) const = default;
};

// Streams records in file order. The header and id table are validated on
// open; records are read one at a time.
class EmbeddingReader {
  public:
    explicit EmbeddingReader(const std::filesystem::path& path,
                             std::optional<EmbeddingShape> expected = std::nullopt);

    std::uint32_t count() const { return count_; }
    EmbeddingShape shape() const { return shape_; }
    const std::vector<std::string>& ids() const { return ids_; }

    std::optional<EmbeddingGrid> next();
    // Random access by record index.
    EmbeddingGrid read(std::uint32_t index);

  private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::uint32_t count_ = 0;
    EmbeddingShape shape_;
    std::vector<std::string> ids_;
    std::uint32_t cursor_ = 0;
};

std::vector<EmbeddingGrid> read_embeddings(const std::filesystem::path& path);

} // namespace mias
