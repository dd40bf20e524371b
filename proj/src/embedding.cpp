// SPDX-License-Identifier: Apache-2.0
#include "mias/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "binary_io.hpp"
#include "mias/error.hpp"
#include "mias/random.hpp"

namespace mias {

ToyEncoder::ToyEncoder(const ToyEncoderConfig& config, int block_height, int block_width, int channels)
    : config_(config), block_h_(block_height), block_w_(block_width), channels_(channels) {
    MIAS_THROW_IF_NOT(config.grid_height > 0 && config.grid_width > 0 && config.out_dim > 0,
                      ErrorCode::InvalidArgument, "toy encoder grid and output dims must be positive");
    MIAS_THROW_IF_NOT(block_height > 0 && block_width > 0 && channels > 0, ErrorCode::InvalidArgument,
                      "toy encoder block dims must be positive");
    const int in_dim = input_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    // Drawn row by row of the C x in_dim matrix, stored transposed for the
    // axpy-style encode loop.
    Rng rng(config.seed);
    transposed_.assign(static_cast<std::size_t>(in_dim) * config.out_dim, 0.0f);
    for (int out = 0; out < config.out_dim; ++out) {
        for (int k = 0; k < in_dim; ++k) {
            transposed_[static_cast<std::size_t>(k) * config.out_dim + out] =
                static_cast<float>(rng.normal() * scale);
        }
    }
}

ToyEncoder ToyEncoder::for_image(const ToyEncoderConfig& config, int height, int width, int channels) {
    MIAS_THROW_IF_NOT(config.grid_height > 0 && config.grid_width > 0, ErrorCode::InvalidArgument,
                      "toy encoder grid dims must be positive");
    MIAS_THROW_IF_NOT(height % config.grid_height == 0 && width % config.grid_width == 0 &&
                          height >= config.grid_height && width >= config.grid_width,
                      ErrorCode::DimensionMismatch,
                      "image " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible into a " + std::to_string(config.grid_height) + "x" +
                          std::to_string(config.grid_width) + " grid");
    return ToyEncoder(config, height / config.grid_height, width / config.grid_width, channels);
}

EmbeddingGrid ToyEncoder::encode(const Image& image, std::string image_id) const {
    MIAS_THROW_IF_NOT(image.height == block_h_ * config_.grid_height &&
                          image.width == block_w_ * config_.grid_width && image.channels == channels_,
                      ErrorCode::DimensionMismatch,
                      "image " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                          std::to_string(image.channels) + " does not match encoder block " +
                          std::to_string(block_h_) + "x" + std::to_string(block_w_) + "x" +
                          std::to_string(channels_));
    const int out_dim = config_.out_dim;
    EmbeddingGrid grid(std::move(image_id), out_dim, config_.grid_height, config_.grid_width);
    std::vector<float> acc(static_cast<std::size_t>(out_dim));
    const std::size_t row_len = static_cast<std::size_t>(block_w_) * channels_;
    for (int gy = 0; gy < config_.grid_height; ++gy) {
        for (int gx = 0; gx < config_.grid_width; ++gx) {
            std::fill(acc.begin(), acc.end(), 0.0f);
            int k = 0;
            for (int dy = 0; dy < block_h_; ++dy) {
                const float* row = &image.pixels[(static_cast<std::size_t>(gy * block_h_ + dy) * image.width +
                                                  static_cast<std::size_t>(gx) * block_w_) *
                                                 channels_];
                for (std::size_t t = 0; t < row_len; ++t, ++k) {
                    const float x = row[t];
                    if (x == 0.0f) {
                        continue;
                    }
                    const float* w = &transposed_[static_cast<std::size_t>(k) * out_dim];
                    for (int c = 0; c < out_dim; ++c) {
                        acc[c] += x * w[c];
                    }
                }
            }
            for (int c = 0; c < out_dim; ++c) {
                grid.at(c, gy, gx) = acc[c];
            }
        }
    }
    return grid;
}

EmbeddingGrid toy_encode(const Image& image, const ToyEncoderConfig& config, std::string image_id) {
    return ToyEncoder::for_image(config, image.height, image.width, image.channels)
        .encode(image, std::move(image_id));
}

// ---------------------------------------------------------------------------

EmbeddingWriter::EmbeddingWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    MIAS_THROW_IF_NOT(out_.good(), ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out_.write(kEmbeddingMagic, sizeof(kEmbeddingMagic));
    for (int i = 0; i < 5; ++i) {
        io::put<std::uint32_t>(out_, 0);
    }
}

EmbeddingWriter::~EmbeddingWriter() {
    if (!finished_) {
        try {
            finish();
        } catch (...) {
        }
    }
}

void EmbeddingWriter::add(const EmbeddingGrid& grid) {
    MIAS_THROW_IF_NOT(!finished_, ErrorCode::InvalidArgument, "writer already finished");
    MIAS_THROW_IF_NOT(grid.features.size() ==
                          static_cast<std::size_t>(grid.channels) * grid.height * grid.width,
                      ErrorCode::DimensionMismatch, "grid feature count does not match its shape");
    if (ids_.empty()) {
        channels_ = grid.channels;
        height_ = grid.height;
        width_ = grid.width;
    } else {
        MIAS_THROW_IF_NOT(grid.channels == channels_ && grid.height == height_ && grid.width == width_,
                          ErrorCode::HeterogeneousShape,
                          "grid '" + grid.image_id + "' has a different shape than earlier records");
    }
    io::put_floats(out_, grid.features);
    MIAS_THROW_IF_NOT(out_.good(), ErrorCode::Io, "write failed for " + path_.string());
    ids_.push_back(grid.image_id);
}

std::uint32_t EmbeddingWriter::finish() {
    if (finished_) {
        return static_cast<std::uint32_t>(ids_.size());
    }
    finished_ = true;
    const auto offset = static_cast<std::uint64_t>(out_.tellp());
    MIAS_THROW_IF_NOT(offset <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::Io,
                      "embedding container exceeds the 4 GiB id-table offset limit; split the file");
    for (const std::string& id : ids_) {
        io::put<std::uint32_t>(out_, static_cast<std::uint32_t>(id.size()));
        out_.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    out_.seekp(sizeof(kEmbeddingMagic));
    io::put<std::uint32_t>(out_, static_cast<std::uint32_t>(ids_.size()));
    io::put<std::uint32_t>(out_, static_cast<std::uint32_t>(channels_));
    io::put<std::uint32_t>(out_, static_cast<std::uint32_t>(height_));
    io::put<std::uint32_t>(out_, static_cast<std::uint32_t>(width_));
    io::put<std::uint32_t>(out_, static_cast<std::uint32_t>(offset));
    out_.flush();
    MIAS_THROW_IF_NOT(out_.good(), ErrorCode::Io, "write failed for " + path_.string());
    out_.close();
    return static_cast<std::uint32_t>(ids_.size());
}

std::uint32_t write_embeddings(std::span<const EmbeddingGrid> grids, const std::filesystem::path& path) {
    EmbeddingWriter writer(path);
    for (const EmbeddingGrid& g : grids) {
        writer.add(g);
    }
    return writer.finish();
}

// ---------------------------------------------------------------------------

EmbeddingReader::EmbeddingReader(const std::filesystem::path& path, std::optional<EmbeddingShape> expected)
    : path_(path), in_(path, std::ios::binary) {
    MIAS_THROW_IF_NOT(in_.good(), ErrorCode::Io, "cannot open " + path.string());
    const std::uint64_t file_size = std::filesystem::file_size(path);
    char magic[sizeof(kEmbeddingMagic)];
    MIAS_THROW_IF_NOT(in_.read(magic, sizeof(magic)) &&
                          std::memcmp(magic, kEmbeddingMagic, sizeof(magic)) == 0,
                      ErrorCode::CorruptHeader, path.string() + " is not an embedding container");
    std::uint32_t c = 0, h = 0, w = 0, offset = 0;
    MIAS_THROW_IF_NOT(io::get(in_, count_) && io::get(in_, c) && io::get(in_, h) && io::get(in_, w) &&
                          io::get(in_, offset),
                      ErrorCode::CorruptHeader, path.string() + ": short header");
    const bool shape_ok = c > 0 && h > 0 && w > 0 && c <= (1u << 20) && h <= (1u << 16) && w <= (1u << 16);
    MIAS_THROW_IF_NOT(shape_ok || (count_ == 0 && c == 0 && h == 0 && w == 0), ErrorCode::CorruptHeader,
                      path.string() + ": implausible record shape");
    MIAS_THROW_IF_NOT(offset >= kEmbeddingHeaderBytes, ErrorCode::CorruptHeader,
                      path.string() + ": id-table offset inside the header");
    MIAS_THROW_IF_NOT(offset <= file_size, ErrorCode::TruncatedRecord,
                      path.string() + ": file ends before the id table");
    shape_ = {static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)};
    if (expected && count_ > 0) {
        MIAS_THROW_IF_NOT(*expected == shape_, ErrorCode::DimensionMismatch,
                          path.string() + ": records are " + std::to_string(c) + "x" + std::to_string(h) +
                              "x" + std::to_string(w) + ", expected " + std::to_string(expected->channels) +
                              "x" + std::to_string(expected->height) + "x" + std::to_string(expected->width));
    }
    const std::uint64_t record_bytes = static_cast<std::uint64_t>(c) * h * w * sizeof(float);
    const std::uint64_t records_end = kEmbeddingHeaderBytes + record_bytes * count_;
    MIAS_THROW_IF_NOT(records_end <= offset, ErrorCode::TruncatedRecord,
                      path.string() + ": header declares " + std::to_string(count_) + " records but only " +
                          std::to_string((offset - kEmbeddingHeaderBytes) / std::max<std::uint64_t>(record_bytes, 1)) +
                          " fit");
    MIAS_THROW_IF_NOT(records_end == offset, ErrorCode::CorruptHeader,
                      path.string() + ": unexpected bytes between records and id table");

    in_.seekg(offset);
    ids_.reserve(count_);
    for (std::uint32_t i = 0; i < count_; ++i) {
        std::uint32_t len = 0;
        MIAS_THROW_IF_NOT(io::get(in_, len) && len <= file_size, ErrorCode::TruncatedRecord,
                          path.string() + ": id table ends early");
        std::string id(len, '\0');
        MIAS_THROW_IF_NOT(in_.read(id.data(), len), ErrorCode::TruncatedRecord,
                          path.string() + ": id table ends early");
        ids_.push_back(std::move(id));
    }
    in_.seekg(kEmbeddingHeaderBytes);
}

EmbeddingGrid EmbeddingReader::read(std::uint32_t index) {
    MIAS_THROW_IF_NOT(index < count_, ErrorCode::InvalidArgument, "record index out of range");
    const std::uint64_t record_floats = static_cast<std::uint64_t>(shape_.channels) * shape_.height * shape_.width;
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(kEmbeddingHeaderBytes + record_floats * sizeof(float) * index));
    EmbeddingGrid grid(ids_[index], shape_.channels, shape_.height, shape_.width);
    MIAS_THROW_IF_NOT(io::get_floats(in_, grid.features), ErrorCode::TruncatedRecord,
                      path_.string() + ": record " + std::to_string(index) + " is truncated");
    cursor_ = index + 1;
    return grid;
}

std::optional<EmbeddingGrid> EmbeddingReader::next() {
    if (cursor_ >= count_) {
        return std::nullopt;
    }
    return read(cursor_);
}

std::vector<EmbeddingGrid> read_embeddings(const std::filesystem::path& path) {
    EmbeddingReader reader(path);
    std::vector<EmbeddingGrid> out;
    out.reserve(reader.count());
    while (auto g = reader.next()) {
        out.push_back(std::move(*g));
    }
    return out;
}

} // namespace mias
