// SPDX-License-Identifier: Apache-2.0
#include "mias/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "mias/error.hpp"
#include "mias/hash.hpp"
#include "mias/kernels.hpp"
#include "mias/random.hpp"

namespace mias {

MemoryBank::MemoryBank(int dim, BankConfig config) : dim_(dim), config_(config) {
    MIAS_THROW_IF_NOT(dim >= 0, ErrorCode::InvalidArgument, "bank dim must be >= 0");
    MIAS_THROW_IF_NOT(config.k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
}

MemoryBank MemoryBank::build(std::span<const PatchGrid> grids, const BankConfig& config) {
    MIAS_THROW_IF_NOT(!grids.empty(), ErrorCode::EmptyTrainingSet, "no training patch grids");
    MemoryBank bank(grids.front().dim, config);
    for (const PatchGrid& g : grids) {
        bank.add(g);
    }
    bank.freeze();
    return bank;
}

void MemoryBank::add(const PatchGrid& grid) {
    if (dim_ == 0 && vectors_.empty()) {
        dim_ = grid.dim;
    }
    MIAS_THROW_IF_NOT(grid.dim == dim_, ErrorCode::HeterogeneousShape,
                      "patch grid '" + grid.image_id + "' has dim " + std::to_string(grid.dim) +
                          ", bank has " + std::to_string(dim_));
    add(std::span<const float>(grid.vectors));
}

void MemoryBank::add(std::span<const float> vectors) {
    MIAS_THROW_IF_NOT(!frozen_, ErrorCode::InvalidArgument, "bank is frozen");
    MIAS_THROW_IF_NOT(dim_ > 0 && vectors.size() % static_cast<std::size_t>(dim_) == 0,
                      ErrorCode::DimensionMismatch, "vector block is not a multiple of the bank dim");
    vectors_.insert(vectors_.end(), vectors.begin(), vectors.end());
}

void MemoryBank::freeze() {
    if (frozen_) {
        return;
    }
    MIAS_THROW_IF_NOT(size() >= 1, ErrorCode::EmptyTrainingSet, "memory bank is empty");
    if (config_.index == IndexKind::Ivf) {
        ivf_ = IvfIndex::train(vectors_.data(), size(), static_cast<std::size_t>(dim_), config_.ivf);
    } else if (size() >= config_.screen_min_vectors) {
        const auto dim = static_cast<std::size_t>(dim_);
        if (config_.k == 1) {
            screen_ = ScreenIndex(vectors_.data(), size(), dim);
            if (!screen_discriminates()) {
                screen_ = ScreenIndex();
            }
        }
        if (screen_.empty()) {
            IvfParams params = config_.ivf;
            params.nlist = 0;
            params.train_per_list = 32;
            cluster_.emplace(vectors_.data(), size(), dim, params);
        }
    }
    frozen_ = true;
}

// Screens a few stored rows against the bank. Even these best-case queries
// (exact duplicates) keep too many candidates when the data is concentrated
// relative to its quantization error.
bool MemoryBank::screen_discriminates() const {
    constexpr std::size_t kProbes = 24;
    const std::size_t n = size();
    const auto dim = static_cast<std::size_t>(dim_);
    std::vector<float> queries;
    queries.reserve(kProbes * dim);
    for (std::size_t i = 0; i < kProbes; ++i) {
        const auto row = vector(i * n / kProbes);
        queries.insert(queries.end(), row.begin(), row.end());
    }
    std::vector<float> d(kProbes);
    std::vector<std::uint32_t> ids(kProbes);
    screen_.search(vectors_.data(), queries.data(), kProbes, d.data(), ids.data());
    const double rate = static_cast<double>(ScreenIndex::last_stats().candidates) / (static_cast<double>(kProbes) * n);
    return rate <= config_.screen_max_candidate_rate;
}

std::uint64_t MemoryBank::config_hash() const {
    Fnv1a h;
    h.add(static_cast<std::uint8_t>(config_.index));
    h.add(static_cast<std::uint32_t>(config_.k));
    // Flat search strategies are exact, so they do not enter the hash.
    if (config_.index == IndexKind::Ivf && ivf_) {
        h.add(static_cast<std::uint64_t>(ivf_->nlist()));
        h.add(static_cast<std::uint64_t>(ivf_->nprobe()));
    }
    return h.value();
}

void MemoryBank::require_frozen() const {
    MIAS_THROW_IF_NOT(frozen_, ErrorCode::NotFrozen, "memory bank must be frozen before queries");
}

void MemoryBank::check_query(std::size_t n) const {
    MIAS_THROW_IF_NOT(n == static_cast<std::size_t>(dim_), ErrorCode::DimensionMismatch,
                      "query has dim " + std::to_string(n) + ", bank has " + std::to_string(dim_));
}

float MemoryBank::kth_exact(const float* query) const {
    const simd::KernelTable& kernels = simd::active();
    const std::size_t n = size();
    const auto dim = static_cast<std::size_t>(dim_);
    if (config_.k == 1) {
        float best = std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            best = std::min(best, kernels.l2_sqr(query, vectors_.data() + i * dim, dim));
        }
        return best;
    }
    std::vector<float> d(n);
    kernels.l2_sqr_rows(query, vectors_.data(), n, dim, d.data());
    const std::size_t kth = std::min<std::size_t>(static_cast<std::size_t>(config_.k), n) - 1;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kth), d.end());
    return d[kth];
}

float MemoryBank::exact_nn_distance(std::span<const float> query) const {
    check_query(query.size());
    MIAS_THROW_IF_NOT(size() > 0, ErrorCode::EmptyTrainingSet, "memory bank is empty");
    return std::sqrt(kth_exact(query.data()));
}

float MemoryBank::nn_distance(std::span<const float> query) const {
    require_frozen();
    check_query(query.size());
    if (ivf_) {
        std::vector<float> d;
        std::vector<std::uint32_t> ids;
        ivf_->search(vectors_.data(), query.data(), static_cast<std::size_t>(config_.k), d, ids);
        MIAS_THROW_IF_NOT(!d.empty(), ErrorCode::InvalidArgument, "ivf probe found no vectors");
        return std::sqrt(d.back());
    }
    if (cluster_) {
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(config_.k), size());
        float d[64];
        std::uint32_t ids[64];
        if (k <= 64) {
            cluster_->search(vectors_.data(), query.data(), k, d, ids);
            return std::sqrt(d[k - 1]);
        }
        std::vector<float> dv(k);
        std::vector<std::uint32_t> iv(k);
        cluster_->search(vectors_.data(), query.data(), k, dv.data(), iv.data());
        return std::sqrt(dv[k - 1]);
    }
    return std::sqrt(kth_exact(query.data()));
}

void MemoryBank::score_batch(std::span<const float> queries, std::span<float> out) const {
    require_frozen();
    const auto dim = static_cast<std::size_t>(dim_);
    MIAS_THROW_IF_NOT(queries.size() % dim == 0, ErrorCode::DimensionMismatch,
                      "query block is not a multiple of the bank dim");
    const std::size_t n = queries.size() / dim;
    MIAS_THROW_IF_NOT(out.size() == n, ErrorCode::DimensionMismatch, "output size does not match query count");
    if (n == 0) {
        return;
    }
    if (screened()) {
        std::vector<std::uint32_t> ids(n);
        screen_.search(vectors_.data(), queries.data(), n, out.data(), ids.data());
        for (float& d : out) {
            d = std::sqrt(d);
        }
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = nn_distance(queries.subspan(i * dim, dim));
    }
}

ScoreGrid MemoryBank::score_patches(const PatchGrid& patches) const {
    require_frozen();
    check_query(static_cast<std::size_t>(patches.dim));
    ScoreGrid out;
    out.image_id = patches.image_id;
    out.rows = patches.rows;
    out.cols = patches.cols;
    out.geometry = patches.geometry;
    out.scores.resize(patches.count());
    score_batch(patches.vectors, out.scores);
    return out;
}

// File: "MIASBNK1", u32 N, u32 C, u8 index kind, N*C float32 little-endian,
// then for non-flat kinds a u64 byte length and the index payload.
void MemoryBank::save(const std::filesystem::path& path) const {
    require_frozen();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    MIAS_THROW_IF_NOT(out.good(), ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(kBankMagic, sizeof(kBankMagic));
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(size()));
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(config_.index));
    io::put_floats(out, vectors_);
    if (config_.index == IndexKind::Ivf) {
        const std::vector<std::uint8_t> payload = ivf_->serialize();
        io::put<std::uint64_t>(out, payload.size());
        out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    }
    out.flush();
    MIAS_THROW_IF_NOT(out.good(), ErrorCode::Io, "write failed for " + path.string());
}

MemoryBank MemoryBank::load(const std::filesystem::path& path, int k) {
    std::ifstream in(path, std::ios::binary);
    MIAS_THROW_IF_NOT(in.good(), ErrorCode::Io, "cannot open bank file " + path.string());
    const std::uint64_t file_size = std::filesystem::file_size(path);
    char magic[sizeof(kBankMagic)];
    MIAS_THROW_IF_NOT(in.read(magic, sizeof(magic)) && std::memcmp(magic, kBankMagic, sizeof(magic)) == 0,
                      ErrorCode::CorruptHeader, path.string() + " is not a memory bank file (bad magic or version)");
    std::uint32_t n = 0, c = 0;
    std::uint8_t kind = 0;
    MIAS_THROW_IF_NOT(io::get(in, n) && io::get(in, c) && io::get(in, kind), ErrorCode::CorruptHeader,
                      path.string() + ": short header");
    MIAS_THROW_IF_NOT(n >= 1 && c >= 1 && kind <= 1, ErrorCode::CorruptHeader, path.string() + ": invalid header");
    const std::uint64_t payload_start = 8 + 4 + 4 + 1 + static_cast<std::uint64_t>(n) * c * sizeof(float);
    MIAS_THROW_IF_NOT(payload_start <= file_size, ErrorCode::TruncatedRecord, path.string() + ": vectors truncated");

    BankConfig config;
    config.index = static_cast<IndexKind>(kind);
    config.k = k;
    MemoryBank bank(static_cast<int>(c), config);
    bank.vectors_.resize(static_cast<std::size_t>(n) * c);
    MIAS_THROW_IF_NOT(io::get_floats(in, bank.vectors_), ErrorCode::TruncatedRecord,
                      path.string() + ": vectors truncated");
    if (config.index == IndexKind::Ivf) {
        std::uint64_t len = 0;
        MIAS_THROW_IF_NOT(io::get(in, len) && payload_start + 8 + len == file_size, ErrorCode::CorruptHeader,
                          path.string() + ": index payload length does not match the file");
        std::vector<std::uint8_t> payload(len);
        MIAS_THROW_IF_NOT(in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(len)),
                          ErrorCode::TruncatedRecord, path.string() + ": index payload truncated");
        bank.ivf_ = IvfIndex::deserialize(payload, n, c);
        bank.frozen_ = true;
    } else {
        MIAS_THROW_IF_NOT(payload_start == file_size, ErrorCode::CorruptHeader,
                          path.string() + ": trailing bytes after a flat bank");
        bank.freeze();
    }
    return bank;
}

MemoryBank MemoryBank::subsample_coreset(double fraction, std::optional<std::size_t> start,
                                         std::uint64_t seed) const {
    require_frozen();
    MIAS_THROW_IF_NOT(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument,
                      "coreset fraction must be in (0, 1]");
    const std::size_t n = size();
    const auto dim = static_cast<std::size_t>(dim_);
    const auto target = std::min<std::size_t>(
        n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9))));
    std::size_t current = start ? *start : static_cast<std::size_t>(Rng(seed).below(n));
    MIAS_THROW_IF_NOT(current < n, ErrorCode::InvalidArgument, "coreset start index out of range");

    const simd::KernelTable& kernels = simd::active();
    std::vector<float> min_d(n, std::numeric_limits<float>::infinity());
    std::vector<float> d(n);
    std::vector<std::uint8_t> taken(n, 0);
    std::vector<std::size_t> chosen;
    chosen.reserve(target);
    while (chosen.size() < target) {
        chosen.push_back(current);
        taken[current] = 1;
        kernels.l2_sqr_rows(vectors_.data() + current * dim, vectors_.data(), n, dim, d.data());
        std::size_t next = 0;
        float far = -1.0f;
        for (std::size_t i = 0; i < n; ++i) {
            min_d[i] = std::min(min_d[i], d[i]);
            if (!taken[i] && min_d[i] > far) {
                far = min_d[i];
                next = i;
            }
        }
        current = next;
    }
    std::sort(chosen.begin(), chosen.end());

    BankConfig config = config_;
    MemoryBank out(dim_, config);
    out.vectors_.reserve(target * dim);
    for (std::size_t i : chosen) {
        out.add(vector(i));
    }
    out.freeze();
    return out;
}

} // namespace mias
