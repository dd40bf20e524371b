// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mias/cluster_index.hpp"
#include "mias/ivf_index.hpp"
#include "mias/screening.hpp"
#include "mias/types.hpp"

namespace mias {

enum class IndexKind : std::uint8_t { Flat = 0, Ivf = 1 };

struct BankConfig {
    IndexKind index = IndexKind::Flat;
    IvfParams ivf;
    // Score = distance to the k-th nearest stored vector (k = 1: nearest).
    int k = 1;
    // Flat banks at least this large get an exact search index: the int8
    // screen when a probe shows it discriminates on this data, cluster
    // pruning otherwise (and always for k > 1).
    std::size_t screen_min_vectors = 4096;
    // Probe queries whose screening candidates exceed this fraction of the
    // bank (on average) make the screen count as ineffective.
    double screen_max_candidate_rate = 0.02;
};

// The union of all training patch vectors. Append with add(), then freeze()
// to build the index; queries are only valid on a frozen bank, and a frozen
// bank is immutable and safe for concurrent queries.
class MemoryBank {
  public:
    explicit MemoryBank(int dim = 0, BankConfig config = {});

    static MemoryBank build(std::span<const PatchGrid> grids, const BankConfig& config = {});

    void add(const PatchGrid& grid);
    void add(std::span<const float> vectors);
    void freeze();

    bool frozen() const { return frozen_; }
    std::size_t size() const { return dim_ == 0 ? 0 : vectors_.size() / dim_; }
    int dim() const { return dim_; }
    const BankConfig& config() const { return config_; }
    std::span<const float> vectors() const { return vectors_; }
    std::span<const float> vector(std::size_t i) const {
        return {vectors_.data() + i * dim_, static_cast<std::size_t>(dim_)};
    }
    // Hash of (index kind, index parameters, k).
    std::uint64_t config_hash() const;
    const IvfIndex* ivf() const { return ivf_ ? &*ivf_ : nullptr; }
    bool screened() const { return !screen_.empty(); }
    bool clustered() const { return cluster_.has_value(); }

    // Anomaly score of one query: L2 distance to its nearest stored vector
    // (k-th nearest when k > 1). Exact for flat banks.
    float nn_distance(std::span<const float> query) const;
    // nn_distance for n row-major queries.
    void score_batch(std::span<const float> queries, std::span<float> out) const;
    ScoreGrid score_patches(const PatchGrid& patches) const;

    // Exhaustive exact scan, independent of the configured index.
    float exact_nn_distance(std::span<const float> query) const;

    void save(const std::filesystem::path& path) const;
    // k is a scoring parameter and is not stored in the file.
    static MemoryBank load(const std::filesystem::path& path, int k = 1);

    // Greedy k-center selection of ceil(fraction * N) vectors. The first
    // center is `start` when given, otherwise drawn from `seed`.
    MemoryBank subsample_coreset(double fraction, std::optional<std::size_t> start = std::nullopt,
                                 std::uint64_t seed = 42) const;

  private:
    void require_frozen() const;
    void check_query(std::size_t n) const;
    float kth_exact(const float* query) const;
    bool screen_discriminates() const;

    int dim_ = 0;
    BankConfig config_;
    std::vector<float> vectors_;
    bool frozen_ = false;
    ScreenIndex screen_;
    std::optional<ClusterIndex> cluster_;
    std::optional<IvfIndex> ivf_;
};

inline constexpr char kBankMagic[8] = {'M', 'I', 'A', 'S', 'B', 'N', 'K', '1'};

} // namespace mias
