// SPDX-License-Identifier: Apache-2.0
#pragma once

// Distance and screening kernels. Every routine has a scalar reference
// implementation; SIMD variants are compiled per ISA and one table is picked
// at runtime (override with MIAS_SIMD=scalar|avx2|avx512|neon).

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mias::simd {

enum class Isa { Scalar, Avx2, Avx512, Neon };

std::string_view to_string(Isa isa);

// Bank vectors are packed for screening in panels of kPanelWidth vectors.
// Within a panel, dimension group g (kGroupDims consecutive dims) occupies
// kPanelWidth * kGroupDims bytes: lane 0 dims [4g, 4g+4), lane 1 dims
// [4g, 4g+4), ... Codes are stored biased (code + 128) as unsigned bytes.
inline constexpr std::size_t kPanelWidth = 16;
inline constexpr std::size_t kGroupDims = 4;
inline constexpr std::size_t kPanelGroupBytes = kPanelWidth * kGroupDims;
inline constexpr std::size_t kQueryBlock = 12;

struct Candidate {
    float lower_bound;
    std::uint32_t index;
};

// Per-vector screening data for the packed bank; arrays are padded to a
// multiple of kPanelWidth. Padding lanes carry norm_sq = +inf.
struct ScreenPanels {
    const std::uint8_t* codes = nullptr;
    const float* scale = nullptr;
    const float* norm_sq = nullptr;
    const float* hat_norm = nullptr;
    const float* error = nullptr;
    std::size_t groups = 0;
    std::size_t first_panel = 0;
    std::size_t last_panel = 0;
};

// A block of at most kQueryBlock quantized queries. `upper` and `threshold`
// are running state: upper is the smallest upper bound on the squared
// distance seen so far, threshold = upper * threshold_factor.
struct ScreenQueries {
    std::size_t count = 0;
    const std::int8_t* codes = nullptr; // count rows of groups * kGroupDims bytes
    float scale[kQueryBlock] = {};
    float norm_sq[kQueryBlock] = {};
    float norm[kQueryBlock] = {};
    float error[kQueryBlock] = {};
    std::int32_t bias[kQueryBlock] = {}; // 128 * sum(codes)
    float slack[kQueryBlock] = {};
    float upper[kQueryBlock] = {};
    float threshold[kQueryBlock] = {};
    float threshold_factor = 1.0f;
    std::vector<Candidate>* candidates[kQueryBlock] = {};
};

struct KernelTable {
    Isa isa;
    // Squared Euclidean distance.
    float (*l2_sqr)(const float* a, const float* b, std::size_t dim);
    // out[i] = l2_sqr(query, rows + i * dim); bitwise equal to the single-pair routine.
    void (*l2_sqr_rows)(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
                        float* out);
    // out[q * kPanelWidth + lane] = sum_k panel[lane][k] * codes[q][k], exact in int32.
    void (*panel_dots)(const std::uint8_t* panel, std::size_t groups, const std::int8_t* codes,
                       std::size_t n_queries, std::int32_t* out);
    // Bounds every (query, bank vector) pair in the panel range and records
    // candidates whose lower bound does not exceed the query's threshold.
    void (*screen)(const ScreenPanels& panels, ScreenQueries& queries);
};

// The table selected for this process (first call decides).
const KernelTable& active();

// Table for a specific ISA, or nullptr when not compiled in or not supported
// by the running CPU.
const KernelTable* table_for(Isa isa);

std::vector<Isa> supported_isas();

namespace detail {
const KernelTable* scalar_table();
const KernelTable* avx2_table();
const KernelTable* avx512_table();
const KernelTable* neon_table();
} // namespace detail

} // namespace mias::simd
