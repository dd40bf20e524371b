// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mias/kernels.hpp"

namespace mias {

// Exact nearest-neighbor search over a row-major float matrix, accelerated by
// an int8 screening pass. Each stored vector and each query is quantized with
// a per-vector scale; the quantized inner product plus a Cauchy-Schwarz bound
// on the quantization residuals gives a lower and an upper bound on every
// squared distance. Only vectors whose lower bound can still beat the best
// upper bound are refined with the exact float kernel, so results equal a full
// scan with that kernel.
class ScreenIndex {
  public:
    ScreenIndex() = default;
    ScreenIndex(const float* data, std::size_t n, std::size_t dim);

    std::size_t size() const { return n_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return n_ == 0; }

    // For each query: squared distance to and index of the nearest row of
    // `data` (the matrix the index was built from). Ties go to the lowest index.
    void search(const float* data, const float* queries, std::size_t n_queries, float* out_sq_dist,
                std::uint32_t* out_index, const simd::KernelTable& kernels = simd::active()) const;

    struct Stats {
        std::size_t candidates = 0;
        std::size_t refined = 0;
    };
    // Counters from the most recent search on this thread.
    static Stats last_stats();

    // Bytes of packed codes (for tests).
    const std::vector<std::uint8_t>& codes() const { return codes_; }
    std::size_t groups() const { return groups_; }

  private:
    std::size_t n_ = 0;
    std::size_t dim_ = 0;
    std::size_t groups_ = 0;
    std::size_t panels_ = 0;
    std::vector<std::uint8_t> codes_;
    std::vector<float> scale_;
    std::vector<float> norm_sq_;
    std::vector<float> hat_norm_;
    std::vector<float> error_;
    float max_norm_sq_ = 0.0f;
    float max_hat_norm_ = 0.0f;
};

// Quantizes one vector to int8 codes in [-127, 127] with scale max|x| / 127.
struct QuantizedVector {
    float scale = 0.0f;
    float norm_sq = 0.0f;
    float norm = 0.0f;
    float hat_norm = 0.0f; // ||scale * codes||, rounded up
    float error = 0.0f;    // ||x - scale * codes||, rounded up
    std::int32_t code_sum = 0;
};

QuantizedVector quantize(const float* x, std::size_t dim, std::int8_t* codes_out);

} // namespace mias
