// SPDX-License-Identifier: Apache-2.0
#include "mias/screening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mias/error.hpp"

namespace mias {

using simd::Candidate;
using simd::kGroupDims;
using simd::kPanelGroupBytes;
using simd::kPanelWidth;
using simd::kQueryBlock;

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

// Panels scanned per pass over the query set; sized so the packed codes of a
// chunk stay in L2 while every query block streams over it.
constexpr std::size_t kChunkBytes = 512 * 1024;

float round_up(double v) {
    const float f = static_cast<float>(v);
    return static_cast<double>(f) >= v ? f : std::nextafter(f, kInf);
}

thread_local ScreenIndex::Stats g_last_stats;

} // namespace

QuantizedVector quantize(const float* x, std::size_t dim, std::int8_t* codes_out) {
    QuantizedVector q;
    double norm_sq = 0.0;
    float amax = 0.0f;
    for (std::size_t k = 0; k < dim; ++k) {
        norm_sq += static_cast<double>(x[k]) * x[k];
        amax = std::max(amax, std::fabs(x[k]));
    }
    q.norm_sq = static_cast<float>(norm_sq);
    q.norm = static_cast<float>(std::sqrt(norm_sq));
    if (amax == 0.0f) {
        std::fill(codes_out, codes_out + dim, std::int8_t{0});
        return q;
    }
    q.scale = amax / 127.0f;
    const double scale = q.scale;
    double hat_sq = 0.0;
    double err_sq = 0.0;
    std::int32_t sum = 0;
    for (std::size_t k = 0; k < dim; ++k) {
        const double c = std::clamp(std::nearbyint(x[k] / scale), -127.0, 127.0);
        codes_out[k] = static_cast<std::int8_t>(c);
        sum += static_cast<std::int32_t>(c);
        const double r = scale * c;
        hat_sq += r * r;
        err_sq += (x[k] - r) * (x[k] - r);
    }
    q.code_sum = sum;
    // Slightly inflated: the bounds need these to be upper estimates.
    q.hat_norm = round_up(std::sqrt(hat_sq) * (1.0 + 1e-12));
    q.error = round_up(std::sqrt(err_sq) * (1.0 + 1e-12));
    return q;
}

ScreenIndex::ScreenIndex(const float* data, std::size_t n, std::size_t dim) : n_(n), dim_(dim) {
    MIAS_THROW_IF_NOT(dim > 0, ErrorCode::InvalidArgument, "screen index needs dim > 0");
    MIAS_THROW_IF_NOT(n < std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument,
                      "screen index supports fewer than 2^32 vectors");
    groups_ = (dim + kGroupDims - 1) / kGroupDims;
    panels_ = (n + kPanelWidth - 1) / kPanelWidth;
    const std::size_t padded_n = panels_ * kPanelWidth;
    const std::size_t padded_dim = groups_ * kGroupDims;

    codes_.assign(panels_ * groups_ * kPanelGroupBytes, std::uint8_t{128});
    scale_.assign(padded_n, 0.0f);
    norm_sq_.assign(padded_n, kInf);
    hat_norm_.assign(padded_n, 0.0f);
    error_.assign(padded_n, 0.0f);

    std::vector<std::int8_t> code(padded_dim, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const QuantizedVector qv = quantize(data + i * dim, dim, code.data());
        scale_[i] = qv.scale;
        norm_sq_[i] = qv.norm_sq;
        hat_norm_[i] = qv.hat_norm;
        error_[i] = qv.error;
        max_norm_sq_ = std::max(max_norm_sq_, qv.norm_sq);
        max_hat_norm_ = std::max(max_hat_norm_, qv.hat_norm);
        const std::size_t panel = i / kPanelWidth;
        const std::size_t lane = i % kPanelWidth;
        std::uint8_t* dst = codes_.data() + panel * groups_ * kPanelGroupBytes + lane * kGroupDims;
        for (std::size_t g = 0; g < groups_; ++g) {
            for (std::size_t t = 0; t < kGroupDims; ++t) {
                dst[g * kPanelGroupBytes + t] =
                    static_cast<std::uint8_t>(static_cast<int>(code[g * kGroupDims + t]) + 128);
            }
        }
    }
}

ScreenIndex::Stats ScreenIndex::last_stats() { return g_last_stats; }

void ScreenIndex::search(const float* data, const float* queries, std::size_t n_queries, float* out_sq_dist,
                         std::uint32_t* out_index, const simd::KernelTable& kernels) const {
    MIAS_THROW_IF_NOT(n_ > 0, ErrorCode::NotFrozen, "search on an empty screen index");
    Stats stats;
    const std::size_t padded_dim = groups_ * kGroupDims;

    // Relative error of the exact float kernel on a sum of `dim` squares,
    // generously over-estimated; candidates are kept if their lower bound
    // could reach the best refined distance under that error.
    const double rho = 4.0 * static_cast<double>(dim_ + 2) * 0x1.0p-24;
    const float threshold_factor = static_cast<float>((1.0 + rho) / (1.0 - rho) * (1.0 + 1e-6));

    std::vector<std::int8_t> qcodes(n_queries * padded_dim, 0);
    std::vector<std::vector<Candidate>> candidates(n_queries);
    const std::size_t n_blocks = (n_queries + kQueryBlock - 1) / kQueryBlock;
    std::vector<simd::ScreenQueries> blocks(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        simd::ScreenQueries& blk = blocks[b];
        const std::size_t first = b * kQueryBlock;
        blk.count = std::min(kQueryBlock, n_queries - first);
        blk.codes = qcodes.data() + first * padded_dim;
        blk.threshold_factor = threshold_factor;
        for (std::size_t t = 0; t < blk.count; ++t) {
            const std::size_t q = first + t;
            const QuantizedVector qv = quantize(queries + q * dim_, dim_, qcodes.data() + q * padded_dim);
            blk.scale[t] = qv.scale;
            blk.norm_sq[t] = qv.norm_sq;
            blk.norm[t] = round_up(static_cast<double>(qv.norm) * (1.0 + 1e-7));
            blk.error[t] = qv.error;
            blk.bias[t] = 128 * qv.code_sum;
            // Covers float rounding in the bound arithmetic (a handful of
            // operations on terms no larger than these magnitudes).
            const double magnitude = static_cast<double>(qv.norm_sq) + max_norm_sq_ +
                                     2.0 * static_cast<double>(qv.norm) * max_hat_norm_;
            blk.slack[t] = round_up(1e-6 * magnitude + 1e-30);
            blk.upper[t] = kInf;
            blk.threshold[t] = kInf;
            blk.candidates[t] = &candidates[q];
        }
    }

    const std::size_t panel_bytes = groups_ * kPanelGroupBytes;
    const std::size_t chunk_panels = std::max<std::size_t>(1, kChunkBytes / panel_bytes);
    simd::ScreenPanels panels;
    panels.codes = codes_.data();
    panels.scale = scale_.data();
    panels.norm_sq = norm_sq_.data();
    panels.hat_norm = hat_norm_.data();
    panels.error = error_.data();
    panels.groups = groups_;
    for (std::size_t p0 = 0; p0 < panels_; p0 += chunk_panels) {
        panels.first_panel = p0;
        panels.last_panel = std::min(panels_, p0 + chunk_panels);
        for (simd::ScreenQueries& blk : blocks) {
            kernels.screen(panels, blk);
        }
    }

    for (std::size_t b = 0; b < n_blocks; ++b) {
        const simd::ScreenQueries& blk = blocks[b];
        for (std::size_t t = 0; t < blk.count; ++t) {
            const std::size_t q = b * kQueryBlock + t;
            std::vector<Candidate>& cand = candidates[q];
            stats.candidates += cand.size();
            const float final_threshold = blk.threshold[t];
            auto keep_end = std::partition(cand.begin(), cand.end(), [&](const Candidate& c) {
                return c.lower_bound <= final_threshold;
            });
            std::sort(cand.begin(), keep_end, [](const Candidate& a, const Candidate& b) {
                return a.lower_bound < b.lower_bound || (a.lower_bound == b.lower_bound && a.index < b.index);
            });
            const float* query = queries + q * dim_;
            float best = kInf;
            std::uint32_t best_index = std::numeric_limits<std::uint32_t>::max();
            for (auto it = cand.begin(); it != keep_end; ++it) {
                if (it->lower_bound > best * threshold_factor) {
                    break;
                }
                const float d = kernels.l2_sqr(query, data + static_cast<std::size_t>(it->index) * dim_, dim_);
                ++stats.refined;
                if (d < best || (d == best && it->index < best_index)) {
                    best = d;
                    best_index = it->index;
                }
            }
            MIAS_THROW_IF_NOT(best_index != std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument,
                              "screening produced no candidate (non-finite query?)");
            out_sq_dist[q] = best;
            out_index[q] = best_index;
        }
    }
    g_last_stats = stats;
}

} // namespace mias
