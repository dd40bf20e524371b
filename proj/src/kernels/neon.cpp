// SPDX-License-Identifier: Apache-2.0
#include "mias/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include "screen_common.hpp"

#include <arm_neon.h>

#include <cstring>

namespace mias::simd {
namespace {

float l2_sqr(const float* a, const float* b, std::size_t dim) {
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    std::size_t k = 0;
    for (; k + 8 <= dim; k += 8) {
        const float32x4_t d0 = vsubq_f32(vld1q_f32(a + k), vld1q_f32(b + k));
        const float32x4_t d1 = vsubq_f32(vld1q_f32(a + k + 4), vld1q_f32(b + k + 4));
        acc0 = vfmaq_f32(acc0, d0, d0);
        acc1 = vfmaq_f32(acc1, d1, d1);
    }
    float tail = 0.0f;
    for (; k < dim; ++k) {
        const float d = a[k] - b[k];
        tail += d * d;
    }
    return vaddvq_f32(vaddq_f32(acc0, acc1)) + tail;
}

void l2_sqr_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
                 float* out) {
    for (std::size_t i = 0; i < n_rows; ++i) {
        out[i] = l2_sqr(query, rows + i * dim, dim);
    }
}

void panel_dots(const std::uint8_t* panel, std::size_t groups, const std::int8_t* codes,
                std::size_t n_queries, std::int32_t* out) {
    const std::size_t stride = groups * kGroupDims;
    for (std::size_t q = 0; q < n_queries; ++q) {
        const std::int8_t* code = codes + q * stride;
        int32x4_t acc[kPanelWidth];
        for (auto& a : acc) {
            a = vdupq_n_s32(0);
        }
        for (std::size_t g = 0; g < groups; ++g) {
            std::int32_t word;
            std::memcpy(&word, code + g * kGroupDims, sizeof(word));
            const int8x8_t q8 = vreinterpret_s8_s32(vdup_n_s32(word));
            const int16x4_t q16 = vget_low_s16(vmovl_s8(q8));
            const std::uint8_t* src = panel + g * kPanelGroupBytes;
            for (std::size_t c = 0; c < 4; ++c) {
                const uint8x16_t v = vld1q_u8(src + 16 * c);
                const int16x8_t lo = vreinterpretq_s16_u16(vmovl_u8(vget_low_u8(v)));
                const int16x8_t hi = vreinterpretq_s16_u16(vmovl_u8(vget_high_u8(v)));
                acc[4 * c + 0] = vmlal_s16(acc[4 * c + 0], vget_low_s16(lo), q16);
                acc[4 * c + 1] = vmlal_s16(acc[4 * c + 1], vget_high_s16(lo), q16);
                acc[4 * c + 2] = vmlal_s16(acc[4 * c + 2], vget_low_s16(hi), q16);
                acc[4 * c + 3] = vmlal_s16(acc[4 * c + 3], vget_high_s16(hi), q16);
            }
        }
        for (std::size_t lane = 0; lane < kPanelWidth; ++lane) {
            out[q * kPanelWidth + lane] = vaddvq_s32(acc[lane]);
        }
    }
}

void screen(const ScreenPanels& panels, ScreenQueries& queries) {
    detail::screen_lanewise(panels, queries, &panel_dots);
}

const KernelTable kTable{Isa::Neon, &l2_sqr, &l2_sqr_rows, &panel_dots, &screen};

} // namespace

namespace detail {
const KernelTable* neon_table() { return &kTable; }
} // namespace detail

} // namespace mias::simd

#else

namespace mias::simd::detail {
const KernelTable* neon_table() { return nullptr; }
} // namespace mias::simd::detail

#endif
