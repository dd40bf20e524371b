// SPDX-License-Identifier: Apache-2.0
#include "mias/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

namespace mias::simd {
namespace {

inline float hsum(__m256 v) {
    const __m128 lo = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
    const __m128 s = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    return _mm_cvtss_f32(_mm_add_ss(s, _mm_movehdup_ps(s)));
}

inline float hmin(__m256 v) {
    const __m128 lo = _mm_min_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
    const __m128 s = _mm_min_ps(lo, _mm_movehl_ps(lo, lo));
    return _mm_cvtss_f32(_mm_min_ss(s, _mm_movehdup_ps(s)));
}

float l2_sqr(const float* a, const float* b, std::size_t dim) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t k = 0;
    for (; k + 16 <= dim; k += 16) {
        const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k));
        const __m256 d1 = _mm256_sub_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8));
        acc0 = _mm256_fmadd_ps(d0, d0, acc0);
        acc1 = _mm256_fmadd_ps(d1, d1, acc1);
    }
    for (; k + 8 <= dim; k += 8) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k));
        acc0 = _mm256_fmadd_ps(d, d, acc0);
    }
    float tail = 0.0f;
    for (; k < dim; ++k) {
        const float d = a[k] - b[k];
        tail += d * d;
    }
    return hsum(_mm256_add_ps(acc0, acc1)) + tail;
}

void l2_sqr_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
                 float* out) {
    for (std::size_t i = 0; i < n_rows; ++i) {
        out[i] = l2_sqr(query, rows + i * dim, dim);
    }
}

// One query against one panel. A 16-byte slice of a group holds 4 lanes x 4
// dims; widening to int16 and madd against the query's 4 dims repeated gives
// per-lane pair sums that are exact in int32.
inline void panel_dot_one(const std::uint8_t* panel, std::size_t groups, const std::int8_t* code,
                          std::int32_t* out) {
    __m256i acc[4] = {_mm256_setzero_si256(), _mm256_setzero_si256(), _mm256_setzero_si256(),
                      _mm256_setzero_si256()};
    for (std::size_t g = 0; g < groups; ++g) {
        std::int32_t word;
        std::memcpy(&word, code + g * kGroupDims, sizeof(word));
        const __m256i q16 = _mm256_cvtepi8_epi16(_mm_set1_epi32(word));
        const std::uint8_t* src = panel + g * kPanelGroupBytes;
        for (int c = 0; c < 4; ++c) {
            const __m256i v16 = _mm256_cvtepu8_epi16(
                _mm_loadu_si128(reinterpret_cast<const __m128i*>(src + 16 * c)));
            acc[c] = _mm256_add_epi32(acc[c], _mm256_madd_epi16(v16, q16));
        }
    }
    // hadd pairs within 128-bit halves, then restore lane order.
    const __m256i lanes_0_7 = _mm256_permute4x64_epi64(_mm256_hadd_epi32(acc[0], acc[1]), 0xD8);
    const __m256i lanes_8_15 = _mm256_permute4x64_epi64(_mm256_hadd_epi32(acc[2], acc[3]), 0xD8);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out), lanes_0_7);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + 8), lanes_8_15);
}

void panel_dots(const std::uint8_t* panel, std::size_t groups, const std::int8_t* codes,
                std::size_t n_queries, std::int32_t* out) {
    const std::size_t stride = groups * kGroupDims;
    for (std::size_t q = 0; q < n_queries; ++q) {
        panel_dot_one(panel, groups, codes + q * stride, out + q * kPanelWidth);
    }
}

void screen(const ScreenPanels& panels, ScreenQueries& queries) {
    const std::size_t panel_bytes = panels.groups * kPanelGroupBytes;
    const std::size_t stride = panels.groups * kGroupDims;
    const __m256 two = _mm256_set1_ps(2.0f);
    alignas(32) std::int32_t dots[kPanelWidth];
    alignas(32) float lows[8];
    for (std::size_t p = panels.first_panel; p < panels.last_panel; ++p) {
        const std::uint8_t* panel = panels.codes + p * panel_bytes;
        const std::size_t base = p * kPanelWidth;
        for (std::size_t q = 0; q < queries.count; ++q) {
            panel_dot_one(panel, panels.groups, queries.codes + q * stride, dots);
            __m256 panel_upper = _mm256_set1_ps(queries.upper[q]);
            for (std::size_t half = 0; half < 2; ++half) {
                const std::size_t v = base + 8 * half;
                const __m256i dot = _mm256_sub_epi32(
                    _mm256_load_si256(reinterpret_cast<const __m256i*>(dots + 8 * half)),
                    _mm256_set1_epi32(queries.bias[q]));
                const __m256 ip = _mm256_mul_ps(
                    _mm256_mul_ps(_mm256_set1_ps(queries.scale[q]), _mm256_loadu_ps(panels.scale + v)),
                    _mm256_cvtepi32_ps(dot));
                const __m256 center = _mm256_sub_ps(
                    _mm256_add_ps(_mm256_set1_ps(queries.norm_sq[q]), _mm256_loadu_ps(panels.norm_sq + v)),
                    _mm256_mul_ps(two, ip));
                const __m256 e = _mm256_add_ps(
                    _mm256_mul_ps(_mm256_set1_ps(queries.norm[q]), _mm256_loadu_ps(panels.error + v)),
                    _mm256_mul_ps(_mm256_set1_ps(queries.error[q]), _mm256_loadu_ps(panels.hat_norm + v)));
                const __m256 spread = _mm256_add_ps(_mm256_mul_ps(two, e), _mm256_set1_ps(queries.slack[q]));
                const __m256 lower = _mm256_sub_ps(center, spread);
                panel_upper = _mm256_min_ps(panel_upper, _mm256_add_ps(center, spread));
                int hits = _mm256_movemask_ps(
                    _mm256_cmp_ps(lower, _mm256_set1_ps(queries.threshold[q]), _CMP_LE_OQ));
                if (hits) {
                    _mm256_store_ps(lows, lower);
                    while (hits) {
                        const int lane = __builtin_ctz(static_cast<unsigned>(hits));
                        queries.candidates[q]->push_back({lows[lane], static_cast<std::uint32_t>(v + lane)});
                        hits &= hits - 1;
                    }
                }
            }
            const float m = hmin(panel_upper);
            if (m < queries.upper[q]) {
                queries.upper[q] = m;
                queries.threshold[q] = m * queries.threshold_factor;
            }
        }
    }
}

const KernelTable kTable{Isa::Avx2, &l2_sqr, &l2_sqr_rows, &panel_dots, &screen};

} // namespace

namespace detail {
const KernelTable* avx2_table() { return &kTable; }
} // namespace detail

} // namespace mias::simd

#else

namespace mias::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
} // namespace mias::simd::detail

#endif
