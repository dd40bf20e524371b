// SPDX-License-Identifier: Apache-2.0
#include "mias/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>
#include <utility>

namespace mias::simd {
namespace {

float l2_sqr(const float* a, const float* b, std::size_t dim) {
    __m512 acc0 = _mm512_setzero_ps();
    __m512 acc1 = _mm512_setzero_ps();
    std::size_t k = 0;
    for (; k + 32 <= dim; k += 32) {
        const __m512 d0 = _mm512_sub_ps(_mm512_loadu_ps(a + k), _mm512_loadu_ps(b + k));
        const __m512 d1 = _mm512_sub_ps(_mm512_loadu_ps(a + k + 16), _mm512_loadu_ps(b + k + 16));
        acc0 = _mm512_fmadd_ps(d0, d0, acc0);
        acc1 = _mm512_fmadd_ps(d1, d1, acc1);
    }
    for (; k < dim; k += 16) {
        const std::size_t rest = dim - k < 16 ? dim - k : 16;
        const __mmask16 m = static_cast<__mmask16>((1u << rest) - 1u);
        const __m512 d = _mm512_sub_ps(_mm512_maskz_loadu_ps(m, a + k), _mm512_maskz_loadu_ps(m, b + k));
        acc0 = _mm512_fmadd_ps(d, d, acc0);
    }
    return _mm512_reduce_add_ps(_mm512_add_ps(acc0, acc1));
}

void l2_sqr_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
                 float* out) {
    for (std::size_t i = 0; i < n_rows; ++i) {
        out[i] = l2_sqr(query, rows + i * dim, dim);
    }
}

inline __m512i broadcast_group(const std::int8_t* p) {
    std::int32_t word;
    std::memcpy(&word, p, sizeof(word));
    return _mm512_set1_epi32(word);
}

template <std::size_t Q>
inline void accumulate_panel(const std::uint8_t* panel, std::size_t groups, const std::int8_t* codes,
                             __m512i (&acc)[Q]) {
    const std::size_t stride = groups * kGroupDims;
    for (std::size_t q = 0; q < Q; ++q) {
        acc[q] = _mm512_setzero_si512();
    }
    for (std::size_t g = 0; g < groups; ++g) {
        const __m512i v = _mm512_loadu_si512(panel + g * kPanelGroupBytes);
        for (std::size_t q = 0; q < Q; ++q) {
            acc[q] = _mm512_dpbusd_epi32(acc[q], v, broadcast_group(codes + q * stride + g * kGroupDims));
        }
    }
}

template <std::size_t Q>
void panel_dots_fixed(const std::uint8_t* panel, std::size_t groups, const std::int8_t* codes,
                      std::int32_t* out) {
    __m512i acc[Q];
    accumulate_panel<Q>(panel, groups, codes, acc);
    for (std::size_t q = 0; q < Q; ++q) {
        _mm512_storeu_si512(out + q * kPanelWidth, acc[q]);
    }
}

template <std::size_t Q>
void screen_fixed(const ScreenPanels& panels, ScreenQueries& queries) {
    const std::size_t panel_bytes = panels.groups * kPanelGroupBytes;
    const __m512 two = _mm512_set1_ps(2.0f);
    __m512i acc[Q];
    for (std::size_t p = panels.first_panel; p < panels.last_panel; ++p) {
        accumulate_panel<Q>(panels.codes + p * panel_bytes, panels.groups, queries.codes, acc);
        const std::size_t base = p * kPanelWidth;
        const __m512 v_scale = _mm512_loadu_ps(panels.scale + base);
        const __m512 v_norm_sq = _mm512_loadu_ps(panels.norm_sq + base);
        const __m512 v_hat = _mm512_loadu_ps(panels.hat_norm + base);
        const __m512 v_err = _mm512_loadu_ps(panels.error + base);
        for (std::size_t q = 0; q < Q; ++q) {
            const __m512i dot = _mm512_sub_epi32(acc[q], _mm512_set1_epi32(queries.bias[q]));
            const __m512 ip = _mm512_mul_ps(_mm512_mul_ps(_mm512_set1_ps(queries.scale[q]), v_scale),
                                            _mm512_cvtepi32_ps(dot));
            const __m512 center = _mm512_sub_ps(
                _mm512_add_ps(_mm512_set1_ps(queries.norm_sq[q]), v_norm_sq), _mm512_mul_ps(two, ip));
            const __m512 e = _mm512_add_ps(_mm512_mul_ps(_mm512_set1_ps(queries.norm[q]), v_err),
                                           _mm512_mul_ps(_mm512_set1_ps(queries.error[q]), v_hat));
            const __m512 spread = _mm512_add_ps(_mm512_mul_ps(two, e), _mm512_set1_ps(queries.slack[q]));
            const __m512 lower = _mm512_sub_ps(center, spread);
            const __m512 upper = _mm512_add_ps(center, spread);
            __mmask16 hits = _mm512_cmp_ps_mask(lower, _mm512_set1_ps(queries.threshold[q]), _CMP_LE_OQ);
            if (hits) {
                alignas(64) float lows[kPanelWidth];
                _mm512_store_ps(lows, lower);
                while (hits) {
                    const unsigned lane = static_cast<unsigned>(__builtin_ctz(hits));
                    queries.candidates[q]->push_back({lows[lane], static_cast<std::uint32_t>(base + lane)});
                    hits = static_cast<__mmask16>(hits & (hits - 1));
                }
            }
            const float panel_upper = _mm512_reduce_min_ps(upper);
            if (panel_upper < queries.upper[q]) {
                queries.upper[q] = panel_upper;
                queries.threshold[q] = panel_upper * queries.threshold_factor;
            }
        }
    }
}

template <std::size_t... Is>
void panel_dots_switch(std::index_sequence<Is...>, const std::uint8_t* panel, std::size_t groups,
                       const std::int8_t* codes, std::size_t n, std::int32_t* out) {
    ((n == Is + 1 ? panel_dots_fixed<Is + 1>(panel, groups, codes, out) : void()), ...);
}

template <std::size_t... Is>
void screen_switch(std::index_sequence<Is...>, const ScreenPanels& panels, ScreenQueries& queries) {
    ((queries.count == Is + 1 ? screen_fixed<Is + 1>(panels, queries) : void()), ...);
}

void panel_dots(const std::uint8_t* panel, std::size_t groups, const std::int8_t* codes,
                std::size_t n_queries, std::int32_t* out) {
    const std::size_t stride = groups * kGroupDims;
    while (n_queries > 0) {
        const std::size_t n = n_queries < kQueryBlock ? n_queries : kQueryBlock;
        panel_dots_switch(std::make_index_sequence<kQueryBlock>{}, panel, groups, codes, n, out);
        codes += n * stride;
        out += n * kPanelWidth;
        n_queries -= n;
    }
}

void screen(const ScreenPanels& panels, ScreenQueries& queries) {
    screen_switch(std::make_index_sequence<kQueryBlock>{}, panels, queries);
}

const KernelTable kTable{Isa::Avx512, &l2_sqr, &l2_sqr_rows, &panel_dots, &screen};

} // namespace

namespace detail {
const KernelTable* avx512_table() { return &kTable; }
} // namespace detail

} // namespace mias::simd

#else

namespace mias::simd::detail {
const KernelTable* avx512_table() { return nullptr; }
} // namespace mias::simd::detail

#endif
