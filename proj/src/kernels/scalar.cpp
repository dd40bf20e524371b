// SPDX-License-Identifier: Apache-2.0
#include "mias/kernels.hpp"
#include "screen_common.hpp"

namespace mias::simd {
namespace {

float l2_sqr(const float* a, const float* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        acc += d * d;
    }
    return static_cast<float>(acc);
}

void l2_sqr_rows(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
                 float* out) {
    for (std::size_t i = 0; i < n_rows; ++i) {
        out[i] = l2_sqr(query, rows + i * dim, dim);
    }
}

void panel_dots(const std::uint8_t* panel, std::size_t groups, const std::int8_t* codes,
                std::size_t n_queries, std::int32_t* out) {
    const std::size_t dims = groups * kGroupDims;
    for (std::size_t q = 0; q < n_queries; ++q) {
        const std::int8_t* qc = codes + q * dims;
        for (std::size_t lane = 0; lane < kPanelWidth; ++lane) {
            std::int32_t acc = 0;
            for (std::size_t g = 0; g < groups; ++g) {
                const std::uint8_t* v = panel + g * kPanelGroupBytes + lane * kGroupDims;
                for (std::size_t t = 0; t < kGroupDims; ++t) {
                    acc += static_cast<std::int32_t>(v[t]) *
                           static_cast<std::int32_t>(qc[g * kGroupDims + t]);
                }
            }
            out[q * kPanelWidth + lane] = acc;
        }
    }
}

void screen(const ScreenPanels& panels, ScreenQueries& queries) {
    detail::screen_lanewise(panels, queries, &panel_dots);
}

const KernelTable kTable{Isa::Scalar, &l2_sqr, &l2_sqr_rows, &panel_dots, &screen};

} // namespace

namespace detail {
const KernelTable* scalar_table() { return &kTable; }
} // namespace detail

} // namespace mias::simd
