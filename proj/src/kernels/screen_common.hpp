// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mias/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>

namespace mias::simd::detail {

struct PairBounds {
    float lower;
    float upper;
};

// Bounds on ||q - v||^2 from the quantized inner product. With q = s_q c_q + r_q
// and v = s_v c_v + r_v, |q.v - s_q s_v c_q.c_v| <= ||q|| ||r_v|| + ||r_q|| ||v_hat||.
// SIMD variants evaluate the same expression lane-wise.
inline PairBounds pair_bounds(std::int32_t dot, float q_scale, float q_norm_sq, float q_norm,
                              float q_error, float q_slack, float v_scale, float v_norm_sq,
                              float v_hat_norm, float v_error) {
    const float approx_ip = (q_scale * v_scale) * static_cast<float>(dot);
    const float center = (q_norm_sq + v_norm_sq) - 2.0f * approx_ip;
    const float spread = 2.0f * (q_norm * v_error + q_error * v_hat_norm) + q_slack;
    return {center - spread, center + spread};
}

// Lane-at-a-time screening loop over any panel_dots implementation.
template <typename PanelDots>
void screen_lanewise(const ScreenPanels& panels, ScreenQueries& queries, PanelDots&& dots_fn) {
    std::int32_t dots[kQueryBlock * kPanelWidth];
    const std::size_t panel_bytes = panels.groups * kPanelGroupBytes;
    for (std::size_t p = panels.first_panel; p < panels.last_panel; ++p) {
        dots_fn(panels.codes + p * panel_bytes, panels.groups, queries.codes, queries.count, dots);
        const std::size_t base = p * kPanelWidth;
        for (std::size_t q = 0; q < queries.count; ++q) {
            float panel_upper = std::numeric_limits<float>::infinity();
            for (std::size_t lane = 0; lane < kPanelWidth; ++lane) {
                const std::size_t v = base + lane;
                const auto b = pair_bounds(dots[q * kPanelWidth + lane] - queries.bias[q],
                                           queries.scale[q], queries.norm_sq[q], queries.norm[q],
                                           queries.error[q], queries.slack[q], panels.scale[v],
                                           panels.norm_sq[v], panels.hat_norm[v], panels.error[v]);
                if (b.lower <= queries.threshold[q]) {
                    queries.candidates[q]->push_back({b.lower, static_cast<std::uint32_t>(v)});
                }
                panel_upper = std::min(panel_upper, b.upper);
            }
            if (panel_upper < queries.upper[q]) {
                queries.upper[q] = panel_upper;
                queries.threshold[q] = panel_upper * queries.threshold_factor;
            }
        }
    }
}

} // namespace mias::simd::detail
