// SPDX-License-Identifier: Apache-2.0
#include "mias/prompting.hpp"

#include <algorithm>
#include <cmath>

#include "mias/error.hpp"

namespace mias {

PointPrompt center_of_gravity(const AnomalyMap& map, const GammaConfig& cfg) {
    MIAS_THROW_IF_NOT(cfg.gamma > 0.0, ErrorCode::InvalidArgument, "gamma must be positive");
    MIAS_THROW_IF_NOT(!map.values.empty(), ErrorCode::AllZeroMap, "empty anomaly map");
    const float peak = *std::max_element(map.values.begin(), map.values.end());
    MIAS_THROW_IF_NOT(peak > 0.0f, ErrorCode::AllZeroMap,
                      "anomaly map '" + map.image_id + "' has no positive pixel; no prompt derivable");
    const double inv_peak = 1.0 / static_cast<double>(peak);
    double mass = 0.0;
    double sum_x = 0.0;
    double sum_y = 0.0;
    for (int i = 0; i < map.height; ++i) {
        double row_mass = 0.0;
        double row_x = 0.0;
        for (int j = 0; j < map.width; ++j) {
            const double v = map.at(i, j);
            if (v <= 0.0) {
                continue;
            }
            const double w = std::pow(v * inv_peak, cfg.gamma);
            row_mass += w;
            row_x += j * w;
        }
        mass += row_mass;
        sum_x += row_x;
        sum_y += i * row_mass;
    }
    MIAS_THROW_IF_NOT(mass > 0.0, ErrorCode::AllZeroMap, "center-of-gravity weights underflowed");
    return {sum_x / mass, sum_y / mass, PointKind::CenterOfGravity};
}

PointPrompt max_point(const AnomalyMap& map) {
    MIAS_THROW_IF_NOT(!map.values.empty(), ErrorCode::ConstantMap, "empty anomaly map");
    const auto [mn, mx] = std::minmax_element(map.values.begin(), map.values.end());
    MIAS_THROW_IF_NOT(*mn != *mx, ErrorCode::ConstantMap,
                      "anomaly map '" + map.image_id + "' is constant; no maximum point");
    // minmax_element returns the last maximum; take the first instead.
    const auto first = std::max_element(map.values.begin(), map.values.end());
    const auto index = static_cast<int>(first - map.values.begin());
    return {static_cast<double>(index % map.width), static_cast<double>(index / map.width), PointKind::MaxPoint};
}

std::vector<int> label_components(const BinaryMask& mask, bool eight, int* count) {
    const int h = mask.height;
    const int w = mask.width;
    std::vector<int> labels(static_cast<std::size_t>(h) * w, 0);
    std::vector<int> stack;
    int next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!mask.bits[idx] || labels[idx] != 0) {
                continue;
            }
            ++next;
            labels[idx] = next;
            stack.assign(1, static_cast<int>(idx));
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cy = cur / w;
                const int cx = cur % w;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if ((dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0)) {
                            continue;
                        }
                        const int ny = cy + dy;
                        const int nx = cx + dx;
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) {
                            continue;
                        }
                        const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
                        if (mask.bits[n] && labels[n] == 0) {
                            labels[n] = next;
                            stack.push_back(static_cast<int>(n));
                        }
                    }
                }
            }
        }
    }
    if (count != nullptr) {
        *count = next;
    }
    return labels;
}

BoxPromptSet threshold_boxes(const AnomalyMap& map, double tau) {
    BinaryMask bin(map.height, map.width);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        bin.bits[i] = map.values[i] >= tau ? 1 : 0;
    }
    int n = 0;
    const std::vector<int> labels = label_components(bin, true, &n);
    BoxPromptSet out;
    out.boxes.assign(static_cast<std::size_t>(n), Box{map.width, map.height, -1, -1});
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const int l = labels[static_cast<std::size_t>(y) * map.width + x];
            if (l == 0) {
                continue;
            }
            Box& b = out.boxes[static_cast<std::size_t>(l - 1)];
            b.x_min = std::min(b.x_min, x);
            b.y_min = std::min(b.y_min, y);
            b.x_max = std::max(b.x_max, x);
            b.y_max = std::max(b.y_max, y);
        }
    }
    return out;
}

} // namespace mias
