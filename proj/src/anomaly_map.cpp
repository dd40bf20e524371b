// SPDX-License-Identifier: Apache-2.0
#include "mias/anomaly_map.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mias/error.hpp"

namespace mias {

namespace {

struct Tap {
    int lo;
    int hi;
    double frac;
};

// Interpolation taps along one axis for `target` output pixels.
std::vector<Tap> axis_taps(int target, int count, int grid, int window, int stride) {
    std::vector<Tap> taps(static_cast<std::size_t>(target));
    const double block = static_cast<double>(target) / grid;
    const double half_window = window / 2.0;
    for (int p = 0; p < target; ++p) {
        double u = ((p + 0.5) / block - half_window) / stride;
        u = std::clamp(u, 0.0, static_cast<double>(count - 1));
        const int lo = std::min(static_cast<int>(std::floor(u)), count - 1);
        const int hi = std::min(lo + 1, count - 1);
        taps[p] = {lo, hi, u - lo};
    }
    return taps;
}

} // namespace

AnomalyMap upsample(const ScoreGrid& scores, int target_h, int target_w) {
    MIAS_THROW_IF_NOT(scores.rows > 0 && scores.cols > 0 &&
                          scores.scores.size() == static_cast<std::size_t>(scores.rows) * scores.cols,
                      ErrorCode::InvalidArgument, "score grid is empty or inconsistent");
    MIAS_THROW_IF_NOT(target_h >= scores.rows && target_w >= scores.cols, ErrorCode::TargetTooSmall,
                      "target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                          " is smaller than the score grid " + std::to_string(scores.rows) + "x" +
                          std::to_string(scores.cols));
    PatchGeometry g = scores.geometry;
    if (g.grid_height <= 0 || g.grid_width <= 0) {
        g = {1, 1, scores.rows, scores.cols};
    }
    const auto ty = axis_taps(target_h, scores.rows, g.grid_height, g.window, g.stride);
    const auto tx = axis_taps(target_w, scores.cols, g.grid_width, g.window, g.stride);

    AnomalyMap out(target_h, target_w);
    out.image_id = scores.image_id;
    for (int y = 0; y < target_h; ++y) {
        const Tap& a = ty[y];
        for (int x = 0; x < target_w; ++x) {
            const Tap& b = tx[x];
            const double v00 = scores.at(a.lo, b.lo);
            const double v01 = scores.at(a.lo, b.hi);
            const double v10 = scores.at(a.hi, b.lo);
            const double v11 = scores.at(a.hi, b.hi);
            const double top = v00 + b.frac * (v01 - v00);
            const double bottom = v10 + b.frac * (v11 - v10);
            out.at(y, x) = static_cast<float>(top + a.frac * (bottom - top));
        }
    }
    return out;
}

AnomalyMap normalize(const AnomalyMap& map) {
    AnomalyMap out = map;
    out.normalized = true;
    if (map.values.empty()) {
        return out;
    }
    const auto [mn, mx] = std::minmax_element(map.values.begin(), map.values.end());
    const double lo = *mn;
    const double range = static_cast<double>(*mx) - lo;
    if (!(range > 0.0)) {
        std::fill(out.values.begin(), out.values.end(), 0.0f);
        return out;
    }
    for (float& v : out.values) {
        v = static_cast<float>(std::clamp((v - lo) / range, 0.0, 1.0));
    }
    return out;
}

AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma) {
    MIAS_THROW_IF_NOT(sigma > 0.0, ErrorCode::InvalidArgument, "smoothing sigma must be positive");
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(2 * static_cast<std::size_t>(radius) + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        total += kernel[i + radius];
    }
    for (double& k : kernel) {
        k /= total;
    }
    const int h = map.height;
    const int w = map.width;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                s += kernel[i + radius] * map.at(y, std::clamp(x + i, 0, w - 1));
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    AnomalyMap out = map;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                s += kernel[i + radius] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
            }
            out.at(y, x) = static_cast<float>(s);
        }
    }
    return out;
}

float image_score(const AnomalyMap& map) {
    MIAS_THROW_IF_NOT(!map.values.empty(), ErrorCode::InvalidArgument, "empty anomaly map");
    return *std::max_element(map.values.begin(), map.values.end());
}

} // namespace mias
