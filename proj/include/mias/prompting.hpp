// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mias/types.hpp"

namespace mias {

enum class PointKind { CenterOfGravity, MaxPoint };

// x = column, y = row, 0-based pixel coordinates of the map.
struct PointPrompt {
    double x = 0.0;
    double y = 0.0;
    PointKind kind = PointKind::CenterOfGravity;
};

// Inclusive integer pixel box.
struct Box {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;
    bool operator==(const Box&) const = default;
};

struct BoxPromptSet {
    std::vector<Box> boxes;
};

inline constexpr double kDefaultGamma = 5.0;
inline constexpr double kDefaultTau = 0.5;

struct GammaConfig {
    double gamma = kDefaultGamma;
};

// Intensity-weighted centroid with weights I(i, j)^gamma. Intensities are
// rescaled by 1 / max before powering (the ratio is scale invariant), and
// sums run in double.
PointPrompt center_of_gravity(const AnomalyMap& map, const GammaConfig& cfg = {});

// Location of the maximum; ties go to the smallest row-major index.
PointPrompt max_point(const AnomalyMap& map);

// Binarize at >= tau, label 8-connected components, one tight box per
// component, ordered by each component's first pixel in raster order.
BoxPromptSet threshold_boxes(const AnomalyMap& map, double tau = kDefaultTau);

// Component labels (0 = background, 1..n) of a binary mask; `eight`
// selects 8- instead of 4-connectivity. Labels follow raster order of each
// component's first pixel.
std::vector<int> label_components(const BinaryMask& mask, bool eight, int* count = nullptr);

} // namespace mias
