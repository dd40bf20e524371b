// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mias/types.hpp"

namespace mias {

// Bilinear upsampling of patch scores to a target_h x target_w map. Each score
// sits at the center of its patch's receptive field: with block size
// b = target / grid, patch i is centered at pixel coordinate
// (i * stride + window / 2) * b, pixel p at p + 0.5. Beyond the outermost
// centers values are clamped. A ScoreGrid without geometry (grid dims 0) is
// treated as equal tiles.
AnomalyMap upsample(const ScoreGrid& scores, int target_h, int target_w);

// Min-max normalization to [0, 1]; a constant map becomes all zeros.
AnomalyMap normalize(const AnomalyMap& map);

// Separable Gaussian blur (clamped borders). Not part of the default pipeline.
AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma);

// Image-level score: the maximum intensity.
float image_score(const AnomalyMap& map);

} // namespace mias
