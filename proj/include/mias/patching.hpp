// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mias/types.hpp"

namespace mias {

inline constexpr int kDefaultPatchWindow = 5;
inline constexpr int kDefaultPatchStride = 2;

// Number of valid (unpadded) window positions along one axis.
constexpr int patch_count(int grid, int window, int stride) {
    return grid < window ? 0 : (grid - window) / stride + 1;
}

// Channel-wise mean over each window x window neighborhood of the grid,
// windows rooted at multiples of `stride`, valid positions only.
PatchGrid patchify(const EmbeddingGrid& grid, int window = kDefaultPatchWindow,
                   int stride = kDefaultPatchStride);

} // namespace mias
