// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "mias/types.hpp"

namespace mias {

// Reads 1-16 bit gray, gray+alpha, palette, RGB or RGBA PNGs. Alpha is
// dropped; the result has 1 (gray) or 3 (color) channels scaled to [0, 1].
Image read_png(const std::filesystem::path& path);

// Writes a 1- or 3-channel image; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image, int bit_depth = 8);

// 0/1 mask as an 8-bit gray PNG (0 / 255).
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

} // namespace mias
