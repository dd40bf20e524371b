// SPDX-License-Identifier: Apache-2.0
#include "mias/patching.hpp"

#include <string>
#include <vector>

#include "mias/error.hpp"

namespace mias {

PatchGrid patchify(const EmbeddingGrid& grid, int window, int stride) {
    MIAS_THROW_IF_NOT(window >= 1 && stride >= 1, ErrorCode::InvalidArgument,
                      "patch window and stride must be >= 1");
    MIAS_THROW_IF_NOT(window <= grid.height && window <= grid.width, ErrorCode::WindowExceedsGrid,
                      "window " + std::to_string(window) + " exceeds grid " + std::to_string(grid.height) +
                          "x" + std::to_string(grid.width));
    PatchGrid out;
    out.image_id = grid.image_id;
    out.rows = patch_count(grid.height, window, stride);
    out.cols = patch_count(grid.width, window, stride);
    out.dim = grid.channels;
    out.geometry = {window, stride, grid.height, grid.width};
    out.vectors.assign(out.count() * out.dim, 0.0f);

    // Separable box sums in double: vertical window sums per channel row, then
    // horizontal sums over those.
    const double area = static_cast<double>(window) * window;
    std::vector<double> column_sums(static_cast<std::size_t>(grid.width));
    for (int c = 0; c < grid.channels; ++c) {
        for (int i = 0; i < out.rows; ++i) {
            const int y0 = i * stride;
            std::fill(column_sums.begin(), column_sums.end(), 0.0);
            for (int dy = 0; dy < window; ++dy) {
                for (int x = 0; x < grid.width; ++x) {
                    column_sums[x] += grid.at(c, y0 + dy, x);
                }
            }
            for (int j = 0; j < out.cols; ++j) {
                const int x0 = j * stride;
                double s = 0.0;
                for (int dx = 0; dx < window; ++dx) {
                    s += column_sums[x0 + dx];
                }
                out.vectors[(static_cast<std::size_t>(i) * out.cols + j) * out.dim + c] =
                    static_cast<float>(s / area);
            }
        }
    }
    return out;
}

} // namespace mias
