// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mias/ivf_index.hpp"
#include "mias/kernels.hpp"

namespace mias {

// Exact k-nearest-neighbor search by cluster pruning. Rows are grouped by a
// k-means quantizer; each cluster keeps its radius, and a cluster is skipped
// when the triangle inequality (with a floating-point margin) proves none of
// its rows can beat the current k-th best; inside a visited cluster, rows
// whose distance to the centroid differs too much from the query's are
// skipped the same way. Results therefore equal a full scan
// with the same distance kernel, ties going to the lowest index. Pays off when
// the data lies near a low-dimensional manifold, where int8 screening cannot
// resolve the tiny neighbor gaps.
class ClusterIndex {
  public:
    ClusterIndex() = default;
    ClusterIndex(const float* data, std::size_t n, std::size_t dim, const IvfParams& params);

    bool empty() const { return n_ == 0; }
    std::size_t clusters() const { return radius_.size(); }

    // Squared distances (ascending) and indices of the min(k, n) nearest rows.
    void search(const float* data, const float* query, std::size_t k, float* out_sq, std::uint32_t* out_index,
                const simd::KernelTable& kernels = simd::active()) const;

    struct Stats {
        std::size_t visited_rows = 0;
        std::size_t visited_clusters = 0;
    };
    static Stats last_stats();

  private:
    std::size_t n_ = 0;
    std::size_t dim_ = 0;
    double margin_ = 0.0;
    float max_radius_ = 0.0f;
    std::vector<float> centroids_;
    std::vector<float> radius_;
    std::vector<std::uint32_t> offsets_; // CSR over ids_
    std::vector<std::uint32_t> ids_;
    std::vector<float> member_r_; // distance to the centroid, ascending per cluster
};

} // namespace mias
