// SPDX-License-Identifier: Apache-2.0
#include "mias/cluster_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mias/error.hpp"

namespace mias {

namespace {
thread_local ClusterIndex::Stats g_stats;
} // namespace

ClusterIndex::ClusterIndex(const float* data, std::size_t n, std::size_t dim, const IvfParams& params)
    : n_(n), dim_(dim) {
    MIAS_THROW_IF_NOT(n > 0 && dim > 0, ErrorCode::InvalidArgument, "cluster index needs data");
    MIAS_THROW_IF_NOT(n <= UINT32_MAX, ErrorCode::InvalidArgument, "cluster index holds at most 2^32-1 rows");
    // Relative error allowance for fp32 squared distances of length dim
    // (and their square roots), generously rounded up.
    margin_ = 4.0 * static_cast<double>(dim + 2) * 0x1.0p-24;

    const IvfIndex ivf = IvfIndex::train(data, n, dim, params);
    centroids_ = ivf.centroids();
    const auto& lists = ivf.lists();
    const simd::KernelTable& kernels = simd::active();
    offsets_.assign(1, 0);
    ids_.reserve(n);
    radius_.assign(lists.size(), 0.0f);
    member_r_.reserve(n);
    std::vector<std::pair<float, std::uint32_t>> members;
    for (std::size_t l = 0; l < lists.size(); ++l) {
        members.clear();
        for (std::uint32_t id : lists[l]) {
            const float r2 = kernels.l2_sqr(centroids_.data() + l * dim, data + static_cast<std::size_t>(id) * dim, dim);
            members.emplace_back(std::sqrt(r2), id);
        }
        std::sort(members.begin(), members.end());
        radius_[l] = members.empty() ? 0.0f : members.back().first;
        max_radius_ = std::max(max_radius_, radius_[l]);
        for (const auto& [r, id] : members) {
            member_r_.push_back(r);
            ids_.push_back(id);
        }
        offsets_.push_back(static_cast<std::uint32_t>(ids_.size()));
    }
    MIAS_THROW_IF_NOT(ids_.size() == n, ErrorCode::InvalidArgument, "cluster lists do not cover the data");
}

ClusterIndex::Stats ClusterIndex::last_stats() { return g_stats; }

void ClusterIndex::search(const float* data, const float* query, std::size_t k, float* out_sq,
                          std::uint32_t* out_index, const simd::KernelTable& kernels) const {
    MIAS_THROW_IF_NOT(!empty(), ErrorCode::InvalidArgument, "search on an empty cluster index");
    k = std::min(k, n_);
    MIAS_THROW_IF_NOT(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
    const std::size_t nl = radius_.size();
    thread_local std::vector<float> dist;
    thread_local std::vector<std::uint32_t> order;
    dist.resize(nl);
    order.resize(nl);
    kernels.l2_sqr_rows(query, centroids_.data(), nl, dim_, dist.data());
    for (float& d : dist) {
        d = std::sqrt(d);
    }
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [](std::uint32_t a, std::uint32_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });

    // Current best k as (squared distance, index), ascending.
    thread_local std::vector<std::pair<float, std::uint32_t>> best;
    best.clear();
    const double lo = 1.0 - margin_;
    const double hi = 1.0 + margin_;
    Stats stats;
    for (std::uint32_t l : order) {
        if (best.size() == k) {
            const double kth = best.back().first;
            // Lower bound on every true distance into cluster l; any row there
            // computes to at least bound^2 * lo, so it cannot enter the top k.
            const double bound = dist[l] * lo - radius_[l] * hi;
            if (bound > 0.0 && bound * bound * lo > kth) {
                const double rest = dist[l] * lo - max_radius_ * hi;
                if (rest > 0.0 && rest * rest * lo > kth) {
                    break; // clusters further out are pruned as well
                }
                continue;
            }
        }
        ++stats.visited_clusters;
        // Rows sit in ascending distance to the centroid. |D - R| bounds the
        // true distance from below, so walk outward from R ~ D and stop each
        // side once its bound rules out the top k.
        const auto consider = [&](std::uint32_t p) {
            const std::uint32_t id = ids_[p];
            const float s = kernels.l2_sqr(query, data + static_cast<std::size_t>(id) * dim_, dim_);
            ++stats.visited_rows;
            const std::pair<float, std::uint32_t> cand{s, id};
            if (best.size() < k) {
                best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
            } else if (cand < best.back()) {
                best.pop_back();
                best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
            }
        };
        const auto pruned = [&](double gap) {
            return best.size() == k && gap > 0.0 && gap * gap * lo > static_cast<double>(best.back().first);
        };
        const float* r = member_r_.data();
        const std::uint32_t begin = offsets_[l];
        const std::uint32_t end = offsets_[l + 1];
        std::uint32_t up = static_cast<std::uint32_t>(std::lower_bound(r + begin, r + end, dist[l]) - r);
        std::uint32_t down = up; // next row below is down - 1
        bool up_open = up < end;
        bool down_open = down > begin;
        while (up_open || down_open) {
            const bool take_up =
                up_open && (!down_open || static_cast<double>(r[up]) - dist[l] <= dist[l] - static_cast<double>(r[down - 1]));
            if (take_up) {
                if (pruned(r[up] * lo - dist[l] * hi)) {
                    up_open = false;
                    continue;
                }
                consider(up++);
                up_open = up < end;
            } else {
                if (pruned(dist[l] * lo - r[down - 1] * hi)) {
                    down_open = false;
                    continue;
                }
                consider(--down);
                down_open = down > begin;
            }
        }
    }
    g_stats = stats;
    for (std::size_t i = 0; i < k; ++i) {
        out_sq[i] = best[i].first;
        out_index[i] = best[i].second;
    }
}

} // namespace mias
