// SPDX-License-Identifier: Apache-2.0
#include "mias/ivf_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "mias/error.hpp"
#include "mias/kernels.hpp"
#include "mias/random.hpp"

namespace mias {

namespace {

std::size_t nearest_centroid(const float* x, const std::vector<float>& centroids, std::size_t dim,
                             const simd::KernelTable& k) {
    const std::size_t nlist = centroids.size() / dim;
    std::size_t best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::size_t c = 0; c < nlist; ++c) {
        const float d = k.l2_sqr(x, centroids.data() + c * dim, dim);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

} // namespace

std::size_t IvfIndex::default_nprobe(std::size_t nlist) {
    // Unstructured 256-d Gaussian data needs about half the lists for 0.95
    // top-1 recall (a quarter gives ~0.77). Clustered patch features need far
    // fewer; lower it with --nprobe.
    return std::max<std::size_t>(1, (nlist + 1) / 2);
}

void IvfIndex::set_nprobe(std::size_t nprobe) {
    nprobe_ = std::clamp<std::size_t>(nprobe, 1, std::max<std::size_t>(1, nlist()));
}

IvfIndex IvfIndex::train(const float* data, std::size_t n, std::size_t dim, const IvfParams& params) {
    MIAS_THROW_IF_NOT(n > 0 && dim > 0, ErrorCode::EmptyTrainingSet, "ivf index needs vectors");
    const simd::KernelTable& kernels = simd::active();
    std::size_t nlist = params.nlist != 0
                            ? params.nlist
                            : static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    nlist = std::clamp<std::size_t>(nlist, 1, n);

    IvfIndex index;
    index.dim_ = dim;

    // Training sample: a seeded partial shuffle.
    Rng rng(params.seed);
    const std::size_t n_train = std::min(n, std::max(nlist, nlist * params.train_per_list));
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = 0; i < n_train; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    std::vector<float> sample(n_train * dim);
    for (std::size_t i = 0; i < n_train; ++i) {
        std::copy_n(data + static_cast<std::size_t>(order[i]) * dim, dim, sample.data() + i * dim);
    }

    // Lloyd iterations seeded with the first nlist sampled points.
    index.centroids_.assign(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(nlist * dim));
    std::vector<std::size_t> assign(n_train);
    std::vector<double> sums(nlist * dim);
    std::vector<std::size_t> counts(nlist);
    for (int it = 0; it < params.iterations; ++it) {
        for (std::size_t i = 0; i < n_train; ++i) {
            assign[i] = nearest_centroid(sample.data() + i * dim, index.centroids_, dim, kernels);
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n_train; ++i) {
            ++counts[assign[i]];
            for (std::size_t k = 0; k < dim; ++k) {
                sums[assign[i] * dim + k] += sample[i * dim + k];
            }
        }
        for (std::size_t c = 0; c < nlist; ++c) {
            if (counts[c] == 0) {
                // Re-seed empty clusters from a deterministic sample point.
                const std::size_t pick = (c * 2654435761u + static_cast<std::size_t>(it)) % n_train;
                std::copy_n(sample.data() + pick * dim, dim, index.centroids_.data() + c * dim);
                continue;
            }
            for (std::size_t k = 0; k < dim; ++k) {
                index.centroids_[c * dim + k] = static_cast<float>(sums[c * dim + k] / counts[c]);
            }
        }
    }

    index.lists_.assign(nlist, {});
    for (std::size_t i = 0; i < n; ++i) {
        index.lists_[nearest_centroid(data + i * dim, index.centroids_, dim, kernels)].push_back(
            static_cast<std::uint32_t>(i));
    }
    index.set_nprobe(params.nprobe != 0 ? params.nprobe : default_nprobe(nlist));
    return index;
}

void IvfIndex::search(const float* data, const float* query, std::size_t k, std::vector<float>& out_sq,
                      std::vector<std::uint32_t>& out_index) const {
    const simd::KernelTable& kernels = simd::active();
    const std::size_t nl = nlist();
    std::vector<std::pair<float, std::uint32_t>> coarse(nl);
    for (std::size_t c = 0; c < nl; ++c) {
        coarse[c] = {kernels.l2_sqr(query, centroids_.data() + c * dim_, dim_), static_cast<std::uint32_t>(c)};
    }
    const std::size_t probes = std::min(nprobe_, nl);
    std::partial_sort(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(probes), coarse.end());

    // Max-heap of the k best (distance, id) pairs.
    std::vector<std::pair<float, std::uint32_t>> heap;
    heap.reserve(k + 1);
    for (std::size_t p = 0; p < probes; ++p) {
        for (std::uint32_t id : lists_[coarse[p].second]) {
            const float d = kernels.l2_sqr(query, data + static_cast<std::size_t>(id) * dim_, dim_);
            const std::pair<float, std::uint32_t> entry{d, id};
            if (heap.size() < k) {
                heap.push_back(entry);
                std::push_heap(heap.begin(), heap.end());
            } else if (entry < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = entry;
                std::push_heap(heap.begin(), heap.end());
            }
        }
    }
    std::sort_heap(heap.begin(), heap.end());
    out_sq.clear();
    out_index.clear();
    for (const auto& [d, id] : heap) {
        out_sq.push_back(d);
        out_index.push_back(id);
    }
}

// Payload: u32 nlist, u32 nprobe, nlist*dim float32 centroids, then per list
// u32 length followed by u32 row ids.
std::vector<std::uint8_t> IvfIndex::serialize() const {
    std::vector<std::uint8_t> out;
    io::append<std::uint32_t>(out, static_cast<std::uint32_t>(nlist()));
    io::append<std::uint32_t>(out, static_cast<std::uint32_t>(nprobe_));
    for (float f : centroids_) {
        io::append(out, f);
    }
    for (const auto& list : lists_) {
        io::append<std::uint32_t>(out, static_cast<std::uint32_t>(list.size()));
        for (std::uint32_t id : list) {
            io::append(out, id);
        }
    }
    return out;
}

IvfIndex IvfIndex::deserialize(std::span<const std::uint8_t> bytes, std::size_t n, std::size_t dim) {
    io::Reader r(bytes);
    std::uint32_t nlist = 0, nprobe = 0;
    MIAS_THROW_IF_NOT(r.get(nlist) && r.get(nprobe) && nlist > 0 && nlist <= n, ErrorCode::CorruptHeader,
                      "ivf payload header is invalid");
    IvfIndex index;
    index.dim_ = dim;
    index.centroids_.resize(static_cast<std::size_t>(nlist) * dim);
    MIAS_THROW_IF_NOT(r.get_floats(index.centroids_), ErrorCode::TruncatedRecord, "ivf centroids truncated");
    index.lists_.resize(nlist);
    std::size_t total = 0;
    for (auto& list : index.lists_) {
        std::uint32_t len = 0;
        MIAS_THROW_IF_NOT(r.get(len) && len <= n, ErrorCode::TruncatedRecord, "ivf list truncated");
        list.resize(len);
        for (auto& id : list) {
            MIAS_THROW_IF_NOT(r.get(id) && id < n, ErrorCode::CorruptHeader, "ivf list entry out of range");
        }
        total += len;
    }
    MIAS_THROW_IF_NOT(total == n && r.remaining() == 0, ErrorCode::CorruptHeader,
                      "ivf lists do not cover the bank exactly");
    index.set_nprobe(nprobe);
    return index;
}

} // namespace mias
