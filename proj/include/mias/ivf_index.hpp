// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mias {

struct IvfParams {
    std::size_t nlist = 0;  // 0: round(sqrt(N))
    std::size_t nprobe = 0; // 0: default_nprobe(nlist)
    int iterations = 10;
    std::size_t train_per_list = 64;
    std::uint64_t seed = 42;
};

// Inverted-list index with a k-means coarse quantizer. Lists hold row ids into
// the caller's vector matrix; distances are computed exactly on the rows of the
// probed lists, so any returned distance is a true distance to a stored vector.
class IvfIndex {
  public:
    IvfIndex() = default;

    static IvfIndex train(const float* data, std::size_t n, std::size_t dim, const IvfParams& params);

    // Squared distances to the k nearest rows found in the nprobe closest lists,
    // ascending. Fewer than k entries if the probed lists hold fewer rows.
    void search(const float* data, const float* query, std::size_t k, std::vector<float>& out_sq,
                std::vector<std::uint32_t>& out_index) const;

    std::size_t nlist() const { return centroids_.size() / (dim_ == 0 ? 1 : dim_); }
    std::size_t nprobe() const { return nprobe_; }
    void set_nprobe(std::size_t nprobe);
    std::size_t dim() const { return dim_; }
    const std::vector<std::vector<std::uint32_t>>& lists() const { return lists_; }
    const std::vector<float>& centroids() const { return centroids_; }

    std::vector<std::uint8_t> serialize() const;
    static IvfIndex deserialize(std::span<const std::uint8_t> bytes, std::size_t n, std::size_t dim);

    static std::size_t default_nprobe(std::size_t nlist);

  private:
    std::size_t dim_ = 0;
    std::size_t nprobe_ = 1;
    std::vector<float> centroids_;
    std::vector<std::vector<std::uint32_t>> lists_;
};

} // namespace mias
