// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "mias/anomaly_map.hpp"
#include "mias/error.hpp"
#include "mias/random.hpp"
#include "test_util.hpp"

using namespace mias;

namespace {

ScoreGrid grid(int rows, int cols, std::vector<float> v, PatchGeometry g = {}) {
    ScoreGrid s;
    s.rows = rows;
    s.cols = cols;
    s.scores = std::move(v);
    s.geometry = g;
    return s;
}

} // namespace

TEST_CASE("2x2 ramp upsampled to 4x4") {
    // Cell centers sit at pixels 0.5 and 2.5; pixel centers at 0.5 .. 3.5.
    // Weights: x = 0 -> clamp 0, x = 1 -> 0.25, x = 2 -> 0.75, x = 3 -> clamp 1.
    const AnomalyMap m = upsample(grid(2, 2, {0, 1, 0, 1}), 4, 4);
    const float ramp[4] = {0.0f, 0.25f, 0.75f, 1.0f};
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            CHECK(m.at(y, x) == ramp[x]);
        }
    }
    CHECK(!m.normalized);
}

TEST_CASE("scores land at their receptive-field centers") {
    // 30x30 patch grid from a 64-cell grid (window 5, stride 2) on a 256 image:
    // patch i is centered on cell 2i + 2.5, i.e. pixel coordinate 4 (2i + 2.5).
    Rng rng(1);
    std::vector<float> v(900);
    for (float& x : v) {
        x = static_cast<float>(rng.uniform());
    }
    const ScoreGrid s = grid(30, 30, v, {5, 2, 64, 64});
    const AnomalyMap m = upsample(s, 256, 256);
    auto coord = [](int p) { return std::clamp(((p + 0.5) / 4.0 - 2.5) / 2.0, 0.0, 29.0); };
    for (int y = 0; y < 256; y += 3) {
        for (int x = 0; x < 256; x += 5) {
            const double u = coord(y);
            const double w = coord(x);
            const int i0 = std::min(static_cast<int>(u), 28);
            const int j0 = std::min(static_cast<int>(w), 28);
            const double fy = u - i0;
            const double fx = w - j0;
            const double want = (1 - fy) * ((1 - fx) * s.at(i0, j0) + fx * s.at(i0, j0 + 1)) +
                                fy * ((1 - fx) * s.at(i0 + 1, j0) + fx * s.at(i0 + 1, j0 + 1));
            CHECK(m.at(y, x) == doctest::Approx(want).epsilon(1e-6));
        }
    }
    // Constant preservation and bounds.
    const AnomalyMap c = upsample(grid(30, 30, std::vector<float>(900, 0.7f), {5, 2, 64, 64}), 256, 256);
    for (float x : c.values) {
        REQUIRE(x == doctest::Approx(0.7f));
    }
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    for (float x : m.values) {
        REQUIRE(x >= *lo);
        REQUIRE(x <= *hi);
    }
}

TEST_CASE("upsampling to a smaller target fails") {
    CHECK_ERROR_CODE(upsample(grid(4, 4, std::vector<float>(16)), 3, 8), ErrorCode::TargetTooSmall);
}

TEST_CASE("min-max normalization") {
    AnomalyMap m(1, 3);
    m.values = {2, 4, 6};
    const AnomalyMap n = normalize(m);
    CHECK(n.normalized);
    CHECK(n.values == std::vector<float>{0.0f, 0.5f, 1.0f});
    CHECK(normalize(n).values == n.values);

    AnomalyMap flat(2, 2, 3.0f);
    CHECK(normalize(flat).values == std::vector<float>(4, 0.0f));
}

TEST_CASE("image score is the maximum") {
    CHECK(image_score(AnomalyMap(3, 3)) == 0.0f);
    AnomalyMap m(3, 3);
    m.at(1, 2) = 5.0f;
    CHECK(image_score(m) == 5.0f);
    Rng rng(3);
    AnomalyMap r(10, 10);
    float best = -1;
    for (float& x : r.values) {
        x = static_cast<float>(rng.uniform());
        best = std::max(best, x);
    }
    CHECK(image_score(r) == best);
}
