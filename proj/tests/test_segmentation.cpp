// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "mias/error.hpp"
#include "mias/segmentation.hpp"
#include "test_util.hpp"

using namespace mias;

namespace {

AnomalyMap rings(float center, float ring, float outer) {
    AnomalyMap m(5, 5, outer);
    m.normalized = true;
    for (int y = 1; y <= 3; ++y) {
        for (int x = 1; x <= 3; ++x) {
            m.at(y, x) = ring;
        }
    }
    m.at(2, 2) = center;
    return m;
}

BinaryMask square(int n, int lo, int hi) {
    BinaryMask m(n, n);
    for (int y = lo; y <= hi; ++y) {
        for (int x = lo; x <= hi; ++x) {
            m.at(y, x) = 1;
        }
    }
    return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        if (a.bits[i] && !b.bits[i]) {
            return false;
        }
    }
    return true;
}

// Counts calls and returns one fixed mask per rank.
class CountingDecoder final : public Decoder {
  public:
    MaskSet decode_point(const EmbeddingGrid*, const AnomalyMap& map, const PointPrompt& p) override {
        ++calls;
        MaskSet s;
        for (BinaryMask& m : s.masks) {
            m = BinaryMask(map.height, map.width);
            m.at(static_cast<int>(p.y), static_cast<int>(p.x)) = 1;
        }
        return s;
    }
    MaskSet decode_box(const EmbeddingGrid*, const AnomalyMap& map, const Box& b) override {
        ++calls;
        MaskSet s;
        for (int k = 0; k < 3; ++k) {
            s.masks[k] = BinaryMask(map.height, map.width);
            s.masks[k].at(b.y_min, b.x_min) = 1;
            s.masks[k].at(b.y_max, b.x_max) = static_cast<std::uint8_t>(k == 2);
        }
        return s;
    }
    std::string name() const override { return "counting"; }
    int calls = 0;
};

} // namespace

TEST_CASE("plateau: every rank is the plateau") {
    AnomalyMap m(12, 12);
    m.normalized = true;
    for (int y = 3; y <= 7; ++y) {
        for (int x = 2; x <= 9; ++x) {
            m.at(y, x) = 1.0f;
        }
    }
    const MaskSet s = reference_decode(m, {5.2, 4.6});
    for (const BinaryMask& mask : s.masks) {
        CHECK(mask == [] {
            BinaryMask r(12, 12);
            for (int y = 3; y <= 7; ++y) {
                for (int x = 2; x <= 9; ++x) {
                    r.at(y, x) = 1;
                }
            }
            return r;
        }());
    }
}

TEST_CASE("rings: each rank is the 4-connected superlevel region of alpha * seed value") {
    // Center 1.0, ring 0.6, outer 0.2: the outer value is below 0.25 * 1.0,
    // so only the center and ring pass the coarse threshold.
    const MaskSet low = reference_decode(rings(1.0f, 0.6f, 0.2f), {2, 2});
    CHECK(low.masks[0] == square(5, 1, 3));
    CHECK(low.masks[1] == square(5, 1, 3));
    CHECK(low.masks[2] == square(5, 2, 2));

    // With the outer ring at 0.3 it joins the coarse mask only.
    const MaskSet high = reference_decode(rings(1.0f, 0.6f, 0.3f), {2, 2});
    CHECK(high.masks[0] == square(5, 0, 4));
    CHECK(high.masks[1] == square(5, 1, 3));
    CHECK(high.masks[2] == square(5, 2, 2));
}

TEST_CASE("radially decreasing map gives nested, shrinking masks containing the seed") {
    AnomalyMap m(41, 41);
    m.normalized = true;
    for (int y = 0; y < 41; ++y) {
        for (int x = 0; x < 41; ++x) {
            m.at(y, x) = static_cast<float>(std::exp(-((x - 22) * (x - 22) + (y - 19) * (y - 19)) / 120.0));
        }
    }
    const MaskSet s = reference_decode(m, {21.4, 19.3});
    CHECK(subset(s.masks[2], s.masks[1]));
    CHECK(subset(s.masks[1], s.masks[0]));
    CHECK(s.masks[2].count() < s.masks[1].count());
    CHECK(s.masks[1].count() < s.masks[0].count());
    for (const BinaryMask& mask : s.masks) {
        CHECK(mask.at(19, 21) == 1);
    }
    CHECK(&select_mask(s, 3) == &s.masks[2]);
    CHECK(&select_mask(s, 1) == &s.masks[0]);
    CHECK(select_mask(s).count() == s.masks[2].count());
    CHECK_ERROR_CODE(select_mask(s, 0), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(select_mask(s, 4), ErrorCode::InvalidArgument);
}

TEST_CASE("growth does not jump across a gap") {
    AnomalyMap m(5, 9, 0.9f);
    m.normalized = true;
    for (int y = 0; y < 5; ++y) {
        m.at(y, 4) = 0.1f;
    }
    const MaskSet s = reference_decode(m, {1, 2});
    CHECK(s.masks[0].count() == 20);
    CHECK(s.masks[0].at(2, 6) == 0);
}

TEST_CASE("zero seed value keeps only the seed pixel") {
    AnomalyMap m(6, 6);
    m.normalized = true;
    m.at(0, 0) = 1.0f;
    const MaskSet s = reference_decode(m, {3.4, 2.6});
    for (const BinaryMask& mask : s.masks) {
        CHECK(mask.count() == 1);
        CHECK(mask.at(3, 3) == 1);
    }
}

TEST_CASE("reference decoder validates alphas and prompts") {
    const AnomalyMap m = rings(1, 0.5f, 0.1f);
    CHECK_ERROR_CODE(reference_decode(m, {2, 2}, {0.5, 0.5, 0.75}), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(reference_decode(m, {2, 2}, {0.0, 0.5, 0.75}), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(reference_decode(m, {2, 2}, {0.25, 0.5, 1.5}), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(reference_decode(m, {5.0, 2}), ErrorCode::PromptOutOfBounds);
    CHECK_ERROR_CODE(reference_decode(m, {-0.1, 2}), ErrorCode::PromptOutOfBounds);
}

TEST_CASE("segment: points, box merging and bounds") {
    ReferenceDecoder ref;
    AnomalyMap m(20, 20);
    m.normalized = true;
    for (int y = 2; y <= 4; ++y) {
        for (int x = 2; x <= 4; ++x) {
            m.at(y, x) = 1.0f;
            m.at(y + 10, x + 12) = 0.8f;
        }
    }
    const MaskSet pt = segment(ref, nullptr, m, PointPrompt{3, 3});
    CHECK(pt.masks[2] == reference_decode(m, {3, 3}).masks[2]);

    const BoxPromptSet boxes{{Box{2, 2, 4, 4}, Box{14, 12, 16, 14}}};
    const MaskSet merged = segment(ref, nullptr, m, boxes);
    for (int k = 0; k < 3; ++k) {
        CHECK(merged.masks[k].count() == 18);
    }

    CountingDecoder counting;
    const MaskSet c = segment(counting, nullptr, m, boxes);
    CHECK(counting.calls == 2);
    CHECK(c.masks[0].count() == 2);
    CHECK(c.masks[2].count() == 4);

    const MaskSet none = segment(counting, nullptr, m, BoxPromptSet{});
    CHECK(none.masks[2].count() == 0);

    CHECK_ERROR_CODE(segment(ref, nullptr, m, PointPrompt{20.0, 3}), ErrorCode::PromptOutOfBounds);
    CHECK_ERROR_CODE(segment(ref, nullptr, m, BoxPromptSet{{Box{0, 0, 20, 4}}}), ErrorCode::PromptOutOfBounds);
    AnomalyMap raw = m;
    raw.normalized = false;
    CHECK_ERROR_CODE(segment(ref, nullptr, raw, PointPrompt{3, 3}), ErrorCode::InvalidArgument);
}
