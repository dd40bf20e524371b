// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "mias/error.hpp"
#include "mias/memory_bank.hpp"
#include "mias/patching.hpp"
#include "mias/random.hpp"
#include "test_util.hpp"

using namespace mias;

namespace {

std::vector<float> gaussian(std::size_t n, std::uint64_t seed, double sd = 1.0, double mean = 0.0) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (float& x : v) {
        x = static_cast<float>(mean + sd * rng.normal());
    }
    return v;
}

// Exact k-th nearest distance in long double.
double oracle(const std::vector<float>& data, std::size_t dim, const float* q, int k = 1) {
    std::vector<long double> d(data.size() / dim);
    for (std::size_t i = 0; i < d.size(); ++i) {
        long double s = 0;
        for (std::size_t c = 0; c < dim; ++c) {
            const long double t = static_cast<long double>(q[c]) - data[i * dim + c];
            s += t * t;
        }
        d[i] = s;
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    return static_cast<double>(std::sqrt(d[static_cast<std::size_t>(k - 1)]));
}

MemoryBank make_bank(const std::vector<float>& data, int dim, BankConfig cfg) {
    MemoryBank bank(dim, cfg);
    bank.add(data);
    bank.freeze();
    return bank;
}

void check_against_oracle(const MemoryBank& bank, const std::vector<float>& data, int dim,
                          const std::vector<float>& queries, int k = 1) {
    for (std::size_t q = 0; q < queries.size() / dim; ++q) {
        const float* qp = queries.data() + q * dim;
        const double want = oracle(data, dim, qp, k);
        const double got = bank.nn_distance({qp, static_cast<std::size_t>(dim)});
        CHECK(std::fabs(got - want) <= 1e-6 * want + 1e-6);
    }
}

} // namespace

TEST_CASE("hand example: equidistant stored points") {
    const MemoryBank bank = make_bank({0, 0, 3, 4}, 2, {});
    const float q[2] = {1.5f, 2.0f};
    CHECK(bank.nn_distance(q) == doctest::Approx(2.5));
    const float stored[2] = {3, 4};
    CHECK(bank.nn_distance(stored) == 0.0f);
}

TEST_CASE("bank size counts every patch, duplicates included") {
    EmbeddingGrid g("a", 4, 64, 64);
    const PatchGrid p = patchify(g);
    const std::vector<PatchGrid> two{p, p};
    const MemoryBank bank = MemoryBank::build(two);
    CHECK(bank.size() == 1800);
    CHECK(bank.dim() == 4);
    CHECK(bank.frozen());
}

TEST_CASE("every exact search path agrees with the oracle") {
    const int dim = 16;
    const std::size_t n = 5000;
    // Two regimes: spread-out data (the int8 screen discriminates) and a
    // tight cluster far from the origin (it does not, so cluster pruning runs).
    for (double sd : {1.0, 0.01}) {
        const auto data = gaussian(n * dim, 3, sd, 2.0);
        const auto queries = gaussian(64 * dim, 4, sd, 2.0);

        BankConfig brute;
        brute.screen_min_vectors = n + 1;
        const MemoryBank b0 = make_bank(data, dim, brute);
        CHECK(!b0.screened());
        CHECK(!b0.clustered());
        check_against_oracle(b0, data, dim, queries);

        const MemoryBank b1 = make_bank(data, dim, {});
        CHECK(b1.screened() != b1.clustered());
        check_against_oracle(b1, data, dim, queries);

        BankConfig cl;
        cl.screen_max_candidate_rate = 0.0;
        const MemoryBank b2 = make_bank(data, dim, cl);
        CHECK(b2.clustered());
        check_against_oracle(b2, data, dim, queries);

        for (std::size_t q = 0; q < 64; ++q) {
            const std::span<const float> qs{queries.data() + q * dim, dim};
            CHECK(b1.nn_distance(qs) == b0.nn_distance(qs));
            CHECK(b2.nn_distance(qs) == b0.nn_distance(qs));
            CHECK(b1.exact_nn_distance(qs) == b0.nn_distance(qs));
        }
    }
}

TEST_CASE("k-th neighbour scoring") {
    const int dim = 8;
    const std::size_t n = 6000;
    const auto data = gaussian(n * dim, 11);
    const auto queries = gaussian(32 * dim, 12);
    for (int k : {2, 5}) {
        BankConfig cfg;
        cfg.k = k;
        const MemoryBank bank = make_bank(data, dim, cfg);
        CHECK(bank.clustered());
        check_against_oracle(bank, data, dim, queries, k);
        BankConfig brute = cfg;
        brute.screen_min_vectors = n + 1;
        check_against_oracle(make_bank(data, dim, brute), data, dim, queries, k);
    }
}

TEST_CASE("batch scoring equals per-query scoring") {
    const int dim = 32;
    const auto data = gaussian(8000 * dim, 5);
    const MemoryBank bank = make_bank(data, dim, {});
    PatchGrid p;
    p.rows = 7;
    p.cols = 9;
    p.dim = dim;
    p.vectors = gaussian(63 * dim, 6);
    const ScoreGrid s = bank.score_patches(p);
    REQUIRE(s.rows == 7);
    REQUIRE(s.cols == 9);
    for (std::size_t i = 0; i < 63; ++i) {
        CHECK(s.scores[i] == bank.nn_distance(p.vector(i)));
        CHECK(s.scores[i] >= 0.0f);
    }
}

TEST_CASE("training patches score zero against their own bank") {
    Rng rng(2);
    std::vector<PatchGrid> grids;
    for (int i = 0; i < 6; ++i) {
        EmbeddingGrid g(std::to_string(i), 8, 64, 64);
        for (float& f : g.features) {
            f = static_cast<float>(rng.uniform());
        }
        grids.push_back(patchify(g));
    }
    const MemoryBank bank = MemoryBank::build(grids);
    for (const PatchGrid& p : grids) {
        const ScoreGrid s = bank.score_patches(p);
        CHECK(*std::max_element(s.scores.begin(), s.scores.end()) <= 1e-5f);
    }
}

TEST_CASE("save and load reproduce vectors and scores exactly") {
    TempDir dir;
    const int dim = 8;
    const auto data = gaussian(1800 * dim, 7);
    const auto queries = gaussian(50 * dim, 8);
    for (IndexKind kind : {IndexKind::Flat, IndexKind::Ivf}) {
        BankConfig cfg;
        cfg.index = kind;
        const MemoryBank bank = make_bank(data, dim, cfg);
        bank.save(dir / "bank.bin");
        const MemoryBank back = MemoryBank::load(dir / "bank.bin");
        CHECK(back.size() == 1800);
        CHECK(back.config().index == kind);
        CHECK(std::equal(back.vectors().begin(), back.vectors().end(), bank.vectors().begin()));
        for (std::size_t q = 0; q < 50; ++q) {
            const std::span<const float> qs{queries.data() + q * dim, dim};
            CHECK(back.nn_distance(qs) == bank.nn_distance(qs));
        }
    }
}

TEST_CASE("corrupt bank files are rejected") {
    TempDir dir;
    const MemoryBank bank = make_bank(gaussian(100 * 4, 1), 4, {});
    bank.save(dir / "b.bin");
    const auto size = std::filesystem::file_size(dir / "b.bin");
    std::filesystem::copy_file(dir / "b.bin", dir / "t.bin");
    std::filesystem::resize_file(dir / "t.bin", size - 3);
    CHECK_THROWS_AS(MemoryBank::load(dir / "t.bin"), Error);
    {
        std::fstream f(dir / "b.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_ERROR_CODE(MemoryBank::load(dir / "b.bin"), ErrorCode::CorruptHeader);
    CHECK_ERROR_CODE(MemoryBank::load(dir / "missing.bin"), ErrorCode::Io);
}

TEST_CASE("misuse errors") {
    MemoryBank empty(4);
    CHECK_ERROR_CODE(empty.freeze(), ErrorCode::EmptyTrainingSet);
    MemoryBank open(2);
    open.add(std::vector<float>{1, 2});
    const float q[2] = {0, 0};
    CHECK_ERROR_CODE(open.nn_distance(q), ErrorCode::NotFrozen);
    open.freeze();
    const float wrong[3] = {0, 0, 0};
    CHECK_ERROR_CODE(open.nn_distance(wrong), ErrorCode::DimensionMismatch);
    PatchGrid p;
    p.rows = p.cols = 1;
    p.dim = 3;
    p.vectors = {1, 2, 3};
    MemoryBank b2(2);
    CHECK_ERROR_CODE(b2.add(p), ErrorCode::HeterogeneousShape);
}

TEST_CASE("coreset: hand trace, identity and the subset bound") {
    const MemoryBank line = make_bank({0, 1, 2, 9}, 1, {});
    const MemoryBank half = line.subsample_coreset(0.5, 0);
    REQUIRE(half.size() == 2);
    std::vector<float> kept(half.vectors().begin(), half.vectors().end());
    std::sort(kept.begin(), kept.end());
    CHECK(kept == std::vector<float>{0, 9});

    const MemoryBank all = line.subsample_coreset(1.0);
    std::vector<float> every(all.vectors().begin(), all.vectors().end());
    std::sort(every.begin(), every.end());
    CHECK(every == std::vector<float>{0, 1, 2, 9});
    CHECK_ERROR_CODE(line.subsample_coreset(0.0), ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(line.subsample_coreset(1.5), ErrorCode::InvalidArgument);

    const int dim = 6;
    const auto data = gaussian(2000 * dim, 31);
    const MemoryBank full = make_bank(data, dim, {});
    const MemoryBank core = full.subsample_coreset(0.1);
    CHECK(core.size() == 200);
    const auto queries = gaussian(100 * dim, 32);
    for (std::size_t q = 0; q < 100; ++q) {
        const std::span<const float> qs{queries.data() + q * dim, dim};
        CHECK(core.nn_distance(qs) >= full.nn_distance(qs));
    }
}

TEST_CASE("IVF returns true distances with high recall") {
    const int dim = 16;
    const std::size_t n = 20000;
    const auto data = gaussian(n * dim, 41);
    const auto queries = gaussian(200 * dim, 42);
    BankConfig cfg;
    cfg.index = IndexKind::Ivf;
    const MemoryBank bank = make_bank(data, dim, cfg);
    REQUIRE(bank.ivf() != nullptr);
    int hits = 0;
    for (std::size_t q = 0; q < 200; ++q) {
        const std::span<const float> qs{queries.data() + q * dim, dim};
        const double exact = bank.exact_nn_distance(qs);
        const double approx = bank.nn_distance(qs);
        CHECK(approx >= exact - 1e-6);
        hits += approx == exact;
    }
    CHECK(hits >= 190);
}
