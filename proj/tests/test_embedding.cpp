// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "mias/embedding.hpp"
#include "mias/error.hpp"
#include "mias/random.hpp"
#include "test_util.hpp"

using namespace mias;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, c);
    for (float& p : img.pixels) {
        p = static_cast<float>(rng.uniform());
    }
    return img;
}

EmbeddingGrid random_grid(const std::string& id, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    EmbeddingGrid g(id, c, h, w);
    for (float& f : g.features) {
        f = static_cast<float>(rng.normal());
    }
    return g;
}

void put_u32(std::fstream& f, std::streamoff at, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.seekp(at);
    f.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

TEST_CASE("toy encoder maps a zero image to a zero grid of the configured shape") {
    const Image img(1024, 1024, 1);
    const EmbeddingGrid g = toy_encode(img, {});
    CHECK(g.channels == 256);
    CHECK(g.height == 64);
    CHECK(g.width == 64);
    for (float f : g.features) {
        REQUIRE(f == 0.0f);
    }
}

TEST_CASE("toy encoder is deterministic and seed dependent") {
    const Image img = random_image(256, 256, 1, 3);
    const EmbeddingGrid a = toy_encode(img, {});
    const EmbeddingGrid b = toy_encode(img, {});
    CHECK(a.features == b.features);
    ToyEncoderConfig other;
    other.seed = 43;
    CHECK(toy_encode(img, other).features != a.features);
}

TEST_CASE("toy encoder matches a direct evaluation of the projection") {
    const Image img = random_image(128, 128, 3, 9);
    ToyEncoderConfig cfg;
    cfg.out_dim = 16;
    const ToyEncoder enc = ToyEncoder::for_image(cfg, 128, 128, 3);
    REQUIRE(enc.block_height() == 2);
    REQUIRE(enc.input_dim() == 12);
    const EmbeddingGrid g = enc.encode(img, "x");
    CHECK(g.image_id == "x");
    for (int cell : {0, 5, 64 * 31 + 17, 64 * 64 - 1}) {
        const int gy = cell / 64;
        const int gx = cell % 64;
        for (int o = 0; o < cfg.out_dim; ++o) {
            double want = 0.0;
            int k = 0;
            for (int r = 0; r < 2; ++r) {
                for (int c = 0; c < 2; ++c) {
                    for (int ch = 0; ch < 3; ++ch, ++k) {
                        want += static_cast<double>(enc.weight(o, k)) * img.at(gy * 2 + r, gx * 2 + c, ch);
                    }
                }
            }
            CHECK(g.at(o, gy, gx) == doctest::Approx(want).epsilon(1e-5));
        }
    }
    // Projection entries are N(0, 1 / input_dim): check the sample variance.
    double s2 = 0.0;
    for (int o = 0; o < 256; ++o) {
        for (int k = 0; k < 12; ++k) {
            const double w = ToyEncoder::for_image({}, 128, 128, 3).weight(o, k);
            s2 += w * w;
        }
    }
    CHECK(s2 / (256 * 12) == doctest::Approx(1.0 / 12).epsilon(0.15));
}

TEST_CASE("one bright block changes only its own cell") {
    Image img(256, 256, 1);
    for (int y = 8; y < 12; ++y) {
        for (int x = 20; x < 24; ++x) {
            img.at(y, x) = 1.0f; // block (2, 5) at b = 4
        }
    }
    const EmbeddingGrid g = toy_encode(img, {});
    bool differs = false;
    for (int c = 0; c < g.channels; ++c) {
        differs |= g.at(c, 2, 5) != g.at(c, 0, 0);
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                if (y != 2 || x != 5) {
                    REQUIRE(g.at(c, y, x) == g.at(c, 0, 0));
                }
            }
        }
    }
    CHECK(differs);
}

TEST_CASE("toy encoder is linear in the pixel values") {
    const Image img = random_image(256, 256, 1, 21);
    Image half = img;
    for (float& p : half.pixels) {
        p *= 0.5f;
    }
    const EmbeddingGrid a = toy_encode(img, {});
    const EmbeddingGrid b = toy_encode(half, {});
    for (std::size_t i = 0; i < a.features.size(); i += 97) {
        CHECK(b.features[i] == doctest::Approx(0.5 * a.features[i]).epsilon(1e-5).scale(1e-6));
    }
}

TEST_CASE("toy encoder rejects images not divisible into blocks") {
    CHECK_ERROR_CODE(toy_encode(Image(100, 128, 1), {}), ErrorCode::DimensionMismatch);
}

TEST_CASE("embedding container round trip is bitwise") {
    TempDir dir;
    std::vector<EmbeddingGrid> grids;
    for (int i = 0; i < 3; ++i) {
        grids.push_back(random_grid("img/" + std::to_string(i) + ".png", 8, 6, 7, 100 + i));
    }
    CHECK(write_embeddings(grids, dir / "e.bin") == 3);
    const auto back = read_embeddings(dir / "e.bin");
    REQUIRE(back.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back[i].image_id == grids[i].image_id);
        CHECK(back[i].channels == 8);
        CHECK(back[i].height == 6);
        CHECK(back[i].width == 7);
        CHECK(std::memcmp(back[i].features.data(), grids[i].features.data(), grids[i].features.size() * 4) == 0);
    }
    EmbeddingReader reader(dir / "e.bin");
    CHECK(reader.read(1).image_id == grids[1].image_id);
    CHECK(reader.read(2).features == grids[2].features);
    CHECK(reader.ids().size() == 3);
}

TEST_CASE("container size follows from the format") {
    TempDir dir;
    const std::string id = "brain/test/ungood/0001.png";
    const std::vector<EmbeddingGrid> one{random_grid(id, 256, 64, 64, 5)};
    write_embeddings(one, dir / "e.bin");
    const std::uintmax_t want = 8 + 5 * 4 + 256ull * 64 * 64 * 4 + 4 + id.size();
    CHECK(std::filesystem::file_size(dir / "e.bin") == want);
}

TEST_CASE("empty container yields an empty stream") {
    TempDir dir;
    CHECK(write_embeddings(std::span<const EmbeddingGrid>{}, dir / "e.bin") == 0);
    EmbeddingReader reader(dir / "e.bin");
    CHECK(reader.count() == 0);
    CHECK(!reader.next().has_value());
}

TEST_CASE("declared count larger than the records is a truncated record") {
    TempDir dir;
    std::vector<EmbeddingGrid> grids;
    for (int i = 0; i < 4; ++i) {
        grids.push_back(random_grid(std::to_string(i), 4, 5, 5, i));
    }
    write_embeddings(grids, dir / "e.bin");
    // Keep the four records but claim five and drop the id table.
    const std::uintmax_t records_end = kEmbeddingHeaderBytes + 4ull * 4 * 5 * 5 * 4;
    std::filesystem::resize_file(dir / "e.bin", records_end);
    {
        std::fstream f(dir / "e.bin", std::ios::in | std::ios::out | std::ios::binary);
        put_u32(f, 8, 5);
        put_u32(f, 24, static_cast<std::uint32_t>(records_end + 4 * 5 * 5 * 4));
    }
    CHECK_ERROR_CODE(read_embeddings(dir / "e.bin"), ErrorCode::TruncatedRecord);
}

TEST_CASE("bad magic, bad header and mixed shapes are rejected") {
    TempDir dir;
    std::vector<EmbeddingGrid> grids{random_grid("a", 4, 5, 5, 1)};
    write_embeddings(grids, dir / "e.bin");
    {
        std::fstream f(dir / "e.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("MIASEMB2", 8);
    }
    CHECK_ERROR_CODE(read_embeddings(dir / "e.bin"), ErrorCode::CorruptHeader);

    write_embeddings(grids, dir / "f.bin");
    {
        std::fstream f(dir / "f.bin", std::ios::in | std::ios::out | std::ios::binary);
        put_u32(f, 24, 7); // id table inside the header
    }
    CHECK_ERROR_CODE(read_embeddings(dir / "f.bin"), ErrorCode::CorruptHeader);

    std::ofstream(dir / "short.bin") << "MIAS";
    CHECK_ERROR_CODE(read_embeddings(dir / "short.bin"), ErrorCode::CorruptHeader);

    grids.push_back(random_grid("b", 4, 5, 6, 2));
    CHECK_ERROR_CODE(write_embeddings(grids, dir / "g.bin"), ErrorCode::HeterogeneousShape);

    grids.pop_back();
    write_embeddings(grids, dir / "h.bin");
    CHECK_ERROR_CODE(EmbeddingReader(dir / "h.bin", EmbeddingShape{256, 64, 64}), ErrorCode::DimensionMismatch);
}
