// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <chrono>
#include <cstring>
#include <thread>
#include <unistd.h>

#include <json.hpp>

#include "mias/error.hpp"
#include "mias/random.hpp"
#include "mias/segmentation.hpp"
#include "mias/transport.hpp"
#include "mias/wire_protocol.hpp"
#include "test_util.hpp"

using namespace mias;

namespace {

const std::string kEcho = MIAS_ECHO_DECODER;

// In-process byte pipe.
struct Pipe {
    Pipe() {
        int fds[2];
        REQUIRE(::pipe(fds) == 0);
        transport = std::make_unique<FdTransport>(fds[0], fds[1], true);
    }
    std::unique_ptr<FdTransport> transport;
};

AnomalyMap blob_map(int h, int w) {
    AnomalyMap m(h, w);
    m.image_id = "test/ungood/007.png";
    m.normalized = true;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            m.at(y, x) = static_cast<float>(std::exp(-((x - 7) * (x - 7) + (y - 4) * (y - 4)) / 10.0));
        }
    }
    return m;
}

DecoderRequest request_for(const AnomalyMap& m, Prompt p) {
    DecoderRequest r;
    r.image_id = m.image_id;
    r.prompt = std::move(p);
    r.height = m.height;
    r.width = m.width;
    r.embedding_ref = "emb:" + m.image_id;
    r.map = m.values;
    return r;
}

std::uint32_t u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

MaskSet thresholded(const AnomalyMap& m) {
    BinaryMask b(m.height, m.width);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        b.bits[i] = m.values[i] >= 0.5f;
    }
    return MaskSet{{b, b, b}, {0.5f, 0.6f, 0.7f}};
}

} // namespace

TEST_CASE("mask bit packing is row-major, MSB first") {
    BinaryMask m(3, 5);
    m.at(0, 0) = 1;
    m.at(1, 2) = 1; // bit 7
    m.at(2, 4) = 1; // bit 14
    const auto bytes = pack_mask(m);
    REQUIRE(bytes.size() == 2);
    CHECK(bytes[0] == 0x81);
    CHECK(bytes[1] == 0x02);
    CHECK(unpack_mask(bytes, 3, 5) == m);
    CHECK_ERROR_CODE(unpack_mask(std::vector<std::uint8_t>(3), 3, 5), ErrorCode::MalformedResponse);

    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        BinaryMask r(1 + static_cast<int>(rng.below(40)), 1 + static_cast<int>(rng.below(40)));
        for (auto& b : r.bits) {
            b = static_cast<std::uint8_t>(rng.below(2));
        }
        CHECK(unpack_mask(pack_mask(r), r.height, r.width) == r);
    }
}

TEST_CASE("request encoding is byte-stable and decodes back") {
    AnomalyMap m(2, 3);
    m.image_id = "a/b.png";
    m.values = {0.0f, 0.25f, 0.5f, 0.75f, 1.0f, -2.0f};
    const DecoderRequest r = request_for(m, PointPrompt{1.5, 1.0});
    const auto bytes = encode_request(r);
    CHECK(bytes == encode_request(r));

    const std::string header =
        R"({"version":1,"image_id":"a/b.png","prompt":{"type":"point","coords":[1.5,1.0]},)"
        R"("map_shape":[2,3],"embedding_ref":"emb:a/b.png"})";
    REQUIRE(bytes.size() == 4 + header.size() + 6 * 4);
    CHECK(u32le(bytes.data()) == header.size());
    CHECK(std::string(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(header.size())) == header);
    const std::uint8_t* payload = bytes.data() + 4 + header.size();
    for (int i = 0; i < 6; ++i) {
        float v;
        const std::uint32_t bits = u32le(payload + 4 * i);
        std::memcpy(&v, &bits, 4);
        CHECK(v == m.values[i]);
    }

    Pipe p;
    p.transport->write_all(bytes);
    DecoderRequest back;
    REQUIRE(read_request(*p.transport, back, 1000));
    CHECK(encode_request(back) == bytes);

    const DecoderRequest boxes = request_for(m, BoxPromptSet{{Box{0, 0, 1, 1}, Box{2, 0, 2, 1}}});
    p.transport->write_all(encode_request(boxes));
    REQUIRE(read_request(*p.transport, back, 1000));
    REQUIRE(std::holds_alternative<BoxPromptSet>(back.prompt));
    CHECK(std::get<BoxPromptSet>(back.prompt).boxes == std::get<BoxPromptSet>(boxes.prompt).boxes);
}

TEST_CASE("responses round trip; error frames and bad shapes are reported") {
    const AnomalyMap m = blob_map(9, 13);
    const MaskSet want = thresholded(m);
    DecoderResponse resp;
    resp.image_id = m.image_id;
    resp.height = m.height;
    resp.width = m.width;
    resp.masks.assign(want.masks.begin(), want.masks.end());
    resp.confidences = {0.5f, 0.6f, 0.7f};

    Pipe p;
    p.transport->write_all(encode_response(resp));
    const DecoderResponse got = read_response(*p.transport, 1000);
    CHECK(got.image_id == m.image_id);
    CHECK(got.masks.size() == 3);
    CHECK(got.masks[1] == want.masks[1]);
    CHECK(got.confidences == std::vector<float>{0.5f, 0.6f, 0.7f});

    p.transport->write_all(encode_error(m.image_id, "boom"));
    CHECK_ERROR_CODE(read_response(*p.transport, 1000), ErrorCode::DecoderFailure);
    p.transport->write_all(encode_error(m.image_id, "old", "protocol-version"));
    CHECK_ERROR_CODE(read_response(*p.transport, 1000), ErrorCode::ProtocolVersion);

    DecoderResponse two = resp;
    two.masks.pop_back();
    two.confidences.pop_back();
    p.transport->write_all(encode_response(two));
    CHECK_ERROR_CODE(read_response(*p.transport, 1000), ErrorCode::MalformedResponse);
    // The two announced masks were drained; the stream is still in sync.
    p.transport->write_all(encode_response(resp));
    CHECK(read_response(*p.transport, 1000).masks.size() == 3);

    const std::string junk = "{not json";
    std::vector<std::uint8_t> frame(4);
    const auto n = static_cast<std::uint32_t>(junk.size());
    std::memcpy(frame.data(), &n, 4);
    frame.insert(frame.end(), junk.begin(), junk.end());
    p.transport->write_all(frame);
    CHECK_ERROR_CODE(read_response(*p.transport, 1000), ErrorCode::MalformedResponse);
}

TEST_CASE("a silent peer times out") {
    Pipe p;
    const auto start = std::chrono::steady_clock::now();
    CHECK_ERROR_CODE(read_response(*p.transport, 200), ErrorCode::Timeout);
    CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(150));
}

TEST_CASE("echo decoder subprocess: segment passes its masks through unchanged") {
    const AnomalyMap m = blob_map(9, 13);
    ExternalDecoder dec(std::make_unique<SubprocessTransport>(kEcho + " serve"), {5000, "emb:"});
    const MaskSet got = segment(dec, nullptr, m, PointPrompt{7, 4});
    const MaskSet want = thresholded(m);
    for (int k = 0; k < 3; ++k) {
        CHECK(got.masks[k] == want.masks[k]);
        CHECK(got.confidences[k] == want.confidences[k]);
    }
    // Several requests on one connection.
    for (int i = 0; i < 5; ++i) {
        CHECK(segment(dec, nullptr, m, BoxPromptSet{{Box{5, 2, 9, 6}}}).masks[2] == want.masks[2]);
    }
}

TEST_CASE("echo decoder faults surface as protocol errors") {
    const AnomalyMap m = blob_map(6, 6);
    const PointPrompt pt{2, 2};
    auto run = [&](const std::string& flags, int timeout = 5000) {
        ExternalDecoder dec(std::make_unique<SubprocessTransport>(kEcho + " " + flags), {timeout, ""});
        return segment(dec, nullptr, m, pt);
    };
    CHECK_ERROR_CODE(run("--masks 2"), ErrorCode::MalformedResponse);
    CHECK_ERROR_CODE(run("--masks 4"), ErrorCode::MalformedResponse);
    CHECK_ERROR_CODE(run("--version 2"), ErrorCode::ProtocolVersion);
    CHECK(run("--version 1").masks[0].count() > 0);
    CHECK_ERROR_CODE(run("--error"), ErrorCode::DecoderFailure);
    CHECK_ERROR_CODE(run("--wrong-id"), ErrorCode::MalformedResponse);
    CHECK_ERROR_CODE(run("--sleep 3000", 200), ErrorCode::Timeout);
    CHECK_ERROR_CODE(run("--no-such-flag"), ErrorCode::DecoderFailure);
}

TEST_CASE("a decoder that exits is a decoder failure naming the command") {
    ExternalDecoder dec(std::make_unique<SubprocessTransport>("exit 7"), {2000, ""});
    try {
        segment(dec, nullptr, blob_map(4, 4), PointPrompt{1, 1});
        FAIL("expected a decoder failure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DecoderFailure);
        CHECK(std::string(e.what()).find("exit 7") != std::string::npos);
    }
}

TEST_CASE("unix socket transport") {
    TempDir dir;
    const std::string path = (dir / "dec.sock").string();
    int server_status = -1;
    std::thread server([&] { server_status = std::system((kEcho + " --socket " + path).c_str()); });
    std::unique_ptr<UnixSocketTransport> client;
    for (int i = 0; i < 100 && !client; ++i) {
        try {
            client = std::make_unique<UnixSocketTransport>(path);
        } catch (const Error&) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }
    REQUIRE(client != nullptr);
    {
        ExternalDecoder dec(std::move(client), {5000, ""});
        const AnomalyMap m = blob_map(9, 13);
        CHECK(segment(dec, nullptr, m, PointPrompt{7, 4}).masks[2] == thresholded(m).masks[2]);
    }
    server.join();
    CHECK(server_status == 0);

    // In-process listener and client.
    UnixSocketListener listener(dir / "l.sock");
    UnixSocketTransport c(dir / "l.sock");
    FdTransport s = listener.accept(1000);
    const std::vector<std::uint8_t> hello{1, 2, 3};
    c.write_all(hello);
    std::vector<std::uint8_t> got(3);
    s.read_exact(got, 1000);
    CHECK(got == hello);
}
