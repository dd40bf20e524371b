// SPDX-License-Identifier: Apache-2.0
// Test double for the decoder bridge: answers every request with three copies
// of the request's map thresholded at 0.5. Flags inject faults:
//   --masks N      send N masks instead of 3
//   --version V    answer with "version": V
//   --error        answer with an error frame
//   --sleep MS     wait before answering
//   --wrong-id     answer with a different image id
//   --socket PATH  serve one connection on a unix socket instead of stdio
// A trailing "serve" argument is accepted (the engine appends it).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <thread>

#include <json.hpp>

#include "mias/error.hpp"
#include "mias/transport.hpp"
#include "mias/wire_protocol.hpp"

namespace {

struct Faults {
    int masks = 3;
    int version = -1;
    bool error = false;
    int sleep_ms = 0;
    bool wrong_id = false;
};

void serve(mias::Transport& t, const Faults& f) {
    mias::DecoderRequest req;
    while (mias::read_request(t, req)) {
        if (f.sleep_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(f.sleep_ms));
        }
        if (f.error) {
            t.write_all(mias::encode_error(req.image_id, "injected failure"));
            continue;
        }
        mias::BinaryMask m(req.height, req.width);
        for (std::size_t i = 0; i < req.map.size(); ++i) {
            m.bits[i] = req.map[i] >= 0.5f ? 1 : 0;
        }
        mias::DecoderResponse resp;
        resp.image_id = f.wrong_id ? req.image_id + "-other" : req.image_id;
        resp.height = req.height;
        resp.width = req.width;
        for (int k = 0; k < f.masks; ++k) {
            resp.masks.push_back(m);
            resp.confidences.push_back(0.5f + 0.1f * static_cast<float>(k));
        }
        std::vector<std::uint8_t> frame = mias::encode_response(resp);
        if (f.version >= 0) {
            // Re-emit the header with a version field.
            std::uint32_t len;
            std::memcpy(&len, frame.data(), 4);
            auto header = nlohmann::ordered_json::parse(frame.begin() + 4, frame.begin() + 4 + len);
            header["version"] = f.version;
            const std::string text = header.dump();
            std::vector<std::uint8_t> out(4);
            const auto n = static_cast<std::uint32_t>(text.size());
            std::memcpy(out.data(), &n, 4);
            out.insert(out.end(), text.begin(), text.end());
            out.insert(out.end(), frame.begin() + 4 + len, frame.end());
            frame = std::move(out);
        }
        t.write_all(frame);
    }
}

} // namespace

int main(int argc, char** argv) {
    Faults f;
    std::string socket_path;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--masks" && i + 1 < argc) {
            f.masks = std::stoi(argv[++i]);
        } else if (a == "--version" && i + 1 < argc) {
            f.version = std::stoi(argv[++i]);
        } else if (a == "--error") {
            f.error = true;
        } else if (a == "--sleep" && i + 1 < argc) {
            f.sleep_ms = std::stoi(argv[++i]);
        } else if (a == "--wrong-id") {
            f.wrong_id = true;
        } else if (a == "--socket" && i + 1 < argc) {
            socket_path = argv[++i];
        } else if (a != "serve") {
            std::fprintf(stderr, "echo_decoder: unknown argument %s\n", a.c_str());
            return 2;
        }
    }
    try {
        if (!socket_path.empty()) {
            mias::UnixSocketListener listener(socket_path);
            mias::FdTransport conn = listener.accept(10000);
            serve(conn, f);
        } else {
            mias::FdTransport io(0, 1, false);
            serve(io, f);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "echo_decoder: %s\n", e.what());
        return 1;
    }
    return 0;
}
