// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian stream helpers shared by the file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <utility>
#include <string>
#include <vector>

namespace mias::io {

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(b[i], b[sizeof(T) - 1 - i]);
        }
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <typename T>
void put(std::ostream& out, T v) {
    v = byteswap_if_big(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        return false;
    }
    v = byteswap_if_big(v);
    return true;
}

inline void put_floats(std::ostream& out, std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (float f : values) {
            put(out, f);
        }
    }
}

inline bool get_floats(std::istream& in, std::span<float> values) {
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size_bytes()))) {
        return false;
    }
    if constexpr (std::endian::native == std::endian::big) {
        for (float& f : values) {
            f = byteswap_if_big(f);
        }
    }
    return true;
}

inline void put_bytes(std::vector<std::uint8_t>& buf, const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf.insert(buf.end(), p, p + n);
}

template <typename T>
void append(std::vector<std::uint8_t>& buf, T v) {
    v = byteswap_if_big(v);
    put_bytes(buf, &v, sizeof(T));
}

// Cursor over an in-memory little-endian buffer.
class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
    bool get(T& v) {
        if (remaining() < sizeof(T)) {
            return false;
        }
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        v = byteswap_if_big(v);
        return true;
    }

    bool get_floats(std::span<float> out) {
        for (float& f : out) {
            if (!get(f)) {
                return false;
            }
        }
        return true;
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

  private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

} // namespace mias::io
