// SPDX-License-Identifier: Apache-2.0
#include "mias/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <png.h>
#include <vector>

#include "mias/error.hpp"

namespace mias {

namespace {

struct ErrorSink {
    char message[256] = {};
};

void on_error(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
    std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
    png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

struct File {
    std::FILE* fp;
    ~File() {
        if (fp != nullptr) {
            std::fclose(fp);
        }
    }
};

struct Decoded {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<unsigned char> data;
};

// libpng reports errors by longjmp, so everything that must be cleaned up
// lives outside this frame.
bool decode(std::FILE* fp, Decoded& out, ErrorSink& sink) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
    if (png == nullptr) {
        std::snprintf(sink.message, sizeof(sink.message), "out of memory");
        return false;
    }
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep>* volatile rows = nullptr;
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        delete rows;
        png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
        if (sink.message[0] == '\0') {
            std::snprintf(sink.message, sizeof(sink.message), "out of memory");
        }
        return false;
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    png_set_strip_alpha(png);
    if (depth == 16) {
        png_set_swap(png); // native little-endian 16-bit samples
    }
    png_read_update_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.data.resize(stride * out.height);
    rows = new std::vector<png_bytep>(out.height);
    for (png_uint_32 y = 0; y < out.height; ++y) {
        (*rows)[y] = out.data.data() + y * stride;
    }
    png_read_image(png, rows->data());
    png_read_end(png, nullptr);
    delete rows;
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool encode(std::FILE* fp, png_uint_32 width, png_uint_32 height, int channels, int depth,
            std::vector<unsigned char>& data, ErrorSink& sink) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
    if (png == nullptr) {
        return false;
    }
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep>* volatile rows = nullptr;
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        delete rows;
        png_destroy_write_struct(&png, info != nullptr ? &info : nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) {
        png_set_swap(png);
    }
    const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
    rows = new std::vector<png_bytep>(height);
    for (png_uint_32 y = 0; y < height; ++y) {
        (*rows)[y] = data.data() + y * stride;
    }
    png_write_image(png, rows->data());
    png_write_end(png, nullptr);
    delete rows;
    png_destroy_write_struct(&png, &info);
    return true;
}

} // namespace

Image read_png(const std::filesystem::path& path) {
    File f{std::fopen(path.c_str(), "rb")};
    MIAS_THROW_IF_NOT(f.fp != nullptr, ErrorCode::Io, "cannot open " + path.string());
    unsigned char sig[8];
    MIAS_THROW_IF_NOT(std::fread(sig, 1, 8, f.fp) == 8 && png_sig_cmp(sig, 0, 8) == 0, ErrorCode::Io,
                      "not a PNG file: " + path.string());
    std::rewind(f.fp);
    Decoded d;
    ErrorSink sink;
    MIAS_THROW_IF_NOT(decode(f.fp, d, sink), ErrorCode::Io,
                      "cannot decode " + path.string() + ": " + sink.message);
    Image img(static_cast<int>(d.height), static_cast<int>(d.width), d.channels);
    if (d.bit_depth == 16) {
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            std::uint16_t v;
            std::memcpy(&v, d.data.data() + 2 * i, 2);
            img.pixels[i] = static_cast<float>(v / 65535.0);
        }
    } else {
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            img.pixels[i] = static_cast<float>(d.data[i] / 255.0);
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image, int bit_depth) {
    MIAS_THROW_IF_NOT(image.channels == 1 || image.channels == 3, ErrorCode::InvalidArgument,
                      "PNG output needs 1 or 3 channels");
    MIAS_THROW_IF_NOT(bit_depth == 8 || bit_depth == 16, ErrorCode::InvalidArgument, "bit depth must be 8 or 16");
    MIAS_THROW_IF_NOT(image.height > 0 && image.width > 0, ErrorCode::InvalidArgument, "empty image");
    const double top = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<unsigned char> data(image.pixels.size() * (bit_depth / 8));
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const double v = std::nearbyint(std::clamp(static_cast<double>(image.pixels[i]), 0.0, 1.0) * top);
        if (bit_depth == 16) {
            const auto s = static_cast<std::uint16_t>(v);
            std::memcpy(data.data() + 2 * i, &s, 2);
        } else {
            data[i] = static_cast<unsigned char>(v);
        }
    }
    File f{std::fopen(path.c_str(), "wb")};
    MIAS_THROW_IF_NOT(f.fp != nullptr, ErrorCode::Io, "cannot create " + path.string());
    ErrorSink sink;
    MIAS_THROW_IF_NOT(encode(f.fp, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
                             image.channels, bit_depth, data, sink),
                      ErrorCode::Io, "cannot write " + path.string() + ": " + sink.message);
    MIAS_THROW_IF_NOT(std::fflush(f.fp) == 0, ErrorCode::Io, "cannot write " + path.string());
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
    Image img(mask.height, mask.width, 1);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        img.pixels[i] = mask.bits[i] ? 1.0f : 0.0f;
    }
    write_png(path, img);
}

} // namespace mias
