#include "image_io.hpp"

#include "tetforge/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace tetforge::cli {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    if (what) *what = msg;
    png_longjmp(png, 1);
}

} // namespace

std::uint8_t to_byte(double v) {
    if (!(v > 0)) return 0;
    if (v >= 1) return 255;
    return std::uint8_t(std::lround(v * 255.0));
}

void write_png(const Image8& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3 && image.channels != 4) {
        throw ContractError("png channel count must be 1, 3 or 4");
    }
    if (image.data.size() != std::size_t(image.width) * image.height * image.channels) {
        throw ContractError("png pixel buffer has the wrong size");
    }
    File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path.string() + ": " + std::strerror(errno));
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("cannot allocate png writer for " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png encoding failed for " + path.string() + ": " + err);
    }
    png_init_io(png, f.get());
    const int type = image.channels == 1 ? PNG_COLOR_TYPE_GRAY
                     : image.channels == 3 ? PNG_COLOR_TYPE_RGB
                                           : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, png_uint_32(image.width), png_uint_32(image.height), 8, type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = std::size_t(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y) {
        png_write_row(png, image.data.data() + stride * y);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(f.get()) != 0) throw IoError("cannot write " + path.string());
}

Image8 read_png(const std::filesystem::path& path) {
    File f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot read " + path.string());
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("cannot allocate png reader for " + path.string());
    }
    Image8 img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png decoding failed for " + path.string() + ": " + err);
    }
    png_init_io(png, f.get());
    png_read_png(png, info, PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND, nullptr);
    img.width = int(png_get_image_width(png, info));
    img.height = int(png_get_image_height(png, info));
    img.channels = int(png_get_channels(png, info));
    png_bytepp rows = png_get_rows(png, info);
    const std::size_t stride = std::size_t(img.width) * img.channels;
    img.data.resize(stride * img.height);
    for (int y = 0; y < img.height; ++y) std::memcpy(img.data.data() + stride * y, rows[y], stride);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_pfm(const FloatImage& image, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little);
    if (image.data.size() != std::size_t(image.width) * image.height) {
        throw ContractError("pfm pixel buffer has the wrong size");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "Pf\n" << image.width << ' ' << image.height << "\n-1.0\n";
    for (int y = image.height - 1; y >= 0; --y) {
        out.write(reinterpret_cast<const char*>(image.data.data() + std::size_t(y) * image.width),
                  std::streamsize(image.width * sizeof(float)));
    }
    if (!out) throw IoError("cannot write " + path.string());
}

FloatImage read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string magic;
    FloatImage img;
    double scale = 0;
    in >> magic >> img.width >> img.height >> scale;
    in.get();
    if (!in || magic != "Pf" || img.width < 0 || img.height < 0) throw IoError("not a greyscale PFM: " + path.string());
    if (scale >= 0) throw IoError("big-endian PFM is not supported: " + path.string());
    img.data.resize(std::size_t(img.width) * img.height);
    for (int y = img.height - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(img.data.data() + std::size_t(y) * img.width),
                std::streamsize(img.width * sizeof(float)));
    }
    if (!in) throw IoError("truncated PFM: " + path.string());
    return img;
}

} // namespace tetforge::cli
