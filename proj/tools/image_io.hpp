#pragma once

// 8-bit PNG and Portable Float Map output for rendered views. Pixel arrays
// are row-major with row 0 at the top of the image.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tetforge::cli {

struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> data;
};

// Throws IoError naming the path.
void write_png(const Image8& image, const std::filesystem::path& path);
Image8 read_png(const std::filesystem::path& path);

struct FloatImage {
    int width = 0;
    int height = 0;
    std::vector<float> data; // greyscale
};

// Greyscale PFM ("Pf"), scale -1.0 (little-endian), rows stored bottom to top.
void write_pfm(const FloatImage& image, const std::filesystem::path& path);
FloatImage read_pfm(const std::filesystem::path& path);

// [0,1] -> 0..255 with rounding; values outside are clamped.
std::uint8_t to_byte(double v);

} // namespace tetforge::cli
