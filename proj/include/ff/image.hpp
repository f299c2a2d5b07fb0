#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ff {

// Decoded 8-bit image, interleaved rows. channels is 1 (gray) or 3 (RGB).
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// PNG or JPEG, detected from file magic. Throws DecodeError / EmptyImage.
RawImage decode_image(const std::filesystem::path& path);

// Fixture writers (grayscale only; PNG lossless, JPEG quality 1..100).
void write_gray_png(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels);
void write_gray_jpeg(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels, int quality = 92);

}  // namespace ff
