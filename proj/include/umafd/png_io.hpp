#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace umafd::png {

/// Decoded image with interleaved samples widened to 16 bits.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  int bit_depth = 8;         // 8 or 16
  std::vector<std::uint16_t> samples;

  double max_value() const { return bit_depth == 16 ? 65535.0 : 255.0; }
};

/// Reads an 8/16-bit gray, gray+alpha, RGB or RGBA PNG; alpha is dropped and
/// palettes are expanded. Throws DataError naming the file on failure.
Image read(const std::filesystem::path& path);

void write_rgb8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                const std::vector<std::uint8_t>& rgb);
void write_gray16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                  const std::vector<std::uint16_t>& gray);

}  // namespace umafd::png
