#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace relforge {

// 8-bit raster, row-major, interleaved channels (1, 3 or 4).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  bool operator==(const Image&) const = default;
};

// Binary NetPBM: P5 for 1 channel, P6 for 3, P7 (PAM) for 4. Maxval 255 only.
// Deterministic byte layout; writes are atomic (temp + rename). Throws IoError.
Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

}  // namespace relforge
