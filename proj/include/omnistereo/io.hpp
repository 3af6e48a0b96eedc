// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace omnistereo {

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, top row first
};

struct FloatImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major, top row first; +inf allowed
};

/// Pixel values rescaled to [0, 1] floats.
inline std::vector<float> to_unit(const GrayImage& img) {
  std::vector<float> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  return out;
}

/// Binary 8-bit grayscale PGM (P5, maxval 255).
void write_pgm(const std::string& path, const GrayImage& img);
GrayImage read_pgm(const std::string& path);

/// Grayscale PFM ("Pf", scale -1.0 = little-endian), rows stored bottom-up
/// per the format; the in-memory layout stays top-down.
void write_pfm(const std::string& path, const FloatImage& img);
FloatImage read_pfm(const std::string& path);

/// Binary 8-bit RGB PPM (P6), interleaved row-major.
void write_ppm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& rgb);

/// Normalizes floats to [0, 255] bytes over the finite value range
/// (constant input maps to 0). Non-finite pixels map to 0.
GrayImage to_gray(const FloatImage& img);

}  // namespace omnistereo
