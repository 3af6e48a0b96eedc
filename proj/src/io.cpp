// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace omnistereo {

namespace {

void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// Next whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& s) {
  std::string tok;
  while (s >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(s, rest);
  }
  return {};
}

}  // namespace

void write_pgm(const std::string& path, const GrayImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width)
    fail(path, "pixel count does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open for writing");
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) fail(path, "write failed");
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open");
  if (next_token(f) != "P5") fail(path, "not a binary PGM");
  GrayImage img;
  try {
    img.width = std::stoi(next_token(f));
    img.height = std::stoi(next_token(f));
    if (std::stoi(next_token(f)) != 255) fail(path, "maxval must be 255");
  } catch (const std::logic_error&) {
    fail(path, "malformed PGM header");
  }
  if (img.width <= 0 || img.height <= 0) fail(path, "bad dimensions");
  f.get();  // single whitespace byte after maxval
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (!f) fail(path, "truncated pixel data");
  return img;
}

void write_pfm(const std::string& path, const FloatImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width)
    fail(path, "pixel count does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open for writing");
  f << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int row = img.height - 1; row >= 0; --row)
    f.write(reinterpret_cast<const char*>(img.pixels.data() +
                                          static_cast<std::size_t>(row) *
                                              img.width),
            static_cast<std::streamsize>(img.width * sizeof(float)));
  if (!f) fail(path, "write failed");
}

FloatImage read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open");
  if (next_token(f) != "Pf") fail(path, "not a grayscale PFM");
  FloatImage img;
  double scale = 0.0;
  try {
    img.width = std::stoi(next_token(f));
    img.height = std::stoi(next_token(f));
    scale = std::stod(next_token(f));
  } catch (const std::logic_error&) {
    fail(path, "malformed PFM header");
  }
  if (img.width <= 0 || img.height <= 0) fail(path, "bad dimensions");
  if (scale >= 0.0) fail(path, "big-endian PFM not supported");
  f.get();  // single whitespace byte after scale
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width);
  for (int row = img.height - 1; row >= 0; --row)
    f.read(reinterpret_cast<char*>(img.pixels.data() +
                                   static_cast<std::size_t>(row) * img.width),
           static_cast<std::streamsize>(img.width * sizeof(float)));
  if (!f) fail(path, "truncated pixel data");
  return img;
}

void write_ppm(const std::string& path, int height, int width,
               const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3)
    fail(path, "pixel count does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open for writing");
  f << "P6\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(rgb.data()),
          static_cast<std::streamsize>(rgb.size()));
  if (!f) fail(path, "write failed");
}

GrayImage to_gray(const FloatImage& img) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (float v : img.pixels) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  GrayImage out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.assign(img.pixels.size(), 0);
  if (!(hi > lo)) return out;
  const double span = static_cast<double>(hi) - lo;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = img.pixels[i];
    if (!std::isfinite(v)) continue;
    const double t = (static_cast<double>(v) - lo) / span;
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  return out;
}

}  // namespace omnistereo
