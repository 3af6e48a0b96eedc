// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "omnistereo/io.hpp"
#include "omnistereo/random.hpp"

using namespace omnistereo;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("pgm round-trips random 8-bit rasters") {
  Rand rng(5);
  GrayImage img;
  img.height = 13;
  img.width = 7;
  for (int i = 0; i < 13 * 7; ++i)
    img.pixels.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 255)));
  const std::string path = temp_path("io_roundtrip.pgm");
  write_pgm(path, img);
  const GrayImage back = read_pgm(path);
  CHECK(back.height == img.height);
  CHECK(back.width == img.width);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("pgm reader accepts comment lines and rejects bad input") {
  const std::string path = temp_path("io_comment.pgm");
  {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n# a comment\n2 2\n# another\n255\n";
    const unsigned char px[4] = {1, 2, 3, 4};
    f.write(reinterpret_cast<const char*>(px), 4);
  }
  const GrayImage img = read_pgm(path);
  CHECK(img.height == 2);
  CHECK(img.width == 2);
  CHECK(img.pixels == std::vector<std::uint8_t>{1, 2, 3, 4});

  const std::string bad = temp_path("io_bad.pgm");
  {
    std::ofstream f(bad, std::ios::binary);
    f << "P6\n2 2\n255\nxxxx";
  }
  CHECK_THROWS_AS(read_pgm(bad), std::runtime_error);
  {
    std::ofstream f(bad, std::ios::binary);
    f << "P5\n4 4\n255\nxx";  // truncated pixel data
  }
  CHECK_THROWS_AS(read_pgm(bad), std::runtime_error);
  CHECK_THROWS_AS(read_pgm(temp_path("io_missing.pgm")), std::runtime_error);
}

TEST_CASE("pfm round-trips floats bit-exactly including infinity") {
  Rand rng(6);
  FloatImage img;
  img.height = 5;
  img.width = 9;
  for (int i = 0; i < 5 * 9; ++i)
    img.pixels.push_back(static_cast<float>(rng.uniform(-10.0, 10.0)));
  img.pixels[3] = std::numeric_limits<float>::infinity();
  img.pixels[10] = 0.0f;
  const std::string path = temp_path("io_roundtrip.pfm");
  write_pfm(path, img);
  const FloatImage back = read_pfm(path);
  CHECK(back.height == img.height);
  CHECK(back.width == img.width);
  REQUIRE(back.pixels.size() == img.pixels.size());
  CHECK(std::memcmp(back.pixels.data(), img.pixels.data(),
                    img.pixels.size() * sizeof(float)) == 0);
}

TEST_CASE("pfm rows are stored bottom-up with little-endian scale") {
  FloatImage img;
  img.height = 2;
  img.width = 1;
  img.pixels = {1.0f, 2.0f};  // row 0 = top
  const std::string path = temp_path("io_orient.pfm");
  write_pfm(path, img);

  std::ifstream f(path, std::ios::binary);
  std::string magic, dims1, dims2, scale;
  f >> magic >> dims1 >> dims2 >> scale;
  CHECK(magic == "Pf");
  CHECK(dims1 == "1");
  CHECK(dims2 == "2");
  CHECK(scale.substr(0, 1) == "-");
  f.get();  // single whitespace after the scale
  float first = 0.0f;
  f.read(reinterpret_cast<char*>(&first), sizeof(first));
  CHECK(first == 2.0f);  // bottom row comes first in the file

  const FloatImage back = read_pfm(path);
  CHECK(back.pixels[0] == 1.0f);
  CHECK(back.pixels[1] == 2.0f);
}

TEST_CASE("pfm reader rejects big-endian and color headers") {
  const std::string path = temp_path("io_bad.pfm");
  {
    std::ofstream f(path, std::ios::binary);
    f << "Pf\n1 1\n1.0\n";
    const float v = 1.0f;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(read_pfm(path), std::runtime_error);  // big-endian scale
  {
    std::ofstream f(path, std::ios::binary);
    f << "PF\n1 1\n-1.0\n";
    const float v[3] = {1, 2, 3};
    f.write(reinterpret_cast<const char*>(v), 12);
  }
  CHECK_THROWS_AS(read_pfm(path), std::runtime_error);  // color magic
}

TEST_CASE("ppm writes the P6 header and payload") {
  const std::string path = temp_path("io_color.ppm");
  write_ppm(path, 1, 2, {255, 0, 0, 0, 0, 255});
  std::ifstream f(path, std::ios::binary);
  std::string magic;
  f >> magic;
  CHECK(magic == "P6");
  CHECK_THROWS_AS(write_ppm(path, 2, 2, {1, 2, 3}), std::runtime_error);
}

TEST_CASE("gray preview normalizes the finite range") {
  FloatImage img;
  img.height = 1;
  img.width = 4;
  img.pixels = {2.0f, 4.0f, std::numeric_limits<float>::infinity(), 3.0f};
  const GrayImage g = to_gray(img);
  CHECK(g.pixels[0] == 0);
  CHECK(g.pixels[1] == 255);
  CHECK(g.pixels[2] == 0);
  CHECK(g.pixels[3] == 128);

  FloatImage flat;
  flat.height = 1;
  flat.width = 2;
  flat.pixels = {5.0f, 5.0f};
  const GrayImage gf = to_gray(flat);
  CHECK(gf.pixels == std::vector<std::uint8_t>{0, 0});
}

TEST_CASE("unit conversion rescales pixels to [0, 1]") {
  GrayImage img;
  img.height = 1;
  img.width = 3;
  img.pixels = {0, 128, 255};
  const auto u = to_unit(img);
  CHECK(u[0] == 0.0f);
  CHECK(u[1] == doctest::Approx(128.0f / 255.0f));
  CHECK(u[2] == 1.0f);
}

}  // TEST_SUITE
