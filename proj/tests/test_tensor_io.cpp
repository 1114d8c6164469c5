#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "inkwash/image_io.hpp"
#include "inkwash/tensor.hpp"
#include "inkwash/weights.hpp"

using inkwash::ImageTensor;

namespace {

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("PPM load matches a hand-written decode of the raw bytes") {
  const std::string dir = fixtures::make_temp_dir();
  const std::string path = dir + "/four.ppm";
  // 2x2 P6, pixel bytes {0,128,255,64} replicated across the three channels
  std::vector<std::uint8_t> bytes = {'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n'};
  const std::uint8_t px[4] = {0, 128, 255, 64};
  for (std::uint8_t b : px) {
    bytes.push_back(b);
    bytes.push_back(b);
    bytes.push_back(b);
  }
  write_bytes(path, bytes);

  const auto img = inkwash::load_image<double>(path);
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  REQUIRE(img.channels == 3);
  // independent scaling: byte / 255
  const double expect[4] = {0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0};
  for (int p = 0; p < 4; ++p)
    for (int c = 0; c < 3; ++c) REQUIRE(img.data[p * 3 + c] == expect[p]);
}

TEST_CASE("PPM header comments and whitespace are handled") {
  const std::string dir = fixtures::make_temp_dir();
  const std::string path = dir + "/c.pgm";
  std::string header = "P5\n# a comment\n 2 1\n# another\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.push_back(7);
  bytes.push_back(250);
  write_bytes(path, bytes);
  const auto img = inkwash::load_image<float>(path);
  REQUIRE(img.channels == 1);
  REQUIRE(img.at(0, 0, 0) == Catch::Approx(7.0 / 255.0));
  REQUIRE(img.at(0, 1, 0) == Catch::Approx(250.0 / 255.0));
}

TEST_CASE("save quantization: clamp then round half up") {
  const std::string dir = fixtures::make_temp_dir();
  const std::string path = dir + "/q.pgm";
  ImageTensor<double> img(1, 3, 1);
  img.data = {1.0, -0.2, 0.5};
  inkwash::save_image(img, path);
  const auto bytes = read_bytes(path);
  // P5\n3 1\n255\n + 3 raster bytes
  REQUIRE(bytes.size() >= 3);
  const std::uint8_t* raster = bytes.data() + bytes.size() - 3;
  CHECK(raster[0] == 255);
  CHECK(raster[1] == 0);
  CHECK(raster[2] == 128);
}

TEST_CASE("PNG single-pixel scaling identities") {
  const std::string dir = fixtures::make_temp_dir();
  for (int byte : {255, 0}) {
    const std::string path = dir + "/one" + std::to_string(byte) + ".png";
    ImageTensor<double> img(1, 1, 1, byte / 255.0);
    inkwash::save_image(img, path);
    const auto back = inkwash::load_image<double>(path);
    REQUIRE(back.height == 1);
    REQUIRE(back.width == 1);
    REQUIRE(back.channels == 1);
    REQUIRE(back.data[0] == (byte == 255 ? 1.0 : 0.0));
  }
}

TEST_CASE("round trip is exact for tensors on the 1/255 grid") {
  const std::string dir = fixtures::make_temp_dir();
  std::mt19937 gen(11);
  for (const char* ext : {".png", ".ppm"}) {
    ImageTensor<float> img(9, 7, 3);
    for (float& v : img.data) v = static_cast<float>((gen() % 256) / 255.0);
    const std::string path = dir + "/rt" + ext;
    inkwash::save_image(img, path);
    const auto back = inkwash::load_image<float>(path);
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i) REQUIRE(back.data[i] == img.data[i]);
  }
  // grayscale round trip
  ImageTensor<float> gray(5, 4, 1);
  for (float& v : gray.data) v = static_cast<float>((gen() % 256) / 255.0);
  for (const char* ext : {".png", ".pgm"}) {
    const std::string path = dir + "/rtg" + ext;
    inkwash::save_image(gray, path);
    const auto back = inkwash::load_image<float>(path);
    REQUIRE(back.same_shape(gray));
    for (std::size_t i = 0; i < gray.data.size(); ++i) REQUIRE(back.data[i] == gray.data[i]);
  }
}

TEST_CASE("PNG alpha channel is dropped on load, keeping the stored color") {
  const std::string dir = fixtures::make_temp_dir();
  const std::string path = dir + "/rgba.png";
  // write a 2x1 RGBA PNG directly through libpng
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  im.width = 2;
  im.height = 1;
  im.format = PNG_FORMAT_RGBA;
  const std::uint8_t pixels[8] = {200, 100, 50, 0 /* fully transparent */,
                                  10, 20, 30, 255};
  REQUIRE(png_image_write_to_file(&im, path.c_str(), 0, pixels, 0, nullptr) != 0);
  png_image_free(&im);

  const auto img = inkwash::load_image<double>(path);
  REQUIRE(img.channels == 3);
  CHECK(img.at(0, 0, 0) == 200.0 / 255.0);
  CHECK(img.at(0, 0, 1) == 100.0 / 255.0);
  CHECK(img.at(0, 0, 2) == 50.0 / 255.0);
  CHECK(img.at(0, 1, 0) == 10.0 / 255.0);
}

TEST_CASE("load errors: missing file, bad magic, truncated raster, bad maxval") {
  const std::string dir = fixtures::make_temp_dir();
  CHECK_THROWS_AS(inkwash::load_image<float>(dir + "/nope.png"), inkwash::IoError);

  const std::string garbage = dir + "/g.bin";
  write_bytes(garbage, {'X', 'X', 'X', 'X', 0, 0});
  CHECK_THROWS_AS(inkwash::load_image<float>(garbage), inkwash::IoError);

  const std::string trunc = dir + "/t.ppm";
  write_bytes(trunc, {'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 1, 2, 3});
  CHECK_THROWS_AS(inkwash::load_image<float>(trunc), inkwash::IoError);

  const std::string maxval = dir + "/m.pgm";
  write_bytes(maxval, {'P', '5', '\n', '1', ' ', '1', '\n', '9', '9', '\n', 1});
  CHECK_THROWS_AS(inkwash::load_image<float>(maxval), inkwash::IoError);
}

TEST_CASE("save errors: bad extension and channel mismatch") {
  const std::string dir = fixtures::make_temp_dir();
  ImageTensor<float> rgb(2, 2, 3, 0.5f);
  ImageTensor<float> gray(2, 2, 1, 0.5f);
  CHECK_THROWS_AS(inkwash::save_image(rgb, dir + "/x.bmp"), inkwash::IoError);
  CHECK_THROWS_AS(inkwash::save_image(rgb, dir + "/x.pgm"), inkwash::ValueError);
  CHECK_THROWS_AS(inkwash::save_image(gray, dir + "/x.ppm"), inkwash::ValueError);
  CHECK_THROWS_AS(inkwash::save_image(rgb, "/nonexistent-dir/x.png"), inkwash::IoError);
}

TEST_CASE("resize_longest_edge no-op below the limit") {
  const auto img = fixtures::natural_image<float>(100, 50, 3, 3);
  const auto out = inkwash::resize_longest_edge(img, 100);
  REQUIRE(out.height == 100);
  REQUIRE(out.width == 50);
  REQUIRE(out.data == img.data);
}

TEST_CASE("resize_longest_edge halves a 2:1 image to the limit") {
  ImageTensor<float> img(1536, 768, 1, 0.25f);
  const auto out = inkwash::resize_longest_edge(img, 768);
  REQUIRE(out.height == 768);
  REQUIRE(out.width == 384);
}

TEST_CASE("bilinear resize preserves constants") {
  ImageTensor<double> img(200, 100, 3, 0.37);
  const auto out = inkwash::resize_longest_edge(img, 50);
  REQUIRE(out.height == 50);
  REQUIRE(out.width == 25);
  for (double v : out.data) REQUIRE(v == Catch::Approx(0.37).margin(1e-12));
}

TEST_CASE("resize_longest_edge is idempotent") {
  for (auto [h, w] : {std::pair{123, 77}, {64, 200}, {31, 31}}) {
    const auto img = fixtures::natural_image<float>(h, w, 3, 17);
    const auto once = inkwash::resize_longest_edge(img, 50);
    const auto twice = inkwash::resize_longest_edge(once, 50);
    REQUIRE(once.same_shape(twice));
    REQUIRE(once.data == twice.data);
  }
}

TEST_CASE("weight file: minimal single layer round trip") {
  const std::string dir = fixtures::make_temp_dir();
  const std::string path = dir + "/one.nstw";
  inkwash::ConvWeights cw;
  cw.name = "conv1_1";
  cw.out_channels = cw.in_channels = cw.kernel_h = cw.kernel_w = 1;
  cw.kernel = {2.0f};
  cw.bias = {0.5f};
  inkwash::write_weight_file(path, {cw});
  const auto layers = inkwash::read_weight_file(path);
  REQUIRE(layers.size() == 1);
  CHECK(layers[0].name == "conv1_1");
  CHECK(layers[0].kernel == std::vector<float>{2.0f});
  CHECK(layers[0].bias == std::vector<float>{0.5f});
}

TEST_CASE("weight file: random multi-layer round trip is bitwise") {
  const std::string dir = fixtures::make_temp_dir();
  std::mt19937 gen(5);
  auto unit = [&gen] { return gen() * (1.0 / 4294967296.0); };
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<inkwash::ConvWeights> layers(3);
    for (int i = 0; i < 3; ++i) {
      auto& cw = layers[i];
      cw.name = "layer" + std::to_string(trial) + "_" + std::to_string(i);
      cw.out_channels = 1 + gen() % 5;
      cw.in_channels = 1 + gen() % 5;
      cw.kernel_h = 1 + 2 * (gen() % 3);
      cw.kernel_w = 1 + 2 * (gen() % 3);
      cw.kernel.resize(cw.kernel_count());
      for (float& v : cw.kernel) v = static_cast<float>(unit() * 20 - 10);
      cw.bias.resize(cw.out_channels);
      for (float& v : cw.bias) v = static_cast<float>(unit() * 2 - 1);
    }
    const std::string path = dir + "/rt" + std::to_string(trial) + ".nstw";
    inkwash::write_weight_file(path, layers);
    const auto back = inkwash::read_weight_file(path);
    REQUIRE(back.size() == layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      CHECK(back[i].name == layers[i].name);
      CHECK(back[i].out_channels == layers[i].out_channels);
      CHECK(back[i].in_channels == layers[i].in_channels);
      CHECK(back[i].kernel_h == layers[i].kernel_h);
      CHECK(back[i].kernel_w == layers[i].kernel_w);
      REQUIRE(std::memcmp(back[i].kernel.data(), layers[i].kernel.data(),
                          layers[i].kernel.size() * sizeof(float)) == 0);
      REQUIRE(std::memcmp(back[i].bias.data(), layers[i].bias.data(),
                          layers[i].bias.size() * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("weight file: malformed inputs are rejected") {
  const std::string dir = fixtures::make_temp_dir();
  inkwash::ConvWeights cw;
  cw.name = "aa";
  cw.out_channels = cw.in_channels = cw.kernel_h = cw.kernel_w = 1;
  cw.kernel = {1.0f};
  cw.bias = {0.0f};
  const std::string good = dir + "/good.nstw";
  inkwash::write_weight_file(good, {cw});
  auto bytes = read_bytes(good);

  SECTION("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    write_bytes(dir + "/badmagic.nstw", bad);
    CHECK_THROWS_WITH(inkwash::read_weight_file(dir + "/badmagic.nstw"),
                      Catch::Matchers::ContainsSubstring("bad magic"));
  }
  SECTION("version mismatch") {
    auto bad = bytes;
    bad[4] = 9;
    write_bytes(dir + "/badver.nstw", bad);
    CHECK_THROWS_WITH(inkwash::read_weight_file(dir + "/badver.nstw"),
                      Catch::Matchers::ContainsSubstring("version"));
  }
  SECTION("trailing bytes") {
    auto bad = bytes;
    bad.push_back(0);
    write_bytes(dir + "/trail.nstw", bad);
    CHECK_THROWS_WITH(inkwash::read_weight_file(dir + "/trail.nstw"),
                      Catch::Matchers::ContainsSubstring("length mismatch"));
  }
  SECTION("truncated file") {
    auto bad = bytes;
    bad.resize(bad.size() - 3);
    write_bytes(dir + "/trunc.nstw", bad);
    CHECK_THROWS_WITH(inkwash::read_weight_file(dir + "/trunc.nstw"),
                      Catch::Matchers::ContainsSubstring("length mismatch"));
  }
  SECTION("duplicate layer names") {
    inkwash::ConvWeights cw2 = cw;
    cw2.name = "bb";
    inkwash::write_weight_file(dir + "/two.nstw", {cw, cw2});
    auto two = read_bytes(dir + "/two.nstw");
    // patch the second layer's name bytes ("bb", same length) to "aa"
    bool patched = false;
    for (std::size_t i = 0; i + 1 < two.size(); ++i)
      if (two[i] == 'b' && two[i + 1] == 'b') {
        two[i] = 'a';
        two[i + 1] = 'a';
        patched = true;
        break;
      }
    REQUIRE(patched);
    write_bytes(dir + "/dup.nstw", two);
    CHECK_THROWS_WITH(inkwash::read_weight_file(dir + "/dup.nstw"),
                      Catch::Matchers::ContainsSubstring("duplicate"));
    CHECK_THROWS_AS(inkwash::write_weight_file(dir + "/dup2.nstw",
                                               std::vector<inkwash::ConvWeights>{cw, cw}),
                    inkwash::ValueError);
  }
}
