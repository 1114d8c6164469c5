#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "inkwash/error.hpp"
#include "inkwash/tensor.hpp"

namespace inkwash {

namespace detail {

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    char a = static_cast<char>(std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])));
    if (a != suffix[i]) return false;
  }
  return true;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file: " + path);
  f.seekg(0, std::ios::end);
  std::streamoff n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n > 0 ? n : 0));
  if (!bytes.empty()) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("cannot read file: " + path);
  return bytes;
}

// PNM token reader: skips whitespace and '#' comments.
struct PnmCursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  int next_token_uint(const std::string& path) {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw IoError("malformed PNM header in " + path);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000L) throw IoError("PNM header value out of range in " + path);
      ++pos;
    }
    return static_cast<int>(v);
  }
};

template <typename T>
ImageTensor<T> load_pnm(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const int channels = bytes[1] == '6' ? 3 : 1;
  PnmCursor cur{bytes, 2};
  const int w = cur.next_token_uint(path);
  const int h = cur.next_token_uint(path);
  const int maxval = cur.next_token_uint(path);
  if (w < 1 || h < 1) throw IoError("zero-size PNM image: " + path);
  if (maxval != 255) throw IoError("unsupported PNM maxval (need 255): " + path);
  if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos]))
    throw IoError("malformed PNM header in " + path);
  ++cur.pos;  // single whitespace byte before the raster
  const std::size_t need = static_cast<std::size_t>(h) * w * channels;
  if (bytes.size() - cur.pos < need) throw IoError("truncated PNM raster: " + path);
  ImageTensor<T> img(h, w, channels);
  for (std::size_t i = 0; i < need; ++i)
    img.data[i] = static_cast<T>(bytes[cur.pos + i] / 255.0);
  return img;
}

template <typename T>
ImageTensor<T> load_png(const std::string& path) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str())) {
    std::string msg = im.message;
    png_image_free(&im);
    throw IoError("cannot read PNG " + path + ": " + msg);
  }
  const bool color = (im.format & PNG_FORMAT_FLAG_COLOR) != 0;
  // Request the alpha-bearing layout and drop the alpha plane ourselves, so
  // transparent pixels keep their stored color instead of being composited.
  im.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const int src_ch = color ? 4 : 2;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = im.message;
    png_image_free(&im);
    throw IoError("cannot decode PNG " + path + ": " + msg);
  }
  const int h = static_cast<int>(im.height);
  const int w = static_cast<int>(im.width);
  png_image_free(&im);
  if (h < 1 || w < 1) throw IoError("zero-size PNG image: " + path);
  ImageTensor<T> img(h, w, color ? 3 : 1);
  for (std::size_t p = 0; p < img.pixel_count(); ++p)
    for (int c = 0; c < img.channels; ++c)
      img.data[p * img.channels + c] = static_cast<T>(buf[p * src_ch + c] / 255.0);
  return img;
}

inline std::uint8_t quantize_unit(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));  // round half up
}

}  // namespace detail

/// Decode an 8-bit PNG, PPM (P6) or PGM (P5) file into a [0,1] tensor.
/// Color files yield 3 channels, grayscale 1; PNG alpha is dropped.
template <typename T>
ImageTensor<T> load_image(const std::string& path) {
  auto bytes = detail::read_file_bytes(path);
  static const std::uint8_t png_sig[4] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(png_sig, png_sig + 4, bytes.begin()))
    return detail::load_png<T>(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5'))
    return detail::load_pnm<T>(path, bytes);
  throw IoError("unsupported image format: " + path);
}

/// Encode as 8-bit PNG/PPM/PGM chosen by extension. Values are clamped to
/// [0,1] and quantized with round-half-up; load_image(save_image(x)) == x for
/// values already on the 1/255 grid.
template <typename T>
void save_image(const ImageTensor<T>& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw ValueError("save_image: channels must be 1 or 3");
  std::vector<std::uint8_t> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    bytes[i] = detail::quantize_unit(static_cast<double>(img.data[i]));

  if (detail::has_suffix(path, ".png")) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(img.width);
    im.height = static_cast<png_uint_32>(img.height);
    im.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&im, path.c_str(), 0, bytes.data(), 0, nullptr)) {
      std::string msg = im.message;
      png_image_free(&im);
      throw IoError("cannot write PNG " + path + ": " + msg);
    }
    png_image_free(&im);
    return;
  }
  if (detail::has_suffix(path, ".ppm") || detail::has_suffix(path, ".pgm")) {
    const bool ppm = detail::has_suffix(path, ".ppm");
    if (ppm && img.channels != 3) throw ValueError("save_image: .ppm requires 3 channels");
    if (!ppm && img.channels != 1) throw ValueError("save_image: .pgm requires 1 channel");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << (ppm ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("cannot write: " + path);
    return;
  }
  throw IoError("unsupported output image format (use .png/.ppm/.pgm): " + path);
}

}  // namespace inkwash
