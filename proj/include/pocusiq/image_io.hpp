#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/core/kvconfig.hpp"
#include "pocusiq/image.hpp"
#include "pocusiq/preprocess.hpp"

namespace pocusiq {

namespace io_detail {

inline std::string lower_ext(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

inline std::vector<unsigned char> to_bytes(const Image& img) {
  const Image u8 = normalize(img, IntensityDomain::U8_0_255);
  std::vector<unsigned char> bytes(u8.size());
  auto px = u8.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(px[i], 0.0, 255.0)));
  }
  return bytes;
}

inline Image from_bytes(int w, int h, const unsigned char* bytes) {
  Image img(w, h, IntensityDomain::U8_0_255);
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = bytes[i];
  return img;
}

// PGM header tokens may be separated by arbitrary whitespace and comments.
inline std::string next_pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace io_detail

inline std::string meta_path_for(const std::string& image_path) { return image_path + ".meta"; }

/// Reads `spacing_x_mm` / `spacing_y_mm` from the `.meta` sidecar; 1.0 when
/// the sidecar or a key is absent.
inline std::pair<double, double> read_spacing_sidecar(const std::string& image_path) {
  const std::string meta = meta_path_for(image_path);
  if (!std::filesystem::exists(meta)) return {1.0, 1.0};
  const auto cfg = KeyValueConfig::load(meta);
  return {cfg.get_double("spacing_x_mm", 1.0), cfg.get_double("spacing_y_mm", 1.0)};
}

inline void write_spacing_sidecar(const std::string& image_path, double sx, double sy) {
  std::ofstream out(meta_path_for(image_path));
  if (!out) throw DataError("cannot write sidecar '" + meta_path_for(image_path) + "'");
  out << std::setprecision(17) << "spacing_x_mm=" << sx << "\nspacing_y_mm=" << sy << "\n";
}

inline Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path + "'");
  const std::string magic = io_detail::next_pgm_token(in);
  if (magic != "P5") {
    throw DataError("'" + path + "': unsupported PNM variant '" + magic +
                    "' (only binary grayscale P5 is accepted)");
  }
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(io_detail::next_pgm_token(in));
    h = std::stoi(io_detail::next_pgm_token(in));
    maxval = std::stoi(io_detail::next_pgm_token(in));
  } catch (const std::exception&) {
    throw DataError("'" + path + "': malformed PGM header");
  }
  if (w <= 0 || h <= 0) throw DataError("'" + path + "': invalid PGM dimensions");
  if (maxval != 255) {
    throw DataError("'" + path + "': unsupported PGM bit depth (maxval " + std::to_string(maxval) +
                    ", only 8-bit is accepted)");
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw DataError("'" + path + "': truncated PGM pixel data");
  }
  return io_detail::from_bytes(w, h, bytes.data());
}

inline void write_pgm(const std::string& path, const Image& img) {
  const auto bytes = io_detail::to_bytes(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path + "'");
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Image read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw DataError("cannot read PNG '" + path + "': " + png.message);
  }
  if (png.format != PNG_FORMAT_GRAY) {
    std::string why = "unsupported PNG format";
    if (png.format & PNG_FORMAT_FLAG_COLOR) {
      why = "color PNG (RGB/palette) is not supported; convert to 8-bit grayscale";
    } else if (png.format & PNG_FORMAT_FLAG_LINEAR) {
      why = "16-bit PNG is not supported; only 8-bit grayscale is accepted";
    } else if (png.format & PNG_FORMAT_FLAG_ALPHA) {
      why = "grayscale+alpha PNG is not supported; only 8-bit grayscale is accepted";
    }
    png_image_free(&png);
    throw DataError("'" + path + "': " + why);
  }
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG '" + path + "': " + msg);
  }
  return io_detail::from_bytes(static_cast<int>(png.width), static_cast<int>(png.height),
                               bytes.data());
}

inline void write_png(const std::string& path, const Image& img) {
  const auto bytes = io_detail::to_bytes(img);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot write PNG '" + path + "': " + msg);
  }
}

/// Loads an 8-bit grayscale PNG or binary PGM into the U8 domain, picking up
/// pixel spacing from the `<path>.meta` sidecar when present.
inline Image load_image(const std::string& path) {
  if (!std::filesystem::exists(path)) throw DataError("image '" + path + "' does not exist");
  const std::string ext = io_detail::lower_ext(path);
  Image img;
  if (ext == ".png") {
    img = read_png(path);
  } else if (ext == ".pgm") {
    img = read_pgm(path);
  } else {
    throw DataError("'" + path + "': unsupported extension (expected .png or .pgm)");
  }
  const auto [sx, sy] = read_spacing_sidecar(path);
  img.set_spacing(sx, sy);
  return img;
}

/// Writes an 8-bit image (values rescaled from the image's domain and
/// rounded) plus its spacing sidecar.
inline void save_image(const std::string& path, const Image& img) {
  const std::string ext = io_detail::lower_ext(path);
  if (ext == ".png") {
    write_png(path, img);
  } else if (ext == ".pgm") {
    write_pgm(path, img);
  } else {
    throw UsageError("'" + path + "': unsupported extension (expected .png or .pgm)");
  }
  write_spacing_sidecar(path, img.spacing_x(), img.spacing_y());
}

inline bool is_image_path(const std::filesystem::path& p) {
  const std::string ext = io_detail::lower_ext(p.string());
  return ext == ".png" || ext == ".pgm";
}

/// Image files directly inside `dir`, sorted by name.
inline std::vector<std::filesystem::path> list_images(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_path(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pocusiq
