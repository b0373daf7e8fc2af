#pragma once

// 8-bit RGB PNG reading/writing via libpng's simplified API. Reads convert
// gray/palette/alpha variants to RGB; 16-bit files are downsampled by the
// codec.

#include "rppg/core.hpp"

#include <png.h>

#include <filesystem>
#include <vector>

namespace rppg {

struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel
};

inline ImageU8 read_png_rgb8(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError("png: cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  ImageU8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("png: decode failed for " + path.string() + ": " + image.message);
  }
  return out;
}

inline void write_png_rgb8(const std::filesystem::path& path, const ImageU8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw ContractError("png: image buffer does not match its dimensions");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.rgb.data(), 0, nullptr))
    throw IoError("png: write failed for " + path.string() + ": " + image.message);
}

}  // namespace rppg
