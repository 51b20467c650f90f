#include <png.h>

#include <cstring>
#include <string>

#include "epgd/imageio.hpp"

namespace epgd {

namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

QuantizedImage load_png(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.string().c_str())) {
    throw DecodeError(path.string() + ": " + png.image.message);
  }
  const auto format = png.image.format;
  if (!(format & PNG_FORMAT_FLAG_COLOR) || (format & PNG_FORMAT_FLAG_ALPHA) || (format & PNG_FORMAT_FLAG_LINEAR)) {
    throw UnsupportedFormatError(path.string() + ": expected 8-bit RGB without alpha");
  }
  if (png.image.width != png.image.height || png.image.width == 0) {
    throw UnsupportedFormatError(path.string() + ": expected a square image");
  }
  png.image.format = PNG_FORMAT_RGB;
  QuantizedImage img(static_cast<int>(png.image.width));
  if (!png_image_finish_read(&png.image, nullptr, img.data.data(), 0, nullptr)) {
    throw DecodeError(path.string() + ": " + png.image.message);
  }
  return img;
}

void save_png(const QuantizedImage& img, const std::filesystem::path& path) {
  if (img.side < 1 || img.data.size() != static_cast<std::size_t>(img.side) * img.side * 3) {
    throw ShapeError("save_png: malformed image buffer");
  }
  PngImage png;
  png.image.width = static_cast<png_uint_32>(img.side);
  png.image.height = static_cast<png_uint_32>(img.side);
  png.image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png.image, path.string().c_str(), 0, img.data.data(), 0, nullptr)) {
    throw Error(path.string() + ": " + png.image.message);
  }
}

}  // namespace epgd
