#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "drive/data.hpp"

namespace drive {

RawImage decode_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }

  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }

  RawImage raw;
  raw.width = image.width;
  raw.height = image.height;
  raw.channels = color ? 3 : 1;
  raw.max_value = 255.0;
  raw.data.assign(buffer.begin(), buffer.end());
  return raw;
}

void write_png_gray(const std::filesystem::path& path, std::span<const float> pixels,
                    std::size_t side) {
  if (pixels.size() != side * side) throw ShapeError("write_png_gray: size mismatch");
  std::vector<png_byte> bytes(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(pixels[i]), 0.0, 1.0);
    bytes[i] = static_cast<png_byte>(std::lround(v * 255.0));
  }

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(side);
  image.height = static_cast<png_uint_32>(side);
  image.format = PNG_FORMAT_GRAY;
  if (png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace drive
