#include "marksweep/image_io.hpp"

#include <png.h>

#include <cmath>
#include <filesystem>
#include <vector>

namespace marksweep {

std::uint8_t quantize_byte(double v) {
  if (!std::isfinite(v)) return 0;
  double b = std::floor(v * 255.0 + 0.5);
  if (b < 0.0) return 0;
  if (b > 255.0) return 255;
  return static_cast<std::uint8_t>(b);
}

ImageTensor quantize8(const ImageTensor& img) {
  ImageTensor out = img;
  for (double& v : out.data()) v = quantize_byte(v) / 255.0;
  return out;
}

ImageTensor load_image(const std::string& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kFileNotFound, "no such file: " + path);

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorCode::kUnsupportedFormat, "not a readable PNG: " + path + " (" + image.message + ")");
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    fail(ErrorCode::kUnsupportedFormat, "16-bit PNG not supported: " + path);
  }
  if (image.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&image);
    fail(ErrorCode::kUnsupportedFormat, "PNG with alpha channel not supported: " + path);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::kUnsupportedFormat, "failed to decode PNG " + path + ": " + msg);
  }
  std::vector<double> data(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) data[i] = buffer[i] / 255.0;
  return ImageTensor(static_cast<int>(image.height), static_cast<int>(image.width), channels,
                     std::move(data));
}

void save_image(const ImageTensor& img, const std::string& path) {
  require(img.channels() == 1 || img.channels() == 3, ErrorCode::kInvalidArgument,
          "save_image expects 1 or 3 channels");
  require(img.height() > 0 && img.width() > 0, ErrorCode::kInvalidArgument, "save_image of empty image");
  std::vector<png_byte> buffer(img.size());
  auto src = img.data();
  for (std::size_t i = 0; i < src.size(); ++i) buffer[i] = quantize_byte(src[i]);

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::kIo, "cannot write " + path + ": " + msg);
  }
}

}  // namespace marksweep
