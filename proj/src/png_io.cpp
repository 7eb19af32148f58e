#include "lpcgmn/gridmap.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace lpcgmn {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors through longjmp; the frames below keep only trivially
// destructible locals between setjmp and the libpng calls.
struct PngReadResult {
  int status = 0;  // 0 ok, 1 libpng error, 2 wrong format
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int color_type = 0;
  int bit_depth = 0;
  char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* result = static_cast<PngReadResult*>(png_get_error_ptr(png));
  if (result) std::snprintf(result->message, sizeof(result->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

bool read_rows(std::FILE* fp, PngReadResult& out, std::vector<unsigned char>& pixels, std::vector<png_bytep>& rows) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &out, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    out.status = 1;
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.color_type = png_get_color_type(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  if (out.color_type != PNG_COLOR_TYPE_GRAY || out.bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    out.status = 2;
    return false;
  }
  pixels.assign(static_cast<std::size_t>(out.width) * out.height, 0);
  rows.resize(out.height);
  for (png_uint_32 r = 0; r < out.height; ++r) rows[r] = pixels.data() + static_cast<std::size_t>(r) * out.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool write_rows(std::FILE* fp, png_uint_32 width, png_uint_32 height, const std::vector<unsigned char>& pixels) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  std::vector<png_bytep> rows(height);
  for (png_uint_32 r = 0; r < height; ++r)
    rows[r] = const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(r) * width);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const Eigen::MatrixXd& values) {
  if (values.size() == 0) throw ShapeError("write_png_gray: empty image " + path.string());
  std::vector<unsigned char> pixels(static_cast<std::size_t>(values.size()));
  const auto width = static_cast<std::size_t>(values.cols());
  for (Index r = 0; r < values.rows(); ++r)
    for (Index c = 0; c < values.cols(); ++c) {
      const double v = std::clamp(values(r, c), 0.0, 1.0);
      pixels[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error("cannot open for writing: " + path.string());
  if (!write_rows(fp.get(), static_cast<png_uint_32>(values.cols()), static_cast<png_uint_32>(values.rows()), pixels))
    throw Error("failed to write PNG: " + path.string());
}

Eigen::MatrixXd read_png_gray(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw LoadError("missing file: " + path.string());
  PngReadResult result;
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  if (!read_rows(fp.get(), result, pixels, rows)) {
    if (result.status == 2)
      throw LoadError("not an 8-bit grayscale PNG (color type " + std::to_string(result.color_type) + ", bit depth " +
                      std::to_string(result.bit_depth) + "): " + path.string());
    throw LoadError("corrupt or truncated PNG: " + path.string() +
                    (result.message[0] ? std::string(" (") + result.message + ")" : std::string()));
  }
  Eigen::MatrixXd out(result.height, result.width);
  for (png_uint_32 r = 0; r < result.height; ++r)
    for (png_uint_32 c = 0; c < result.width; ++c)
      out(r, c) = static_cast<double>(pixels[static_cast<std::size_t>(r) * result.width + c]) / 255.0;
  return out;
}

}  // namespace lpcgmn
