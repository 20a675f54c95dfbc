#include "umafd/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "umafd/errors.hpp"

namespace umafd::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void on_png_error(png_structp png_ptr, png_const_charp) { std::longjmp(png_jmpbuf(png_ptr), 1); }
void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

Image read(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("not a PNG image: " + path.string());
  }

  png_structp png_ptr = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info_ptr = png_ptr ? png_create_info_struct(png_ptr) : nullptr;
  if (!png_ptr || !info_ptr) {
    png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
    throw DataError("libpng initialisation failed for " + path.string());
  }

  Image img;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png_ptr))) {
    png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);
    throw DataError("corrupt or unreadable image " + path.string());
  }
  png_init_io(png_ptr, fp.get());
  png_set_sig_bytes(png_ptr, 8);
  png_read_info(png_ptr, info_ptr);

  const int color = png_get_color_type(png_ptr, info_ptr);
  int depth = png_get_bit_depth(png_ptr, info_ptr);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png_ptr);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png_ptr);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png_ptr);
  if (depth == 16) png_set_swap(png_ptr);
  png_read_update_info(png_ptr, info_ptr);

  img.width = png_get_image_width(png_ptr, info_ptr);
  img.height = png_get_image_height(png_ptr, info_ptr);
  img.channels = png_get_channels(png_ptr, info_ptr);
  depth = png_get_bit_depth(png_ptr, info_ptr);
  img.bit_depth = depth;
  const std::size_t rowbytes = png_get_rowbytes(png_ptr, info_ptr);
  buffer.resize(rowbytes * img.height);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png_ptr, rows.data());
  png_read_end(png_ptr, nullptr);
  png_destroy_read_struct(&png_ptr, &info_ptr, nullptr);

  if (img.channels != 1 && img.channels != 3) throw DataError("unsupported channel layout in " + path.string());
  const std::size_t n = img.width * img.height * img.channels;
  img.samples.resize(n);
  if (depth == 16) {
    for (std::size_t y = 0; y < img.height; ++y) {
      const auto* src = reinterpret_cast<const std::uint16_t*>(rows[y]);
      std::copy_n(src, img.width * img.channels, img.samples.data() + y * img.width * img.channels);
    }
  } else {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t i = 0; i < img.width * img.channels; ++i) {
        img.samples[y * img.width * img.channels + i] = rows[y][i];
      }
    }
  }
  return img;
}

namespace {

void write_impl(const std::filesystem::path& path, std::size_t width, std::size_t height, int color, int depth,
                const png_byte* data, std::size_t rowbytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FileError("cannot write image " + path.string());
  png_structp png_ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  png_infop info_ptr = png_ptr ? png_create_info_struct(png_ptr) : nullptr;
  if (!png_ptr || !info_ptr) {
    png_destroy_write_struct(&png_ptr, &info_ptr);
    throw FileError("libpng initialisation failed for " + path.string());
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png_ptr))) {
    png_destroy_write_struct(&png_ptr, &info_ptr);
    throw FileError("failed writing image " + path.string());
  }
  png_init_io(png_ptr, fp.get());
  png_set_IHDR(png_ptr, info_ptr, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png_ptr, info_ptr);
  if (depth == 16) png_set_swap(png_ptr);
  for (std::size_t y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(data + y * rowbytes);
  png_write_image(png_ptr, rows.data());
  png_write_end(png_ptr, nullptr);
  png_destroy_write_struct(&png_ptr, &info_ptr);
}

}  // namespace

void write_rgb8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != width * height * 3) throw DataError("write_rgb8: buffer size mismatch");
  write_impl(path, width, height, PNG_COLOR_TYPE_RGB, 8, rgb.data(), width * 3);
}

void write_gray16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                  const std::vector<std::uint16_t>& gray) {
  if (gray.size() != width * height) throw DataError("write_gray16: buffer size mismatch");
  write_impl(path, width, height, PNG_COLOR_TYPE_GRAY, 16, reinterpret_cast<const png_byte*>(gray.data()),
             width * 2);
}

}  // namespace umafd::png
