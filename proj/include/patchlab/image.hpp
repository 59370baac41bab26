#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>
#include <csetjmp>

#include "patchlab/common.hpp"

namespace patchlab {

// 8-bit interleaved image, row-major HWC. Channels is 1 or 3.
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const ImageU8& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const ImageU8&) const = default;
};

namespace detail {

struct PngErrorCtx {
  std::jmp_buf jb;
};

inline void png_error_fn(png_structp png, png_const_charp /*msg*/) {
  auto* ctx = static_cast<PngErrorCtx*>(png_get_error_ptr(png));
  std::longjmp(ctx->jb, 1);
}
inline void png_warn_fn(png_structp, png_const_charp) {}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jb;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jb, 1);
}

inline ImageU8 read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);
  PngErrorCtx ctx;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx,
                                           png_error_fn, png_warn_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<png_bytep> rows;
  ImageU8 img;
  if (setjmp(ctx.jb)) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("corrupt PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  img = ImageU8(static_cast<int>(h), static_cast<int>(w), 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

inline ImageU8 read_jpeg(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  if (setjmp(err.jb)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    throw IoError("corrupt JPEG: " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  ImageU8 img(static_cast<int>(cinfo.output_height),
              static_cast<int>(cinfo.output_width), 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.data.data() +
                   static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(fp);
  return img;
}

inline ImageU8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P5") throw IoError("corrupt PPM: " + path);
  auto next_int = [&in, &path]() {
    // Skip whitespace and '#' comments between header fields.
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {}
      } else if (!std::isspace(ch)) {
        in.unget();
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw IoError("corrupt PPM: " + path);
    return static_cast<int>(v);
  };
  int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw IoError("unsupported PPM maxval in " + path);
  in.get();  // single whitespace after maxval
  int src_c = (magic == "P6") ? 3 : 1;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * w * src_c);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("corrupt PPM: " + path);
  ImageU8 img(h, w, 3);
  for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i)
    for (int c = 0; c < 3; ++c)
      img.data[i * 3 + c] = raw[i * src_c + (src_c == 3 ? c : 0)];
  return img;
}

}  // namespace detail

// Sniffs the format from the file's magic bytes; PNG, JPEG and binary
// PPM/PGM are accepted. Always returns 3-channel RGB.
inline ImageU8 read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path);
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  probe.close();
  if (magic[0] == 0x89 && magic[1] == 'P') return detail::read_png(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8) return detail::read_jpeg(path);
  if (magic[0] == 'P' && (magic[1] == '6' || magic[1] == '5'))
    return detail::read_ppm(path);
  throw IoError("unrecognized image format: " + path);
}

inline void write_png(const ImageU8& img, const std::string& path) {
  if (img.channels != 3 && img.channels != 1)
    throw IoError("write_png expects 1 or 3 channels");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path);
  detail::PngErrorCtx ctx;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx,
                                            detail::png_error_fn, detail::png_warn_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(ctx.jb)) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("PNG write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(
        img.data.data() + static_cast<std::size_t>(y) * img.width * img.channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline void write_ppm(const ImageU8& img, const std::string& path) {
  if (img.channels != 3) throw IoError("write_ppm expects 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("short write: " + path);
}

}  // namespace patchlab
