#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "patchlab/image.hpp"
#include "patchlab/rng.hpp"

using namespace patchlab;

TEST_CASE("png round-trip is lossless") {
  Rng rng(5);
  ImageU8 img(37, 23, 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  auto path = (std::filesystem::temp_directory_path() / "patchlab_rt.png").string();
  write_png(img, path);
  ImageU8 back = read_image(path);
  CHECK(back == img);
  std::filesystem::remove(path);
}

TEST_CASE("ppm round-trip is lossless") {
  Rng rng(7);
  ImageU8 img(12, 18, 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  auto path = (std::filesystem::temp_directory_path() / "patchlab_rt.ppm").string();
  write_ppm(img, path);
  ImageU8 back = read_image(path);
  CHECK(back == img);
  std::filesystem::remove(path);
}

TEST_CASE("jpeg decode works and is close for smooth content") {
  // encode with libjpeg directly; the library only reads JPEG
  ImageU8 img(32, 40, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<std::uint8_t>(60 + 2 * y + x + 20 * c);
  auto path = (std::filesystem::temp_directory_path() / "patchlab_rt.jpg").string();
  {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    REQUIRE(fp);
    jpeg_compress_struct cinfo;
    jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, fp);
    cinfo.image_width = 40;
    cinfo.image_height = 32;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 95, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = img.data.data() + static_cast<std::size_t>(cinfo.next_scanline) * 40 * 3;
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::fclose(fp);
  }
  ImageU8 back = read_image(path);
  REQUIRE(back.height == 32);
  REQUIRE(back.width == 40);
  double err = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    err += std::abs(static_cast<int>(img.data[i]) - static_cast<int>(back.data[i]));
  CHECK(err / static_cast<double>(img.data.size()) < 3.0);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt and unknown files raise IoError") {
  auto dir = std::filesystem::temp_directory_path();
  auto bad = (dir / "patchlab_bad.png").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "\x89PNG not really a png at all";
  }
  CHECK_THROWS_AS(read_image(bad), IoError);
  std::filesystem::remove(bad);

  auto junk = (dir / "patchlab_junk.bin").string();
  {
    std::ofstream out(junk, std::ios::binary);
    out << "zzzz";
  }
  CHECK_THROWS_AS(read_image(junk), IoError);
  std::filesystem::remove(junk);

  CHECK_THROWS_AS(read_image((dir / "patchlab_missing.png").string()), IoError);
}
