// ----------------------------------------------------------------------------
// Copyright 2026 The FUDA Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#include "fuda/array_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <regex>
#include <string>
#include <vector>

namespace fuda::io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "array I/O assumes a little-endian host");

constexpr char kNpyMagic[] = "\x93NUMPY";

std::string npy_header(const std::string& descr, int rows, int cols) {
  std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': (" +
                     std::to_string(rows) + ", " + std::to_string(cols) + "), }";
  // Magic(6) + version(2) + header_len(2) + dict + '\n' padded to 64 bytes.
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');
  std::string out(kNpyMagic, 6);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(len >> 8));
  return out + dict;
}

template <typename T>
void write_npy_impl(const std::filesystem::path& file, const Image<T>& img,
                    const std::string& descr) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw IngestionError(file.string(), "cannot open for writing");
  const std::string header = npy_header(descr, img.rows(), img.cols());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(img.values().data()),
           static_cast<std::streamsize>(img.size() * sizeof(T)));
  if (!os) throw IngestionError(file.string(), "write failed");
}

template <typename T>
void widen(const std::vector<char>& raw, std::vector<double>& out) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    out[i] = static_cast<double>(v);
  }
}

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void write_npy(const std::filesystem::path& file, const Image<double>& img) {
  write_npy_impl(file, img, "<f8");
}

void write_npy(const std::filesystem::path& file,
               const Image<std::uint8_t>& img) {
  write_npy_impl(file, img, "|u1");
}

Image<double> read_npy(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IngestionError(file.string(), "cannot open");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kNpyMagic, 6) != 0)
    throw IngestionError(file.string(), "not an .npy file (bad magic)");
  const int major = static_cast<unsigned char>(magic[6]);
  std::size_t header_len = 0;
  if (major == 1) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2))
      throw IngestionError(file.string(), "truncated header");
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8);
  } else if (major == 2 || major == 3) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
      throw IngestionError(file.string(), "truncated header");
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8) |
                 (static_cast<std::size_t>(b[2]) << 16) |
                 (static_cast<std::size_t>(b[3]) << 24);
  } else {
    throw IngestionError(file.string(), "unsupported .npy version");
  }
  std::string header(header_len, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(header_len)))
    throw IngestionError(file.string(), "truncated header");

  std::smatch m;
  static const std::regex descr_re(R"('descr'\s*:\s*'([<>|=]?)([a-z])(\d+)')");
  static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))");
  if (!std::regex_search(header, m, descr_re))
    throw IngestionError(file.string(), "header lacks descr");
  const std::string order = m[1], kind = m[2];
  const int width = std::stoi(m[3]);
  if (order == ">") throw IngestionError(file.string(), "big-endian payload unsupported");
  if (!std::regex_search(header, m, fortran_re) || m[1] == "True")
    throw IngestionError(file.string(), "fortran_order payload unsupported");
  if (!std::regex_search(header, m, shape_re))
    throw IngestionError(file.string(), "expected a 2-D shape");
  const int rows = std::stoi(m[1]), cols = std::stoi(m[2]);

  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  std::vector<char> raw(count * static_cast<std::size_t>(width));
  if (!is.read(raw.data(), static_cast<std::streamsize>(raw.size())))
    throw IngestionError(file.string(), "truncated payload");

  std::vector<double> out;
  if (kind == "f" && width == 8) widen<double>(raw, out);
  else if (kind == "f" && width == 4) widen<float>(raw, out);
  else if (kind == "u" && width == 1) widen<std::uint8_t>(raw, out);
  else if (kind == "u" && width == 2) widen<std::uint16_t>(raw, out);
  else if (kind == "i" && width == 1) widen<std::int8_t>(raw, out);
  else if (kind == "i" && width == 2) widen<std::int16_t>(raw, out);
  else if (kind == "i" && width == 4) widen<std::int32_t>(raw, out);
  else if (kind == "i" && width == 8) widen<std::int64_t>(raw, out);
  else if (kind == "b" && width == 1) widen<std::uint8_t>(raw, out);
  else throw IngestionError(file.string(), "unsupported dtype " + kind + std::to_string(width));
  return Image<double>(rows, cols, std::move(out));
}

Image<double> read_png(const std::filesystem::path& file) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(file.c_str(), "rb"));
  if (!fp) throw IngestionError(file.string(), "cannot open");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IngestionError(file.string(), "not a PNG file");

  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IngestionError(file.string(), "libpng init failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IngestionError(file.string(), "libpng init failed");
  if (setjmp(png_jmpbuf(g.png))) throw IngestionError(file.string(), "corrupt PNG");

  png_init_io(g.png, fp.get());
  png_set_sig_bytes(g.png, 8);
  png_read_info(g.png, g.info);
  const auto color = png_get_color_type(g.png, g.info);
  const int depth = png_get_bit_depth(g.png, g.info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16))
    throw IngestionError(file.string(), "only 8/16-bit grayscale PNG is supported");
  if (depth == 16) png_set_swap(g.png);
  png_read_update_info(g.png, g.info);

  const int rows = static_cast<int>(png_get_image_height(g.png, g.info));
  const int cols = static_cast<int>(png_get_image_width(g.png, g.info));
  const std::size_t stride = png_get_rowbytes(g.png, g.info);
  std::vector<unsigned char> buf(stride * rows);
  std::vector<png_bytep> row_ptrs(rows);
  for (int r = 0; r < rows; ++r) row_ptrs[r] = buf.data() + r * stride;
  png_read_image(g.png, row_ptrs.data());

  Image<double> out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (depth == 8) {
        out(r, c) = buf[r * stride + c];
      } else {
        std::uint16_t v;
        std::memcpy(&v, &buf[r * stride + 2 * c], 2);
        out(r, c) = v;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& file,
               const Image<std::uint8_t>& img) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(file.c_str(), "wb"));
  if (!fp) throw IngestionError(file.string(), "cannot open for writing");
  PngWriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IngestionError(file.string(), "libpng init failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IngestionError(file.string(), "libpng init failed");
  if (setjmp(png_jmpbuf(g.png))) throw IngestionError(file.string(), "PNG write failed");

  png_init_io(g.png, fp.get());
  png_set_IHDR(g.png, g.info, img.cols(), img.rows(), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  for (int r = 0; r < img.rows(); ++r) {
    auto* row = const_cast<png_bytep>(&img(r, 0));
    png_write_row(g.png, row);
  }
  png_write_end(g.png, nullptr);
}

Image<double> read_array(const std::filesystem::path& file) {
  const auto ext = file.extension().string();
  if (ext == ".npy") return read_npy(file);
  if (ext == ".png") return read_png(file);
  throw IngestionError(file.string(), "unknown array extension '" + ext + "'");
}

Image<std::uint8_t> to_gray8(const Image<double>& img) {
  Image<std::uint8_t> out(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c)
      out(r, c) = static_cast<std::uint8_t>(
          std::lround(std::clamp(img(r, c), 0.0, 1.0) * 255.0));
  return out;
}

}  // namespace fuda::io
