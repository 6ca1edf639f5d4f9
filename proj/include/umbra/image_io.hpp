#pragma once

// Image and mask files: binary PPM (P6), binary PGM (P5) and PNG.
// PNG alpha is composited over black.

#include <png.h>
#include <sodium.h>

#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "umbra/error.hpp"
#include "umbra/image.hpp"

namespace umbra {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("failed writing " + path);
}

namespace detail {

// Netpbm header: magic, width, height, maxval, one whitespace byte.
struct PnmHeader {
  int width{0};
  int height{0};
  int maxval{0};
  std::size_t data_offset{0};
};

inline PnmHeader parse_pnm_header(std::span<const std::uint8_t> d, char kind) {
  if (d.size() < 2 || d[0] != 'P' || d[1] != kind)
    throw FormatError(std::string("not a binary P") + kind + " file");
  std::size_t pos = 2;
  auto next_int = [&]() {
    for (;;) {
      while (pos < d.size() && std::isspace(d[pos])) ++pos;
      if (pos < d.size() && d[pos] == '#') {
        while (pos < d.size() && d[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= d.size() || !std::isdigit(d[pos])) throw FormatError("truncated netpbm header");
    long v = 0;
    while (pos < d.size() && std::isdigit(d[pos])) {
      v = v * 10 + (d[pos++] - '0');
      if (v > (1L << 24)) throw FormatError("netpbm dimension too large");
    }
    return static_cast<int>(v);
  };
  PnmHeader h;
  h.width = next_int();
  h.height = next_int();
  h.maxval = next_int();
  if (pos >= d.size() || !std::isspace(d[pos])) throw FormatError("truncated netpbm header");
  h.data_offset = pos + 1;
  if (h.width <= 0 || h.height <= 0) throw FormatError("netpbm image has zero size");
  if (h.maxval != 255) throw FormatError("only 8-bit netpbm (maxval 255) is supported");
  return h;
}

}  // namespace detail

inline Image decode_ppm(std::span<const std::uint8_t> d) {
  const auto h = detail::parse_pnm_header(d, '6');
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3;
  if (d.size() - h.data_offset < need) throw FormatError("truncated PPM pixel data");
  Image img(h.width, h.height);
  std::memcpy(img.bytes().data(), d.data() + h.data_offset, need);
  return img;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string head = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), img.bytes().begin(), img.bytes().end());
  return out;
}

// Samples must be 0 (outside) or 255 (inside).
inline RegionMask decode_pgm_mask(std::span<const std::uint8_t> d) {
  const auto h = detail::parse_pnm_header(d, '5');
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
  if (d.size() - h.data_offset < need) throw FormatError("truncated PGM pixel data");
  RegionMask m(h.width, h.height);
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x) {
      const auto v = d[h.data_offset + static_cast<std::size_t>(y) * h.width + x];
      if (v != 0 && v != 255) throw FormatError("mask samples must be 0 or 255");
      m.set(x, y, v == 255);
    }
  return m;
}

inline std::vector<std::uint8_t> encode_pgm_mask(const RegionMask& m) {
  const std::string head = "P5\n" + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out.push_back(m.at(x, y) ? 255 : 0);
  return out;
}

namespace detail {

struct PngReadState {
  std::span<const std::uint8_t> data;
  std::size_t pos{0};
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

inline bool is_png(std::span<const std::uint8_t> d) {
  return d.size() >= 8 && png_sig_cmp(d.data(), 0, 8) == 0;
}

namespace detail {

// libpng reports errors by longjmp. These helpers keep every object with a
// destructor in the caller's frame, so the jump never skips one.
inline bool png_read_rgba(png_structp png, png_infop info, PngReadState* state, std::vector<std::uint8_t>* rgba,
                          std::vector<png_bytep>* rows, png_uint_32* width, png_uint_32* height) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_read_fn(png, state, [](png_structp p, png_bytep out, png_size_t n) {
    auto* s = static_cast<PngReadState*>(png_get_io_ptr(p));
    if (s->data.size() - s->pos < n) png_error(p, "truncated PNG stream");
    std::memcpy(out, s->data.data() + s->pos, n);
    s->pos += n;
  });
  png_read_info(png, info);
  *width = png_get_image_width(png, info);
  *height = png_get_image_height(png, info);
  if (*width == 0 || *height == 0 || *width > (1u << 15) || *height > (1u << 15))
    png_error(png, "unsupported PNG dimensions");
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_tRNS_to_alpha(png);
  png_set_gray_to_rgb(png);
  png_set_add_alpha(png, 0xff, PNG_FILLER_AFTER);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(*width) * 4) png_error(png, "unexpected row layout");
  rgba->resize(static_cast<std::size_t>(*width) * *height * 4);
  rows->resize(*height);
  for (png_uint_32 y = 0; y < *height; ++y) (*rows)[y] = rgba->data() + static_cast<std::size_t>(y) * *width * 4;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  return true;
}

inline bool png_write_rgb(png_structp png, png_infop info, const Image* img, std::vector<std::uint8_t>* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(
      png, out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + n);
      },
      [](png_structp) {});
  png_set_IHDR(png, info, static_cast<png_uint_32>(img->width()), static_cast<png_uint_32>(img->height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto bytes = img->bytes();
  for (int y = 0; y < img->height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * img->width() * 3));
  }
  png_write_end(png, nullptr);
  return true;
}

}  // namespace detail

inline Image decode_png(std::span<const std::uint8_t> d) {
  if (!is_png(d)) throw FormatError("not a PNG stream");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                           detail::png_warning_fn);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  detail::PngReadState state{d, 0};
  std::vector<std::uint8_t> rgba;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  const bool ok = info && detail::png_read_rgba(png, info, &state, &rgba, &rows, &width, &height);
  png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  if (!ok) throw FormatError("PNG decode failed: " + err);

  Image img(static_cast<int>(width), static_cast<int>(height));
  auto out = img.bytes();
  for (std::size_t i = 0, n = static_cast<std::size_t>(width) * height; i < n; ++i) {
    const unsigned a = rgba[i * 4 + 3];
    for (int c = 0; c < 3; ++c)
      out[i * 3 + c] = static_cast<std::uint8_t>((rgba[i * 4 + c] * a + 127) / 255);
  }
  return img;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.empty()) throw std::invalid_argument("cannot encode an empty image");
  std::string err;
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                            detail::png_warning_fn);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  const bool ok = info && detail::png_write_rgb(png, info, &img, &out);
  png_destroy_write_struct(&png, info ? &info : nullptr);
  if (!ok) throw Error("PNG encode failed: " + err);
  return out;
}

// Dispatches on the file signature: PNG or binary PPM.
inline Image decode_image(std::span<const std::uint8_t> d) {
  if (d.empty()) throw FormatError("empty image file");
  if (is_png(d)) return decode_png(d);
  if (d.size() >= 2 && d[0] == 'P' && d[1] == '6') return decode_ppm(d);
  throw FormatError("unsupported image format (expected PNG or binary PPM)");
}

inline Image load_image(const std::string& path) {
  try {
    return decode_image(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// Format chosen by extension: .png, otherwise PPM.
inline void save_image(const Image& img, const std::string& path) {
  const bool png = path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0;
  write_file(path, png ? encode_png(img) : encode_ppm(img));
}

inline constexpr const char* kFullMask = "full";

// "full" yields an all-true mask of the given size.
inline RegionMask load_mask(const std::string& spec, int width, int height) {
  if (spec == kFullMask) return RegionMask::full(width, height);
  RegionMask m;
  try {
    m = decode_pgm_mask(read_file(spec));
  } catch (const FormatError& e) {
    throw FormatError(spec + ": " + e.what());
  }
  if (m.width() != width || m.height() != height)
    throw FormatError(spec + ": mask size differs from image size");
  return m;
}

inline void save_mask(const RegionMask& m, const std::string& path) { write_file(path, encode_pgm_mask(m)); }

inline std::string base64_encode(std::span<const std::uint8_t> data) {
  const std::size_t len = sodium_base64_encoded_len(data.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, data.data(), data.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop the terminator
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t n = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &n, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0)
    throw FormatError("invalid base64");
  out.resize(n);
  return out;
}

}  // namespace umbra
