// Binary helpers and the file formats that are not checkpoints: the ATNS
// tensor file, PGM sample grids and CSV number formatting.
//
// ATNS layout (all integers little-endian):
//   "ATNS" | version u8 (=1) | dtype u8 (0 = f64, 1 = u8) | rank u8 |
//   dims u64 x rank | data | crc32 u32 of every preceding byte
#pragma once

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "asvae/errors.hpp"
#include "asvae/tensor.hpp"

namespace asvae::io {

using Bytes = std::vector<std::uint8_t>;

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { b_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view s) { b_.insert(b_.end(), s.begin(), s.end()); }
  void raw(std::span<const std::uint8_t> s) { b_.insert(b_.end(), s.begin(), s.end()); }

  /// Appends the CRC32 of everything written so far.
  void seal() { u32(crc32(b_)); }

  const Bytes& bytes() const noexcept { return b_; }
  Bytes take() { return std::move(b_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) b_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes b_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) {
      throw FormatError(FormatError::Kind::Truncated,
                        "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
    }
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Verifies and strips the trailing CRC32.
inline std::span<const std::uint8_t> check_crc(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError(FormatError::Kind::Truncated, "no room for checksum");
  auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (tail.u32() != crc32(body)) throw FormatError(FormatError::Kind::Checksum, "crc32 mismatch");
  return body;
}

// ---------------------------------------------------------------------------
// ATNS tensor files

enum class Dtype : std::uint8_t { F64 = 0, U8 = 1 };

inline constexpr std::uint8_t kTensorFileVersion = 1;

inline Bytes encode_tensor(const Tensor& t, Dtype dtype = Dtype::F64) {
  if (t.rank() == 0 || t.rank() > 255) {
    throw ContractError("tensor files need rank 1..255, got " + std::to_string(t.rank()));
  }
  for (std::size_t d : t.shape()) {
    if (d == 0) throw ContractError("tensor files cannot hold empty dimensions");
  }
  ByteWriter w;
  w.raw("ATNS");
  w.u8(kTensorFileVersion);
  w.u8(static_cast<std::uint8_t>(dtype));
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u64(d);
  for (double v : t.data()) {
    if (dtype == Dtype::F64) {
      w.f64(v);
    } else {
      if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
        throw DomainError("value " + std::to_string(v) + " not representable as u8");
      }
      w.u8(static_cast<std::uint8_t>(v));
    }
  }
  w.seal();
  return w.take();
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.str(4) != "ATNS") throw FormatError(K::BadMagic, "not an ATNS tensor file");
  const std::uint8_t version = r.u8();
  if (version != kTensorFileVersion) {
    throw FormatError(K::Version, "tensor file version " + std::to_string(version));
  }
  const std::uint8_t dtype = r.u8();
  if (dtype > 1) throw FormatError(K::Malformed, "unknown dtype " + std::to_string(dtype));
  const std::uint8_t rank = r.u8();
  if (rank == 0) throw FormatError(K::Malformed, "rank 0 (empty dims)");
  Shape shape;
  std::size_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const std::uint64_t d = r.u64();
    if (d == 0) throw FormatError(K::Malformed, "zero-length dimension");
    if (__builtin_mul_overflow(count, static_cast<std::size_t>(d), &count)) {
      throw FormatError(K::Malformed, "dimension product overflows");
    }
    shape.push_back(static_cast<std::size_t>(d));
  }
  const std::size_t elem = dtype == 0 ? 8 : 1;
  std::size_t payload = 0;
  if (__builtin_mul_overflow(count, elem, &payload) || payload > r.remaining()) {
    throw FormatError(K::Truncated, "data section shorter than declared dims");
  }
  if (r.remaining() - payload < 4) throw FormatError(K::Truncated, "missing checksum");
  if (r.remaining() - payload > 4) throw FormatError(K::Malformed, "trailing bytes after checksum");
  check_crc(bytes);
  std::vector<double> data(count);
  for (double& v : data) v = dtype == 0 ? r.f64() : static_cast<double>(r.u8());
  return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor_file(const std::filesystem::path& path, const Tensor& t,
                             Dtype dtype = Dtype::F64) {
  write_file(path, encode_tensor(t, dtype));
}

inline Tensor load_tensor_file(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

// ---------------------------------------------------------------------------
// PGM grids

/// [0,1] -> byte with round-half-up: 0.5 maps to 128.
inline std::uint8_t to_gray_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

/// Tiles `images` ([n, h*w], values in [0,1]) row-major into a binary P5
/// graymap with `cols` tiles per row and 1-pixel mid-gray separators.
/// h = w = sqrt(pixels) unless given explicitly.
inline std::string encode_image_grid(const Tensor& images, std::size_t cols, std::size_t h = 0,
                                     std::size_t w = 0) {
  const std::size_t n = images.rows();
  const std::size_t pixels = images.cols();
  if (h == 0 || w == 0) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
    if (side * side != pixels) {
      throw DimensionError("image grid: " + std::to_string(pixels) +
                           " pixels is not square; pass height and width");
    }
    h = w = side;
  }
  if (h * w != pixels) throw DimensionError("image grid: height*width != pixels per image");
  if (n == 0 || cols == 0) throw DimensionError("image grid needs at least one image and column");
  cols = std::min(cols, n);
  const std::size_t grid_rows = (n + cols - 1) / cols;
  const std::size_t W = cols * w + (cols - 1);
  const std::size_t H = grid_rows * h + (grid_rows - 1);
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + W * H, static_cast<char>(128));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t oy = (k / cols) * (h + 1);
    const std::size_t ox = (k % cols) * (w + 1);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out[header + (oy + y) * W + ox + x] = static_cast<char>(to_gray_byte(images.at(k, y * w + x)));
      }
    }
  }
  return out;
}

inline void write_image_grid(const std::filesystem::path& path, const Tensor& images,
                             std::size_t cols, std::size_t h = 0, std::size_t w = 0) {
  write_text(path, encode_image_grid(images, cols, h, w));
}

// ---------------------------------------------------------------------------
// CSV numbers

/// 17 significant digits: lossless and stable across runs.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace asvae::io
