// ASV1 checkpoint files.
//
//   "ASV1" | section* | crc32 u32 of every preceding byte
//   section = tag u8 | payload length u64 | payload
//
// Tags:
//   1 config    UTF-8 key=value text
//   2 tensor    parameter: name len u16 | name | rank u8 | dims u64 x rank | f64 data
//   3 moment    optimizer buffer, same encoding as 2
//   4 rng       name len u16 | name | seed u64 | counter u64
//   5 counters  count u16 | (name len u16 | name | value f64)*
// Sections are written in the order above; within a kind, in insertion order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "asvae/io.hpp"
#include "asvae/rng.hpp"

namespace asvae {

struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> parameters;
  std::vector<std::pair<std::string, Tensor>> moments;
  std::vector<std::pair<std::string, RngStream>> streams;
  std::vector<std::pair<std::string, double>> counters;

  const Tensor& parameter(const std::string& name) const { return find(parameters, name, "parameter"); }
  const Tensor& moment(const std::string& name) const { return find(moments, name, "moment"); }
  RngStream stream(const std::string& name) const { return find(streams, name, "stream"); }
  double counter(const std::string& name) const { return find(counters, name, "counter"); }
  bool has_counter(const std::string& name) const {
    for (const auto& [k, v] : counters) {
      if (k == name) return true;
    }
    return false;
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

 private:
  template <class T>
  static const T& find(const std::vector<std::pair<std::string, T>>& v, const std::string& name,
                       const char* what) {
    for (const auto& [k, val] : v) {
      if (k == name) return val;
    }
    throw FormatError(FormatError::Kind::Malformed, std::string("checkpoint has no ") + what + " '" + name + "'");
  }
};

namespace detail {

enum : std::uint8_t {
  kSecConfig = 1,
  kSecTensor = 2,
  kSecMoment = 3,
  kSecRng = 4,
  kSecCounters = 5,
};

inline void put_name(io::ByteWriter& w, const std::string& name) {
  if (name.size() > 0xFFFF) throw ContractError("checkpoint name too long: " + name);
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.raw(name);
}

inline void put_tensor(io::ByteWriter& w, const std::string& name, const Tensor& t) {
  put_name(w, name);
  if (t.rank() > 255) throw ContractError("checkpoint tensor rank > 255");
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u64(d);
  for (double v : t.data()) w.f64(v);
}

inline void put_section(io::ByteWriter& out, std::uint8_t tag, const io::Bytes& payload) {
  out.u8(tag);
  out.u64(payload.size());
  out.raw(payload);
}

inline std::pair<std::string, Tensor> get_tensor(io::ByteReader& r) {
  const std::string name = r.str(r.u16());
  const std::uint8_t rank = r.u8();
  Shape shape;
  std::size_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const std::uint64_t d = r.u64();
    if (__builtin_mul_overflow(count, static_cast<std::size_t>(d), &count) || count > r.remaining() / 8 + 1) {
      throw FormatError(FormatError::Kind::Malformed, "tensor '" + name + "' dims exceed section");
    }
    shape.push_back(static_cast<std::size_t>(d));
  }
  if (count * 8 > r.remaining()) throw FormatError(FormatError::Kind::Truncated, "tensor '" + name + "' data");
  std::vector<double> data(count);
  for (double& v : data) v = r.f64();
  return {name, Tensor(std::move(shape), std::move(data))};
}

}  // namespace detail

inline io::Bytes encode_checkpoint(const Checkpoint& c) {
  io::ByteWriter out;
  out.raw("ASV1");
  {
    io::ByteWriter w;
    w.raw(c.config_text);
    detail::put_section(out, detail::kSecConfig, w.bytes());
  }
  for (const auto& [name, t] : c.parameters) {
    io::ByteWriter w;
    detail::put_tensor(w, name, t);
    detail::put_section(out, detail::kSecTensor, w.bytes());
  }
  for (const auto& [name, t] : c.moments) {
    io::ByteWriter w;
    detail::put_tensor(w, name, t);
    detail::put_section(out, detail::kSecMoment, w.bytes());
  }
  for (const auto& [name, s] : c.streams) {
    io::ByteWriter w;
    detail::put_name(w, name);
    w.u64(s.seed());
    w.u64(s.counter());
    detail::put_section(out, detail::kSecRng, w.bytes());
  }
  {
    io::ByteWriter w;
    w.u16(static_cast<std::uint16_t>(c.counters.size()));
    for (const auto& [name, v] : c.counters) {
      detail::put_name(w, name);
      w.f64(v);
    }
    detail::put_section(out, detail::kSecCounters, w.bytes());
  }
  out.seal();
  return out.take();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  if (bytes.size() < 4) throw FormatError(K::Truncated, "file shorter than the magic");
  const std::string magic(bytes.begin(), bytes.begin() + 4);
  if (magic.compare(0, 3, "ASV") != 0) throw FormatError(K::BadMagic, "not an ASV checkpoint");
  if (magic[3] != '1') throw FormatError(K::Version, std::string("checkpoint version '") + magic[3] + "'");
  const auto body = io::check_crc(bytes);
  io::ByteReader r(body.subspan(4));
  Checkpoint c;
  bool saw_config = false;
  while (r.remaining() > 0) {
    const std::uint8_t tag = r.u8();
    const std::uint64_t len = r.u64();
    if (len > r.remaining()) throw FormatError(K::Truncated, "section longer than file");
    io::ByteReader s(r.take(static_cast<std::size_t>(len)));
    switch (tag) {
      case detail::kSecConfig:
        c.config_text = s.str(s.remaining());
        saw_config = true;
        break;
      case detail::kSecTensor: c.parameters.push_back(detail::get_tensor(s)); break;
      case detail::kSecMoment: c.moments.push_back(detail::get_tensor(s)); break;
      case detail::kSecRng: {
        std::string name = s.str(s.u16());
        const std::uint64_t seed = s.u64();
        const std::uint64_t counter = s.u64();
        c.streams.emplace_back(std::move(name), RngStream(seed, counter));
        break;
      }
      case detail::kSecCounters: {
        const std::uint16_t n = s.u16();
        for (std::uint16_t i = 0; i < n; ++i) {
          std::string name = s.str(s.u16());
          c.counters.emplace_back(std::move(name), s.f64());
        }
        break;
      }
      default: throw FormatError(K::Malformed, "unknown section tag " + std::to_string(tag));
    }
    if (s.remaining() != 0) throw FormatError(K::Malformed, "section " + std::to_string(tag) + " has trailing bytes");
  }
  if (!saw_config) throw FormatError(K::Malformed, "checkpoint has no config section");
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::write_file(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace asvae
