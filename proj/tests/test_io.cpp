#include <gtest/gtest.h>

#include <cstring>

#include "asvae/checkpoint.hpp"
#include "asvae/io.hpp"
#include "test_support.hpp"

using namespace asvae;
using io::Bytes;
using Kind = FormatError::Kind;

namespace {

Kind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError";
  return Kind::Io;
}

// Replaces the trailing checksum so mutations reach the parser.
void reseal(Bytes& b) {
  b.resize(b.size() - 4);
  const std::uint32_t c = io::crc32(b);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(c >> (8 * i)));
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config_text = "mode = asvae\nseed = 3\n";
  c.parameters = {{"encoder.0.weight", Tensor::matrix({{1.5, -2.0}, {0.25, 1e-300}})},
                  {"encoder.0.bias", Tensor::vector({0.0, -0.0})},
                  {"scalar", Tensor::scalar(7.0)}};
  c.moments = {{"gen.m.encoder.0.bias", Tensor::vector({1e-8, 2.0})}};
  c.streams = {{"shuffle", RngStream(5, 99)}};
  c.counters = {{"epoch", 4.0}, {"best_metric", -1.25}};
  return c;
}

}  // namespace

TEST(Crc, KnownValue) {
  const std::string s = "123456789";
  EXPECT_EQ(io::crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())), 0xCBF43926u);
}

TEST(TensorFile, GoldenBytes) {
  const Bytes b = io::encode_tensor(Tensor::vector({1.0}));
  const Bytes head{'A', 'T', 'N', 'S', 1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
  ASSERT_EQ(b.size(), head.size() + 4);
  EXPECT_TRUE(std::equal(head.begin(), head.end(), b.begin()));
  const std::uint32_t crc = io::crc32(std::span(b).first(head.size()));
  EXPECT_EQ(b[head.size()], crc & 0xFF);
}

TEST(TensorFile, RoundTripF64AndU8) {
  const Tensor t = Tensor::matrix({{1.0, -2.5, 1e-310}, {3.0, 0.0, 1e300}});
  EXPECT_EQ(io::decode_tensor(io::encode_tensor(t)), t);
  const Tensor p = Tensor::matrix({{0, 255}, {17, 128}});
  const Bytes b = io::encode_tensor(p, io::Dtype::U8);
  EXPECT_EQ(b.size(), 4u + 3u + 16u + 4u + 4u);
  EXPECT_EQ(io::decode_tensor(b), p);
  EXPECT_THROW(io::encode_tensor(Tensor::vector({256.0}), io::Dtype::U8), DomainError);
  EXPECT_THROW(io::encode_tensor(Tensor::vector({0.5}), io::Dtype::U8), DomainError);
}

TEST(TensorFile, FileRoundTrip) {
  const auto dir = asvae::testing::temp_dir("tensor_file");
  const Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
  io::save_tensor_file(dir / "t.atns", t);
  EXPECT_EQ(io::load_tensor_file(dir / "t.atns"), t);
  EXPECT_EQ(kind_of([&] { io::load_tensor_file(dir / "missing.atns"); }), Kind::Io);
}

TEST(TensorFile, NamedErrors) {
  const Bytes good = io::encode_tensor(Tensor::vector({1.0, 2.0}));
  Bytes b = good;
  b[0] = 'X';
  EXPECT_EQ(kind_of([&] { io::decode_tensor(b); }), Kind::BadMagic);
  b = good;
  b[4] = 2;
  EXPECT_EQ(kind_of([&] { io::decode_tensor(b); }), Kind::Version);
  b = good;
  b[b.size() - 6] ^= 0x40;
  EXPECT_EQ(kind_of([&] { io::decode_tensor(b); }), Kind::Checksum);
  b = good;
  b.resize(b.size() - 5);
  EXPECT_EQ(kind_of([&] { io::decode_tensor(b); }), Kind::Truncated);
  b = good;
  b[5] = 9;
  EXPECT_EQ(kind_of([&] { io::decode_tensor(b); }), Kind::Malformed);
  b = good;
  b.insert(b.end() - 4, 0);
  reseal(b);
  EXPECT_EQ(kind_of([&] { io::decode_tensor(b); }), Kind::Malformed);
  EXPECT_EQ(kind_of([&] { io::decode_tensor(Bytes{'A', 'T'}); }), Kind::BadMagic);
}

TEST(TensorFile, HugeDimsDoNotAllocate) {
  Bytes b = io::encode_tensor(Tensor::vector({1.0}));
  for (int i = 0; i < 8; ++i) b[7 + i] = 0xFF;
  reseal(b);
  EXPECT_THROW(io::decode_tensor(b), FormatError);
}

TEST(TensorFile, FuzzNeverCrashes) {
  const Bytes good = io::encode_tensor(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
  RngStream s(77);
  for (int trial = 0; trial < 3000; ++trial) {
    Bytes b = good;
    const int edits = 1 + static_cast<int>(s.below(4));
    for (int e = 0; e < edits; ++e) b[s.below(b.size())] = static_cast<std::uint8_t>(s.below(256));
    if (trial % 3 == 0) b.resize(s.below(b.size() + 1));
    if (trial % 2 == 0 && b.size() >= 4) reseal(b);
    try {
      (void)io::decode_tensor(b);
    } catch (const FormatError&) {
    }
  }
}

TEST(Pgm, HeaderAndPixels) {
  const Tensor img = Tensor::matrix({{0.0, 0.5, 1.0, 2.0}});
  const std::string s = io::encode_image_grid(img, 1);
  ASSERT_EQ(s.substr(0, 11), "P5\n2 2\n255\n");
  EXPECT_EQ(static_cast<std::uint8_t>(s[11]), 0);
  EXPECT_EQ(static_cast<std::uint8_t>(s[12]), 128);
  EXPECT_EQ(static_cast<std::uint8_t>(s[13]), 255);
  EXPECT_EQ(static_cast<std::uint8_t>(s[14]), 255);
}

TEST(Pgm, GridWithSeparators) {
  const Tensor imgs(Shape{3, 4}, 0.0);
  const std::string s = io::encode_image_grid(imgs, 2);
  const std::string header = "P5\n5 5\n255\n";
  ASSERT_EQ(s.substr(0, header.size()), header);
  ASSERT_EQ(s.size(), header.size() + 25);
  const auto px = [&](int x, int y) { return static_cast<std::uint8_t>(s[header.size() + y * 5 + x]); };
  EXPECT_EQ(px(0, 0), 0);
  EXPECT_EQ(px(2, 0), 128);
  EXPECT_EQ(px(0, 2), 128);
  EXPECT_EQ(px(3, 4), 128);  // empty slot
  EXPECT_EQ(px(1, 4), 0);
}

TEST(Pgm, NonSquareNeedsExplicitSize) {
  EXPECT_THROW(io::encode_image_grid(Tensor(Shape{1, 6}), 1), DimensionError);
  EXPECT_NO_THROW(io::encode_image_grid(Tensor(Shape{1, 6}), 1, 2, 3));
}

TEST(Csv, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    const std::string s = io::format_double(v);
    EXPECT_EQ(std::stod(s), v) << s;
  }
  EXPECT_EQ(io::format_double(0.5), "0.5");
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const Checkpoint c = sample_checkpoint();
  const Bytes b = encode_checkpoint(c);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "ASV1");
  const Checkpoint d = decode_checkpoint(b);
  EXPECT_EQ(d, c);
  EXPECT_EQ(encode_checkpoint(d), b);
  EXPECT_EQ(std::signbit(d.parameter("encoder.0.bias").data()[1]), true);
  EXPECT_EQ(d.stream("shuffle"), RngStream(5, 99));
  EXPECT_EQ(d.counter("best_metric"), -1.25);
  EXPECT_FALSE(d.has_counter("nope"));
  EXPECT_EQ(kind_of([&] { d.parameter("nope"); }), Kind::Malformed);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = asvae::testing::temp_dir("ckpt_file");
  save_checkpoint(dir / "a.ckpt", sample_checkpoint());
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt"), sample_checkpoint());
}

TEST(Checkpoint, CorruptionIsDetected) {
  const Bytes good = encode_checkpoint(sample_checkpoint());
  for (std::size_t i = 4; i < good.size(); i += 7) {
    Bytes b = good;
    b[i] ^= 0x01;
    EXPECT_EQ(kind_of([&] { decode_checkpoint(b); }), Kind::Checksum) << i;
  }
}

TEST(Checkpoint, MagicAndVersion) {
  Bytes b = encode_checkpoint(sample_checkpoint());
  b[3] = '2';
  EXPECT_EQ(kind_of([&] { decode_checkpoint(b); }), Kind::Version);
  b[0] = 'Q';
  EXPECT_EQ(kind_of([&] { decode_checkpoint(b); }), Kind::BadMagic);
}

TEST(Checkpoint, TruncationIsDetected) {
  const Bytes good = encode_checkpoint(sample_checkpoint());
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{6}, good.size() / 2, good.size() - 1}) {
    Bytes b(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_THROW(decode_checkpoint(b), FormatError) << n;
  }
  // truncated body with a valid checksum
  Bytes b(good.begin(), good.end() - 12);
  b.insert(b.end(), {0, 0, 0, 0});
  reseal(b);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(b); }), Kind::Truncated);
}

TEST(Checkpoint, UnknownSectionIsMalformed) {
  Bytes b = encode_checkpoint(sample_checkpoint());
  b[4] = 42;
  reseal(b);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(b); }), Kind::Malformed);
}

TEST(Checkpoint, FuzzNeverCrashes) {
  const Bytes good = encode_checkpoint(sample_checkpoint());
  RngStream s(99);
  int decoded = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    Bytes b = good;
    const int edits = 1 + static_cast<int>(s.below(6));
    for (int e = 0; e < edits; ++e) b[s.below(b.size())] = static_cast<std::uint8_t>(s.below(256));
    if (trial % 4 == 0) b.resize(s.below(b.size() + 1));
    if (trial % 2 == 0 && b.size() >= 8) reseal(b);
    try {
      (void)decode_checkpoint(b);
      ++decoded;
    } catch (const FormatError&) {
    }
  }
  SUCCEED() << decoded << " mutated files still decoded";
}
