#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "swingrade/tensor.hpp"

namespace swingrade {

// KTEN tensor record: "KTEN" | version u32 LE | rank u32 LE | dims rank*u32 LE
// | payload f64 LE row-major. No padding, no trailing bytes.
//
// KCKP checkpoint: "KCKP" | version u32 LE | count u32 LE | count entries of
// (name_len u16 LE | name | embedded KTEN record).

namespace detail {

constexpr std::uint32_t kTensorVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

class ByteReader {
 public:
  ByteReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  std::size_t offset() const { return off_; }

  void bytes(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(what_ + ": truncated file", off_);
    }
    off_ += n;
  }

  std::uint16_t u16() {
    char b[2];
    bytes(b, 2);
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) |
                                      (static_cast<unsigned char>(b[1]) << 8));
  }

  std::uint32_t u32() {
    char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i]))
                                    << (8 * i);
    return v;
  }

  double f64() {
    char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i]))
                                     << (8 * i);
    return std::bit_cast<double>(v);
  }

  void expect_magic(const char* magic) {
    std::size_t at = off_;
    char b[4];
    bytes(b, 4);
    for (int i = 0; i < 4; ++i) {
      if (b[i] != magic[i]) throw FormatError(what_ + ": bad magic, expected " + magic, at);
    }
  }

  void expect_eof() {
    char c;
    is_.read(&c, 1);
    if (is_.gcount() != 0) throw FormatError(what_ + ": trailing bytes", off_);
  }

 private:
  std::istream& is_;
  std::string what_;
  std::size_t off_ = 0;
};

inline void write_tensor_record(std::ostream& os, const Shape& shape,
                                const std::vector<double>& data) {
  os.write("KTEN", 4);
  put_u32(os, kTensorVersion);
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : data) put_f64(os, v);
}

inline std::pair<Shape, std::vector<double>> read_tensor_record(ByteReader& r) {
  r.expect_magic("KTEN");
  std::size_t ver_at = r.offset();
  std::uint32_t ver = r.u32();
  if (ver != kTensorVersion) {
    throw FormatError("KTEN: unsupported version " + std::to_string(ver), ver_at);
  }
  std::uint32_t rank = r.u32();
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = r.u32();
    count *= d;
  }
  std::vector<double> data(count);
  for (auto& v : data) v = r.f64();
  return {std::move(shape), std::move(data)};
}

}  // namespace detail

inline void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open for writing: " + path);
  detail::write_tensor_record(os, t.shape(), t.data());
  if (!os) throw ContractError("write failed: " + path);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot open: " + path);
  detail::ByteReader r(is, path);
  auto [shape, data] = detail::read_tensor_record(r);
  r.expect_eof();
  return Tensor::from(std::move(shape), std::move(data));
}

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

inline void save_checkpoint(const std::string& path, const std::vector<Parameter>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open for writing: " + path);
  os.write("KCKP", 4);
  detail::put_u32(os, detail::kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    detail::put_u16(os, static_cast<std::uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_tensor_record(os, p.tensor.shape(), p.tensor.data());
  }
  if (!os) throw ContractError("write failed: " + path);
}

inline std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot open: " + path);
  detail::ByteReader r(is, path);
  r.expect_magic("KCKP");
  std::size_t ver_at = r.offset();
  std::uint32_t ver = r.u32();
  if (ver != detail::kCheckpointVersion) {
    throw FormatError("KCKP: unsupported version " + std::to_string(ver), ver_at);
  }
  std::uint32_t count = r.u32();
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    std::uint16_t len = r.u16();
    e.name.resize(len);
    r.bytes(e.name.data(), len);
    auto [shape, data] = detail::read_tensor_record(r);
    e.shape = std::move(shape);
    e.data = std::move(data);
  }
  r.expect_eof();
  return entries;
}

/// 8-bit binary PGM (P5) rendering of values in [0, 1], row-major [H x W].
inline void save_pgm(const std::string& path, std::size_t h, std::size_t w,
                     const std::vector<double>& values01) {
  if (values01.size() != h * w) throw DimensionError("save_pgm: size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open for writing: " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  for (double v : values01) {
    double c = std::min(1.0, std::max(0.0, v));
    os.put(static_cast<char>(static_cast<int>(c * 255.0 + 0.5)));
  }
}

}  // namespace swingrade
