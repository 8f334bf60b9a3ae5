#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "resample/errors.hpp"
#include "resample/rng.hpp"

namespace resample {

/// Little-endian binary writer/reader pair for checkpoint containers.
/// The reader tracks its byte offset so truncation errors can name it.
class BinWriter {
public:
  explicit BinWriter(std::ostream& os) : os_(os) {}

  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { fixed(v); }
  void u64(std::uint64_t v) { fixed(v); }
  void i32(std::int32_t v) { fixed(v); }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    fixed(bits);
  }

  void f64_array(std::span<const double> vs) {
    u64(vs.size());
    for (double v : vs) f64(v);
  }

  void i32_array(std::span<const int> vs) {
    u64(vs.size());
    for (int v : vs) i32(v);
  }

  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

private:
  template <class T>
  void fixed(T v) {
    if constexpr (std::endian::native == std::endian::big) {
      auto* p = reinterpret_cast<unsigned char*>(&v);
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
    }
    bytes(&v, sizeof(T));
  }

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os_) throw Error("binary write failed");
  }

  std::ostream& os_;
};

class BinReader {
public:
  explicit BinReader(std::istream& is) : is_(is) {}

  std::size_t offset() const { return offset_; }

  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() { return fixed<std::uint32_t>(); }
  std::uint64_t u64() { return fixed<std::uint64_t>(); }
  std::int32_t i32() { return fixed<std::int32_t>(); }

  double f64() {
    std::uint64_t bits = fixed<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::vector<double> f64_array() {
    std::uint64_t n = u64();
    guard_count(n);
    std::vector<double> vs(n);
    for (auto& v : vs) v = f64();
    return vs;
  }

  std::vector<int> i32_array() {
    std::uint64_t n = u64();
    guard_count(n);
    std::vector<int> vs(n);
    for (auto& v : vs) v = i32();
    return vs;
  }

  std::string str() {
    std::uint64_t n = u64();
    guard_count(n);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

private:
  void guard_count(std::uint64_t n) {
    // A length prefix larger than any sane file is a corruption symptom.
    if (n > (1ULL << 32)) throw FormatError("implausible record length", offset_);
  }

  template <class T>
  T fixed() {
    T v;
    bytes(&v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      auto* p = reinterpret_cast<unsigned char*>(&v);
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
    }
    return v;
  }

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw FormatError("unexpected end of file", offset_ + static_cast<std::size_t>(is_.gcount()));
    offset_ += n;
  }

  std::istream& is_;
  std::size_t offset_ = 0;
};

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file for hashing: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return fnv1a64(data);
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace resample
