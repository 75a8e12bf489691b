#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "core/error.hpp"

namespace lrp4rag::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written with native stores");

// Appends little-endian scalars to a byte buffer.
class Writer {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(v); }
  void f64(double v) { put(v); }
  void f64s(const std::vector<double>& vs) {
    for (double v : vs) f64(v);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  const std::vector<char>& bytes() const { return bytes_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
  }

 private:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }

  std::vector<char> bytes_;
};

// Bounds-checked reader; every overrun is a kFormat error.
class Reader {
 public:
  Reader(std::vector<char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  static Reader open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(bytes), path.string());
  }

  void expect_magic(std::string_view m) {
    need(m.size());
    if (std::string_view(bytes_.data() + pos_, m.size()) != m) {
      fail(ErrorKind::kFormat, source_ + ": bad magic, expected \"" + std::string(m) + "\"");
    }
    pos_ += m.size();
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }
  std::vector<double> f64s(std::size_t n) {
    need(n * sizeof(double));
    std::vector<double> out(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return out;
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

  void expect_end() const {
    if (remaining() != 0) {
      fail(ErrorKind::kFormat, source_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) {
      fail(ErrorKind::kFormat, source_ + ": truncated at byte " + std::to_string(pos_));
    }
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace lrp4rag::binio
