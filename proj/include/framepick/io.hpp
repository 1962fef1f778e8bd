#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace framepick::io {

// All binary file formats in this project are little-endian.

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    std::reverse(buf, buf + sizeof(T));
    write_bytes(os, buf, sizeof(T));
  } else {
    write_bytes(os, &v, sizeof(T));
  }
}

template <typename T>
T read_le(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) throw std::runtime_error("read_le: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) {
  write_bytes(os, magic, 4);
}

inline void expect_magic(std::istream& is, const char (&magic)[5],
                         const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error(what + ": bad magic");
}

inline void write_f64_block(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) write_le<double>(os, x);
}

inline std::vector<double> read_f64_block(std::istream& is, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = read_le<double>(is);
  return v;
}

/// N-dimensional f64 tensor in the FVTN sidecar format:
/// magic "FVTN", u32 version, u8 rank, rank x u64 dims, f64 row-major.
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

inline constexpr std::uint32_t kTensorVersion = 1;

inline void save_tensor(const Tensor& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_tensor: cannot open " + path);
  write_magic(os, "FVTN");
  write_le<std::uint32_t>(os, kTensorVersion);
  write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) write_le<std::uint64_t>(os, d);
  write_f64_block(os, t.data);
  if (!os) throw std::runtime_error("save_tensor: write failed for " + path);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_tensor: cannot open " + path);
  expect_magic(is, "FVTN", path);
  auto version = read_le<std::uint32_t>(is);
  if (version != kTensorVersion)
    throw std::runtime_error("load_tensor: unsupported version in " + path);
  Tensor t;
  auto rank = read_le<std::uint8_t>(is);
  t.dims.resize(rank);
  for (auto& d : t.dims) d = read_le<std::uint64_t>(is);
  t.data = read_f64_block(is, t.size());
  return t;
}

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace framepick::io
