// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace imvae::detail {

// Minimal little-endian binary writer/reader for artifact files. Every file
// starts with an 8-byte magic and a u32 version; readers validate both.

class BinWriter {
 public:
  BinWriter(const std::string& path, const char magic[8], std::uint32_t version)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open for write: " + path);
    out_.write(magic, 8);
    u32(version);
  }

  void raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void vec_i32(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i32(x);
  }
  void vec_u8(const std::vector<std::uint8_t>& v) {
    u64(v.size());
    raw(v.data(), v.size());
  }
  void vec_str(const std::vector<std::string>& v) {
    u64(v.size());
    for (const auto& s : v) str(s);
  }
  void mat(const Mat& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }

  void close() {
    out_.close();
    if (!out_) throw ConfigError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinReader {
 public:
  BinReader(const std::string& path, const char magic[8],
            std::uint32_t expect_version, const std::string& producer_stage)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) {
      throw MissingArtifact("missing artifact: " + path, producer_stage);
    }
    char got[8];
    read_raw(got, 8);
    if (std::string(got, 8) != std::string(magic, 8)) {
      throw DataError("bad magic in " + path);
    }
    const std::uint32_t v = u32();
    if (v != expect_version) {
      throw DataError("unsupported version in " + path);
    }
  }

  void read_raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DataError("truncated artifact: " + path_);
    }
  }
  std::uint8_t u8() { std::uint8_t v; read_raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; read_raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; read_raw(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; read_raw(&v, 4); return v; }
  std::int64_t i64() { std::int64_t v; read_raw(&v, 8); return v; }
  double f64() { double v; read_raw(&v, 8); return v; }
  std::string str() {
    const std::uint64_t n = u64();
    std::string s(n, '\0');
    read_raw(s.data(), n);
    return s;
  }
  std::vector<int> vec_i32() {
    const std::uint64_t n = u64();
    std::vector<int> v(n);
    for (auto& x : v) x = i32();
    return v;
  }
  std::vector<std::uint8_t> vec_u8() {
    const std::uint64_t n = u64();
    std::vector<std::uint8_t> v(n);
    if (n) read_raw(v.data(), n);
    return v;
  }
  std::vector<std::string> vec_str() {
    const std::uint64_t n = u64();
    std::vector<std::string> v(n);
    for (auto& s : v) s = str();
    return v;
  }
  Mat mat() {
    const auto rows = static_cast<Eigen::Index>(u64());
    const auto cols = static_cast<Eigen::Index>(u64());
    Mat m(rows, cols);
    read_raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return m;
  }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace imvae::detail
