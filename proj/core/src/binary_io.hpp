#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>

#include <Eigen/Dense>

#include "voltgrid/error.hpp"
#include "voltgrid/hash.hpp"

namespace voltgrid::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// Accumulates a checksummed little-endian blob.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::string_view magic, std::uint32_t version) {
    buf_.append(magic);
    put(version);
  }

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf_.append(raw, sizeof(T));
  }

  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    buf_.append(s);
  }

  void put_matrix(const Eigen::MatrixXd& m) {
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    buf_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  }

  void put_vector(const Eigen::VectorXd& v) { put_matrix(Eigen::MatrixXd(v)); }

  void write(const std::filesystem::path& path) {
    put<std::uint64_t>(fnv1a(buf_));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error("failed writing " + path.string());
  }

 private:
  std::string buf_;
};

/// Reads a blob written by BinaryWriter; verifies magic, version and
/// checksum up front.
class BinaryReader {
 public:
  BinaryReader(const std::filesystem::path& path, std::string_view magic,
               std::uint32_t version)
      : name_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + name_);
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (buf_.size() < magic.size() + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
      corrupt("file is truncated");
    }
    std::uint64_t stored;
    std::memcpy(&stored, buf_.data() + buf_.size() - sizeof stored, sizeof stored);
    end_ = buf_.size() - sizeof stored;
    if (buf_.compare(0, magic.size(), magic) != 0) corrupt("bad magic");
    if (fnv1a(std::string_view(buf_.data(), end_)) != stored) corrupt("checksum mismatch");
    pos_ = magic.size();
    if (get<std::uint32_t>() != version) corrupt("unsupported version");
  }

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T value;
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  Eigen::MatrixXd get_matrix() {
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    if (cols != 0 && rows > (end_ - pos_) / sizeof(double) / cols) corrupt("tensor overruns file");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(m.data(), buf_.data() + pos_, sizeof(double) * rows * cols);
    pos_ += sizeof(double) * rows * cols;
    return m;
  }

  Eigen::VectorXd get_vector() {
    Eigen::MatrixXd m = get_matrix();
    if (m.cols() != 1) corrupt("expected a column vector");
    return m.col(0);
  }

  void expect_end() const {
    if (pos_ != end_) throw CorruptFileError(name_ + ": trailing bytes");
  }

  [[noreturn]] void corrupt(const std::string& why) const {
    throw CorruptFileError(name_ + ": " + why);
  }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) corrupt("file is truncated");
  }

  std::string name_;
  std::string buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace voltgrid::detail
