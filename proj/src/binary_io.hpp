#pragma once

// Little-endian length-prefixed records shared by the checkpoint and
// completion-map formats.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "scg/tensor.hpp"

namespace scg {

class Writer {
public:
  template <typename T>
  void pod(T v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void bytes(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void floats(const float* data, Index n) {
    pod<std::uint64_t>(std::uint64_t(n));
    out_.append(reinterpret_cast<const char*>(data), std::size_t(n) * sizeof(float));
  }
  std::string& str() { return out_; }

private:
  std::string out_;
};

class Reader {
public:
  Reader(const std::string& in, std::string what) : in_(in), context_(std::move(what)) {}
  template <typename T>
  T pod(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(const char* what) {
    const auto n = pod<std::uint64_t>(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Vector<float> floats(const char* what, Index expect) {
    const auto n = pod<std::uint64_t>(what);
    if (expect >= 0 && n != std::uint64_t(expect))
      throw FormatError(context_ + ": " + what + " has " + std::to_string(n) +
                        " values, expected " + std::to_string(expect));
    if (n > (in_.size() - pos_) / sizeof(float))
      throw FormatError(context_ + ": truncated while reading " + what);
    Vector<float> v(static_cast<Index>(n));
    std::memcpy(v.data(), in_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

private:
  void need(std::uint64_t n, const char* what) const {
    if (n > in_.size() - pos_)
      throw FormatError(context_ + ": truncated while reading " + what);
  }
  const std::string& in_;
  std::string context_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to path.tmp, then renames over `path`.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

} // namespace scg
