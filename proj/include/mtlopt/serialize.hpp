#pragma once

// Little-endian binary encoding helpers and the versioned checkpoint
// container. Doubles are stored through their exact bit pattern, so a
// save/load cycle is bit-exact regardless of locale or formatting.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

class BinaryWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view s) { buf_.append(s.data(), s.size()); }
  void put_string(std::string_view s) {
    put_u64(s.size());
    put_bytes(s);
  }
  void put_tensor(const Tensor& t) {
    put_u32(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) put_u64(d);
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(t[i]);
  }

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)[0]); }
  std::uint32_t u32() {
    const char* p = raw(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = raw(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string string() {
    const std::uint64_t n = u64();
    const char* p = raw(n);
    return std::string(p, n);
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = f64();
    return t;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const char* raw(std::uint64_t n) {
    if (pos_ + n > data_.size()) throw IoError("binary decode: truncated input");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return s;
}

// ---------------------------------------------------------------------------
// checkpoint container: magic + named sections

inline constexpr std::string_view kCheckpointMagic = "MTLOPT\x01\n";

struct CheckpointSections {
  std::vector<std::pair<std::string, std::string>> sections;

  void add(std::string name, std::string payload) {
    sections.emplace_back(std::move(name), std::move(payload));
  }
  const std::string* find(std::string_view name) const {
    for (const auto& [n, p] : sections)
      if (n == name) return &p;
    return nullptr;
  }
  const std::string& require(std::string_view name) const {
    const std::string* p = find(name);
    if (!p) throw IoError("checkpoint: missing section '" + std::string(name) + "'");
    return *p;
  }

  std::string encode() const {
    BinaryWriter w;
    w.put_bytes(kCheckpointMagic);
    w.put_u32(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
      w.put_string(name);
      w.put_string(payload);
    }
    return w.take();
  }

  static CheckpointSections decode(std::string_view data) {
    if (data.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
      throw IoError("checkpoint: bad magic (not a checkpoint file?)");
    BinaryReader r(data.substr(kCheckpointMagic.size()));
    CheckpointSections cs;
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = r.string();
      std::string payload = r.string();
      cs.add(std::move(name), std::move(payload));
    }
    return cs;
  }
};

}  // namespace mtlopt
