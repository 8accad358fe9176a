#include "dsk/binary_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dsk::io {
namespace {

template <typename T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(static_cast<std::uint8_t>(v >> (8 * i))));
  }
}

}  // namespace

void Writer::u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
void Writer::u16(std::uint16_t v) { put_le(buf_, v); }
void Writer::u32(std::uint32_t v) { put_le(buf_, v); }
void Writer::u64(std::uint64_t v) { put_le(buf_, v); }
void Writer::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void Writer::f64s(std::span<const double> v) {
  buf_.reserve(buf_.size() + 8 * v.size());
  for (double x : v) f64(x);
}

Reader::Reader(std::string data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}

void Reader::need(std::size_t n) const {
  if (remaining() < n) {
    throw std::runtime_error(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                             std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
  }
}

void Reader::expect_magic(std::string_view tag) {
  need(tag.size());
  if (std::string_view(data_).substr(pos_, tag.size()) != tag) {
    throw std::runtime_error(what_ + ": bad magic, expected \"" + std::string(tag) + "\"");
  }
  pos_ += tag.size();
}

std::uint8_t Reader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint16_t Reader::u16() {
  need(2);
  std::uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_++]) << (8 * i));
  return v;
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> Reader::f64s(std::size_t n) {
  need(8 * n);
  std::vector<double> v(n);
  for (auto& x : v) x = f64();
  return v;
}

std::string Reader::bytes(std::size_t n) {
  need(n);
  std::string s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

void Reader::expect_end() const {
  if (remaining() != 0) {
    throw std::runtime_error(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dsk::io
