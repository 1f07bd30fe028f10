#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rac::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void i32s(const std::vector<int>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(int));
  }
  std::string take() { return std::move(out_); }

 private:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::int32_t i32() { return pod<std::int32_t>(); }
  std::string str() {
    const std::size_t n = count(1);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> f64s() {
    std::vector<double> v(count(sizeof(double)));
    take(v.data(), v.size() * sizeof(double));
    return v;
  }
  std::vector<int> i32s() {
    std::vector<int> v(count(sizeof(int)));
    take(v.data(), v.size() * sizeof(int));
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof v);
    return v;
  }
  std::size_t count(std::size_t element) {
    const std::uint64_t n = u64();
    if (n > (bytes_.size() - pos_) / element) throw std::runtime_error("truncated binary data");
    return static_cast<std::size_t>(n);
  }
  void take(void* p, std::size_t n) {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("truncated binary data");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace rac::detail
