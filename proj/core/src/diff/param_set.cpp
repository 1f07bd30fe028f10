#include "rac/diff/param_set.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rac::diff {

void ParamSet::add(std::string name, Tensor tensor) {
  if (!tensor.defined()) throw std::invalid_argument("ParamSet::add: undefined tensor '" + name + "'");
  if (index_.contains(name)) throw std::invalid_argument("ParamSet::add: duplicate name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

const Tensor& ParamSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("ParamSet: no parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Tensor& ParamSet::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParamSet&>(*this).at(name));
}

std::size_t ParamSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

ParamSet ParamSet::with_prefix(std::string_view prefix) const {
  ParamSet out;
  for (const auto& [name, t] : entries_) {
    if (std::string_view(name).starts_with(prefix)) out.add(name, t);
  }
  return out;
}

void ParamSet::extend(const ParamSet& other) {
  for (const auto& [name, t] : other) add(name, t);
}

ParamSet ParamSet::snapshot() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone());
  return out;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (other.size() != size()) throw std::invalid_argument("ParamSet::copy_values_from: size mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [name, src] = other.entries_[i];
    auto& [dst_name, dst] = entries_[i];
    if (name != dst_name || src.shape() != dst.shape()) {
      throw std::invalid_argument("ParamSet::copy_values_from: layout mismatch at '" + dst_name + "'");
    }
    auto values = src.data();
    std::copy(values.begin(), values.end(), dst.mutable_data().begin());
  }
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("parameter file truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_params(const ParamSet& params) {
  std::string out(kParamMagic, sizeof(kParamMagic));
  put_u32(out, kParamFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

ParamSet deserialize_params(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kParamMagic, 4)) throw std::runtime_error("not a parameter file (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kParamFormatVersion) {
    throw std::runtime_error("unsupported parameter format version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  ParamSet params;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name(in.take(in.u32()));
    const std::uint32_t rank = in.u32();
    if (rank > 2) throw std::runtime_error("parameter '" + name + "' has unsupported rank");
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = std::bit_cast<float>(in.u32());
    params.add(std::move(name), Tensor::parameter(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw std::runtime_error("trailing bytes after parameter entries");
  return params;
}

void save_params(const ParamSet& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_params(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ParamSet load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_params(buffer.str());
}

}  // namespace rac::diff
