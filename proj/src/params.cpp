#include "umafd/params.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "umafd/errors.hpp"

namespace umafd {

Var ParameterSet::add(std::string name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  Var v(std::move(init), true);
  items_.push_back({std::move(name), v});
  return v;
}

const Var& ParameterSet::get(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return p.var;
  }
  throw ConfigError("unknown parameter " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) {
    Var v = p.var;
    v.zero_grad();
  }
}

namespace {

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : items_) {
    fnv(h, p.name.data(), p.name.size());
    for (auto d : p.var.shape()) {
      const std::uint64_t d64 = d;
      fnv(h, &d64, sizeof(d64));
    }
    fnv(h, p.var.value().ptr(), p.var.size() * sizeof(double));
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

void SgdMomentum::step(const ParameterSet& params, double lr) {
  const auto& items = params.items();
  if (velocity_.size() != items.size()) {
    velocity_.clear();
    for (const auto& p : items) velocity_.emplace_back(p.var.shape());
  }
  for (std::size_t k = 0; k < items.size(); ++k) {
    Var var = items[k].var;
    const Tensor& g = var.node()->grad;
    Tensor& v = velocity_[k];
    Tensor& theta = var.mutable_value();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      v[i] = momentum_ * v[i] - lr * gi;
      theta[i] += v[i];
    }
  }
}

namespace {

constexpr char kMagic[8] = {'U', 'M', 'A', 'F', 'D', 'C', 'K', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FileError("truncated checkpoint " + path.string());
  return v;
}

void put_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
  for (auto d : t.shape()) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::pair<std::string, Tensor> take_tensor(std::ifstream& in, const std::filesystem::path& path) {
  const auto len = take<std::uint32_t>(in, path);
  if (len > 4096) throw FileError("corrupt checkpoint " + path.string());
  std::string name(len, '\0');
  if (!in.read(name.data(), len)) throw FileError("truncated checkpoint " + path.string());
  const auto ndim = take<std::uint32_t>(in, path);
  if (ndim > 8) throw FileError("corrupt checkpoint " + path.string());
  Shape shape(ndim);
  for (auto& d : shape) d = take<std::uint64_t>(in, path);
  if (shape_size(shape) > (std::size_t{1} << 32)) throw FileError("corrupt checkpoint " + path.string());
  Tensor t(shape);
  if (!in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
    throw FileError("truncated checkpoint " + path.string());
  }
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_blob(const std::filesystem::path& path, const ParameterSet& params, const std::vector<Tensor>* velocity) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto& items = params.items();
  put<std::uint64_t>(out, items.size());
  for (const auto& p : items) put_tensor(out, p.name, p.var.value());
  const bool with_velocity = velocity && velocity->size() == items.size();
  put<std::uint64_t>(out, with_velocity ? items.size() : 0);
  if (with_velocity) {
    for (std::size_t k = 0; k < items.size(); ++k) put_tensor(out, items[k].name, (*velocity)[k]);
  }
  if (!out) throw FileError("failed writing checkpoint " + path.string());
}

void load_blob(const std::filesystem::path& path, const ParameterSet& params, std::vector<Tensor>* velocity,
               bool allow_missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FileError("not a checkpoint: " + path.string());

  std::map<std::string, Tensor> stored;
  const auto n = take<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [name, t] = take_tensor(in, path);
    stored.emplace(std::move(name), std::move(t));
  }
  std::map<std::string, Tensor> stored_velocity;
  const auto nv = take<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < nv; ++i) {
    auto [name, t] = take_tensor(in, path);
    stored_velocity.emplace(std::move(name), std::move(t));
  }

  const auto& items = params.items();
  for (const auto& p : items) {
    auto it = stored.find(p.name);
    if (it == stored.end()) {
      if (allow_missing) continue;
      throw FileError("checkpoint " + path.string() + " lacks parameter " + p.name);
    }
    if (it->second.shape() != p.var.shape()) {
      throw FileError("checkpoint parameter " + p.name + " has shape " + shape_str(it->second.shape()) +
                      ", model expects " + shape_str(p.var.shape()));
    }
    Var v = p.var;
    v.mutable_value() = it->second;
  }
  if (velocity) {
    velocity->clear();
    if (!stored_velocity.empty()) {
      for (const auto& p : items) {
        auto it = stored_velocity.find(p.name);
        velocity->push_back(it != stored_velocity.end() ? it->second : Tensor(p.var.shape()));
      }
    }
  }
}

}  // namespace umafd
