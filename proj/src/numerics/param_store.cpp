#include "flowstyle/numerics/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

void ParamStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = entries_.emplace(name, std::move(t));
  if (!inserted) throw Error("param store: duplicate parameter '" + name + "'");
}

bool ParamStore::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

const Tensor* ParamStore::find(std::string_view name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error("param store: no parameter '" + std::string(name) + "'");
  }
  return it->second;
}

Tensor& ParamStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error("param store: no parameter '" + std::string(name) + "'");
  }
  return it->second;
}

void ParamStore::erase(std::string_view name) {
  auto it = entries_.find(name);
  if (it != entries_.end()) entries_.erase(it);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

ParamStore ParamStore::subset(std::string_view prefix) const {
  ParamStore out;
  for (const auto& [name, t] : entries_) {
    if (std::string_view(name).starts_with(prefix)) out.entries_.emplace(name, t);
  }
  return out;
}

void ParamStore::merge(const ParamStore& other) {
  for (const auto& [name, t] : other.entries_) entries_[name] = t;
}

void ParamStore::accumulate(const ParamStore& other) {
  for (const auto& [name, t] : other.entries_) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      entries_.emplace(name, t);
    } else {
      if (it->second.shape() != t.shape()) {
        throw ShapeError("accumulate", "shape mismatch for '" + name + "'");
      }
      it->second.matrix() += t.matrix();
    }
  }
}

double ParamStore::global_norm() const {
  double sq = 0.0;
  for (const auto& [_, t] : entries_) sq += t.matrix().squaredNorm();
  return std::sqrt(sq);
}

void ParamStore::scale(double factor) {
  for (auto& [_, t] : entries_) t.matrix() *= factor;
}

bool ParamStore::all_finite() const {
  for (const auto& [_, t] : entries_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& [name, t] : entries_) {
    mix(name.data(), name.size());
    for (auto d : t.shape()) {
      const std::uint64_t d64 = d;
      mix(&d64, sizeof d64);
    }
    for (double v : t.data()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
      }
      mix(&bits, sizeof bits);
    }
  }
  return h;
}

}  // namespace flowstyle
