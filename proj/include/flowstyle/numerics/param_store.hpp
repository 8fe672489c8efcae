#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "flowstyle/numerics/tensor.hpp"

namespace flowstyle {

/// Named parameter (or gradient) tensors. Iteration is sorted by name.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  void add(const std::string& name, Tensor t);
  void set(const std::string& name, Tensor t) { entries_[name] = std::move(t); }
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor* find(std::string_view name) const;
  void erase(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t scalar_count() const;

  const Map& entries() const { return entries_; }
  Map& entries() { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Entries whose name starts with `prefix`.
  ParamStore subset(std::string_view prefix) const;
  /// Copies every entry of `other` into this store, overwriting.
  void merge(const ParamStore& other);
  /// this += other, entrywise; entries missing here are copied.
  void accumulate(const ParamStore& other);

  double global_norm() const;
  void scale(double factor);
  bool all_finite() const;

  /// FNV-1a over names, shapes and raw little-endian values.
  std::uint64_t fingerprint() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.entries_ == b.entries_;
  }

 private:
  Map entries_;
};

}  // namespace flowstyle
