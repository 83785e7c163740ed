#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sta/tensor.hpp"

namespace sta {

/// File-format violation (bad magic, unsupported version, truncation).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Filesystem-level failure (open/read/write).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

/// STAT tensor container.
///
/// Layout (all integers little-endian):
///   magic "STAT" | version u32 (=1) | count u32
///   per tensor: name_len u32, name bytes (UTF-8), rank u32, dims u64 each,
///               values f64 each (row-major)
///   meta_len u32, metadata bytes (UTF-8, JSON-compatible key/value text;
///               zero-length for plain tensor files)
struct Container {
  std::vector<NamedArray> arrays;
  std::string metadata;

  const NamedArray* find(const std::string& name) const;
  const NamedArray& at(const std::string& name) const;  // FormatError if absent
  void add(std::string name, Shape shape, std::vector<double> data);
};

inline constexpr uint32_t kContainerVersion = 1;

void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path);

}  // namespace sta
