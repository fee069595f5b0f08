#pragma once

// Little helpers for the raw-binary sections of model files. Values are
// written in host byte order; the model header records a byte-order probe.

#include "tqf/common.hpp"

#include <istream>
#include <ostream>
#include <type_traits>

namespace tqf::detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<std::size_t>(is.gcount()) == sizeof(T), ErrorKind::Data, "model file is truncated");
  return v;
}

// Element count that is sanity-checked against a rough per-element size, so
// a corrupt count fails cleanly instead of attempting a huge allocation.
inline std::size_t read_count(std::istream& is, std::size_t element_bytes) {
  const auto n = read_pod<std::uint64_t>(is);
  require(n <= (std::uint64_t{1} << 40) / std::max<std::size_t>(element_bytes, 1), ErrorKind::Data,
          "model file has an implausible array length");
  return static_cast<std::size_t>(n);
}

template <class T>
void write_vector(std::ostream& os, const std::vector<T>& v) {
  write_pod<std::uint64_t>(os, v.size());
  if (!v.empty()) os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_vector(std::istream& is) {
  std::vector<T> v(read_count(is, sizeof(T)));
  if (!v.empty()) {
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    require(static_cast<std::size_t>(is.gcount()) == v.size() * sizeof(T), ErrorKind::Data, "model file is truncated");
  }
  return v;
}

}  // namespace tqf::detail
