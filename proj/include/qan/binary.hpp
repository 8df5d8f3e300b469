#pragma once

// Little-endian fixed-width field helpers for the record formats.

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "qan/errors.hpp"

namespace qan::bin {

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  std::array<char, sizeof(T)> b{};
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xFFU);
  os.write(b.data(), b.size());
}

/// Returns false on clean EOF before the first byte; throws SchemaError on a truncated field.
template <class T>
bool try_get(std::istream& is, T& out) {
  static_assert(std::is_integral_v<T>);
  std::array<unsigned char, sizeof(T)> b{};
  is.read(reinterpret_cast<char*>(b.data()), b.size());
  const auto got = is.gcount();
  if (got == 0) return false;
  if (got != static_cast<std::streamsize>(sizeof(T))) throw SchemaError("truncated record");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<decltype(u)>(b[i]) << (8 * i);
  out = static_cast<T>(u);
  return true;
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!try_get(is, v)) throw SchemaError("truncated record");
  return v;
}

inline void put_magic(std::ostream& os, const char (&m)[5]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char (&m)[5]) {
  char got[4] = {};
  is.read(got, 4);
  if (is.gcount() != 4 || std::memcmp(got, m, 4) != 0) {
    throw SchemaError(std::string("bad magic, expected ") + m);
  }
}

}  // namespace qan::bin
