// SPDX-License-Identifier: Apache-2.0
#include "advhar/digest.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "advhar/error.hpp"

namespace advhar {

Digest& Digest::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 1099511628211ull;
  }
  return *this;
}

Digest& Digest::update(std::string_view text) {
  return update(std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::string Digest::hex() const { return to_hex(state_); }

std::string to_hex(std::uint64_t value) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf.data(), 16);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  Digest d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(std::as_bytes(std::span<const char>(buf.data(), static_cast<std::size_t>(in.gcount()))));
  }
  return d.hex();
}

}  // namespace advhar
