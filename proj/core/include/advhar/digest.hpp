// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace advhar {

/// Incremental 64-bit FNV-1a. Used for content digests of artifacts,
/// parameter snapshots and configs; not a cryptographic hash.
class Digest {
 public:
  Digest& update(std::span<const std::byte> bytes);
  Digest& update(std::string_view text);
  template <class T>
  Digest& update_values(std::span<const T> values) {
    return update(std::as_bytes(values));
  }
  template <class T>
  Digest& update_value(const T& value) {
    return update(std::as_bytes(std::span<const T>(&value, 1)));
  }

  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

std::string to_hex(std::uint64_t value);

/// Digest of a file's bytes; throws IoError if unreadable.
std::string file_digest(const std::string& path);

}  // namespace advhar
