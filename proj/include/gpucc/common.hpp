// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace gpucc {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

constexpr size_t kPageSize = 4096;

// Protocol-level failure codes. Config/programmer errors throw instead.
enum class Err {
  auth,
  replay,
  counter_exhausted,
  checksum_mismatch,
  queue_full,
  queue_empty,
  ring_full,
  not_booted,
  singleton_violation,
  channel_busy,
  capability_violation,
  unknown_engine,
  out_of_range,
  unaligned,
  staging_exhausted,
  session_stale,
  insufficient_samples,
  not_found,
  rpc_failure,
};

inline const char* to_string(Err e) {
  switch (e) {
    case Err::auth: return "auth";
    case Err::replay: return "replay";
    case Err::counter_exhausted: return "counter_exhausted";
    case Err::checksum_mismatch: return "checksum_mismatch";
    case Err::queue_full: return "queue_full";
    case Err::queue_empty: return "queue_empty";
    case Err::ring_full: return "ring_full";
    case Err::not_booted: return "not_booted";
    case Err::singleton_violation: return "singleton_violation";
    case Err::channel_busy: return "channel_busy";
    case Err::capability_violation: return "capability_violation";
    case Err::unknown_engine: return "unknown_engine";
    case Err::out_of_range: return "out_of_range";
    case Err::unaligned: return "unaligned";
    case Err::staging_exhausted: return "staging_exhausted";
    case Err::session_stale: return "session_stale";
    case Err::insufficient_samples: return "insufficient_samples";
    case Err::not_found: return "not_found";
    case Err::rpc_failure: return "rpc_failure";
  }
  return "unknown";
}

// Minimal expected-like result carrier.
template <typename T>
class Outcome {
 public:
  Outcome(T value) : v_(std::move(value)) {}
  Outcome(Err e) : v_(e) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& {
    if (!ok()) throw std::logic_error(std::string("Outcome::value on error: ") + to_string(error()));
    return std::get<T>(v_);
  }
  T&& value() && {
    if (!ok()) throw std::logic_error(std::string("Outcome::value on error: ") + to_string(error()));
    return std::get<T>(std::move(v_));
  }
  Err error() const { return std::get<Err>(v_); }

 private:
  std::variant<T, Err> v_;
};

struct Unit {};
using Status = Outcome<Unit>;
inline Status ok_status() { return Status(Unit{}); }

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- little-endian helpers ----

inline void put_le16(uint8_t* p, uint16_t v) {
  p[0] = uint8_t(v);
  p[1] = uint8_t(v >> 8);
}
inline void put_le32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = uint8_t(v >> (8 * i));
}
inline void put_le64(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = uint8_t(v >> (8 * i));
}
inline uint16_t get_le16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }
inline uint32_t get_le32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
  return v;
}
inline uint64_t get_le64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  return v;
}

inline void append_le32(Bytes& b, uint32_t v) {
  uint8_t tmp[4];
  put_le32(tmp, v);
  b.insert(b.end(), tmp, tmp + 4);
}
inline void append_le64(Bytes& b, uint64_t v) {
  uint8_t tmp[8];
  put_le64(tmp, v);
  b.insert(b.end(), tmp, tmp + 8);
}
inline void append_bytes(Bytes& b, ByteView v) { b.insert(b.end(), v.begin(), v.end()); }

// ---- hex ----

inline std::string to_hex(ByteView data) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (uint8_t b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

inline Bytes from_hex(const std::string& hex) {
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ConfigError("invalid hex digit");
  };
  if (hex.size() % 2) throw ConfigError("odd hex length");
  Bytes out(hex.size() / 2);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = uint8_t(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
  return out;
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline bool contains_subsequence(ByteView haystack, ByteView needle) {
  if (needle.empty() || haystack.size() < needle.size()) return false;
  const void* p = memmem(haystack.data(), haystack.size(), needle.data(), needle.size());
  return p != nullptr;
}

inline size_t count_subsequence(ByteView haystack, ByteView needle) {
  if (needle.empty() || haystack.size() < needle.size()) return 0;
  size_t n = 0;
  const uint8_t* cur = haystack.data();
  size_t left = haystack.size();
  while (left >= needle.size()) {
    const auto* p = static_cast<const uint8_t*>(memmem(cur, left, needle.data(), needle.size()));
    if (!p) break;
    ++n;
    left -= size_t(p - cur) + 1;
    cur = p + 1;
  }
  return n;
}

}  // namespace gpucc
