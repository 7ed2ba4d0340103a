// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The derived-key hierarchy: a session master secret and the 44 channel keys
// expanded from it (6 GSP + 6 SEC2 + 32 CE), each named after the channel it
// protects. Key names double as derivation labels.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gpucc/crypto.hpp"

namespace gpucc {

constexpr size_t kKeyCount = 44;
constexpr int kLceCount = 8;

enum class KeyKind : uint8_t { aead, mac };

namespace detail {
inline const std::array<std::string, kKeyCount>& key_names() {
  static const std::array<std::string, kKeyCount> names = [] {
    std::array<std::string, kKeyCount> n;
    size_t i = 0;
    n[i++] = "gsp_cpu_locked_rpc";
    n[i++] = "cpu_gsp_locked_rpc";
    n[i++] = "gsp_cpu_dma";
    n[i++] = "cpu_gsp_dma";
    n[i++] = "gsp_cpu_replayable_fault";
    n[i++] = "gsp_cpu_non_replayable_fault";
    for (const char* priv : {"user", "kernel", "scrubber"}) {
      n[i++] = std::string("cpu_sec2_data_") + priv;
      n[i++] = std::string("cpu_sec2_hmac_") + priv;
    }
    for (int lce = 0; lce < kLceCount; ++lce)
      for (const char* dir : {"h2d", "d2h"})
        for (const char* priv : {"user", "kernel"})
          n[i++] = "lce" + std::to_string(lce) + "_" + dir + "_" + priv;
    return n;
  }();
  return names;
}
}  // namespace detail

// Index into the canonical 44-entry key list.
class KeyId {
 public:
  constexpr KeyId() : index_(0) {}
  constexpr explicit KeyId(uint8_t index) : index_(index) {}

  static KeyId from_name(const std::string& name) {
    const auto& names = detail::key_names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("unknown key name: " + name);
    return KeyId(uint8_t(it - names.begin()));
  }

  static std::optional<KeyId> try_from_name(const std::string& name) {
    const auto& names = detail::key_names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return KeyId(uint8_t(it - names.begin()));
  }

  const std::string& name() const { return detail::key_names()[index_]; }
  uint8_t index() const { return index_; }

  KeyKind kind() const {
    const std::string& n = name();
    return n.rfind("cpu_sec2_hmac_", 0) == 0 ? KeyKind::mac : KeyKind::aead;
  }

  bool operator==(const KeyId&) const = default;

 private:
  uint8_t index_;
};

inline std::vector<KeyId> all_key_ids() {
  std::vector<KeyId> out;
  out.reserve(kKeyCount);
  for (size_t i = 0; i < kKeyCount; ++i) out.push_back(KeyId(uint8_t(i)));
  return out;
}

struct MasterSecret {
  std::array<uint8_t, 32> secret{};
};

// Two-nonce establishment standing in for the SPDM handshake. Deterministic:
// the same (requester, responder) randoms always yield the same secret, and
// swapping roles yields a different one.
inline MasterSecret establish_session(ByteView requester_random, ByteView responder_random) {
  if (requester_random.size() != 32 || responder_random.size() != 32)
    throw std::invalid_argument("session randoms must be 32 bytes");
  Bytes prk = crypto::hmac_sha256(requester_random, responder_random);
  auto key = crypto::hkdf_expand_label(prk, "gpu-cc master secret");
  MasterSecret out;
  out.secret = key;
  return out;
}

class KeyTable {
 public:
  KeyTable() = default;

  const crypto::Key32& key(KeyId id) const { return entries_[id.index()]; }
  KeyKind kind(KeyId id) const { return id.kind(); }
  size_t size() const { return kKeyCount; }

  static KeyTable derive(const MasterSecret& master) {
    KeyTable t;
    for (size_t i = 0; i < kKeyCount; ++i)
      t.entries_[i] = crypto::hkdf_expand_label(master.secret, detail::key_names()[i]);
    return t;
  }

 private:
  std::array<crypto::Key32, kKeyCount> entries_{};
};

inline KeyTable derive_all_keys(const MasterSecret& master) { return KeyTable::derive(master); }

// ---- GetKMB: the per-engine key bundle handed to clients ----

struct EngineRef {
  enum class Kind : uint8_t { sec2, lce } kind = Kind::sec2;
  int lce_index = 0;  // valid when kind == lce

  static EngineRef sec2() { return {Kind::sec2, 0}; }
  static EngineRef lce(int x) { return {Kind::lce, x}; }
};

enum class Privilege : uint8_t { user, kernel };

inline const char* to_string(Privilege p) { return p == Privilege::user ? "user" : "kernel"; }

struct KeyBundle {
  KeyId first;   // sec2: data key; lce: h2d key
  KeyId second;  // sec2: hmac key; lce: d2h key
};

inline Outcome<KeyBundle> get_kmb(const KeyTable&, EngineRef engine, Privilege priv) {
  const std::string suffix = to_string(priv);
  if (engine.kind == EngineRef::Kind::sec2) {
    return KeyBundle{KeyId::from_name("cpu_sec2_data_" + suffix),
                     KeyId::from_name("cpu_sec2_hmac_" + suffix)};
  }
  if (engine.lce_index < 0 || engine.lce_index >= kLceCount) return Err::unknown_engine;
  const std::string base = "lce" + std::to_string(engine.lce_index) + "_";
  return KeyBundle{KeyId::from_name(base + "h2d_" + suffix),
                   KeyId::from_name(base + "d2h_" + suffix)};
}

}  // namespace gpucc
