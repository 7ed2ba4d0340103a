// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-channel AEAD/MAC state. Every channel direction owns a cipher state
// whose 96-bit IV is a 32-bit channel salt followed by a 64-bit counter that
// increases by one per seal. The receive side tracks the last accepted
// counter, so a replayed ciphertext is rejected before the tag is checked.

#include <vector>

#include "gpucc/keys.hpp"

namespace gpucc {

// Records every (key, iv) pair used for sealing so traces can assert IV
// uniqueness across a whole simulation.
struct IvLog {
  struct Entry {
    uint8_t key_index;
    uint32_t salt;
    uint64_t counter;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;
};

struct SealedBlob {
  std::array<uint8_t, crypto::kGcmIvLen> iv{};
  Bytes payload;  // ciphertext, same length as plaintext
  std::array<uint8_t, crypto::kGcmTagLen> tag{};
  Bytes aad;  // plaintext, authenticated

  uint32_t iv_salt() const { return get_le32(iv.data()); }
  uint64_t iv_counter() const { return get_le64(iv.data() + 4); }

  // Wire form: iv || tag || le32(aad len) || aad || le32(payload len) || payload.
  Bytes serialize() const {
    Bytes out;
    out.reserve(iv.size() + tag.size() + 8 + aad.size() + payload.size());
    append_bytes(out, iv);
    append_bytes(out, tag);
    append_le32(out, uint32_t(aad.size()));
    append_bytes(out, aad);
    append_le32(out, uint32_t(payload.size()));
    append_bytes(out, payload);
    return out;
  }

  static Outcome<SealedBlob> deserialize(ByteView raw) {
    SealedBlob b;
    size_t need = b.iv.size() + b.tag.size() + 4;
    if (raw.size() < need) return Err::auth;
    size_t off = 0;
    std::copy_n(raw.begin(), b.iv.size(), b.iv.begin());
    off += b.iv.size();
    std::copy_n(raw.begin() + off, b.tag.size(), b.tag.begin());
    off += b.tag.size();
    uint32_t aad_len = get_le32(raw.data() + off);
    off += 4;
    if (raw.size() < off + aad_len + 4) return Err::auth;
    b.aad.assign(raw.begin() + off, raw.begin() + off + aad_len);
    off += aad_len;
    uint32_t pay_len = get_le32(raw.data() + off);
    off += 4;
    if (raw.size() < off + pay_len) return Err::auth;
    b.payload.assign(raw.begin() + off, raw.begin() + off + pay_len);
    return b;
  }

  size_t wire_size() const { return iv.size() + tag.size() + 8 + aad.size() + payload.size(); }
};

struct ChannelCipherState {
  KeyId key_id;
  uint32_t salt = 0;
  uint64_t send_counter = 1;          // next counter to use
  uint64_t recv_last_accepted = 0;    // strict last+1 check on receive
  uint64_t epoch = 0;                 // boot epoch the backing keys belong to
  IvLog* iv_log = nullptr;            // optional, owned by the session

  std::array<uint8_t, crypto::kGcmIvLen> next_iv() const {
    std::array<uint8_t, crypto::kGcmIvLen> iv{};
    put_le32(iv.data(), salt);
    put_le64(iv.data() + 4, send_counter);
    return iv;
  }
};

inline Outcome<SealedBlob> seal(ChannelCipherState& state, const KeyTable& keys,
                                ByteView plaintext, ByteView aad) {
  if (state.key_id.kind() != KeyKind::aead) throw std::invalid_argument("seal needs an aead key");
  if (state.send_counter == UINT64_MAX) return Err::counter_exhausted;
  SealedBlob blob;
  blob.iv = state.next_iv();
  blob.aad.assign(aad.begin(), aad.end());
  auto sealed = crypto::aes256gcm_seal(keys.key(state.key_id), blob.iv, plaintext, aad);
  blob.payload = std::move(sealed.ciphertext);
  blob.tag = sealed.tag;
  if (state.iv_log)
    state.iv_log->entries.push_back({state.key_id.index(), state.salt, state.send_counter});
  state.send_counter += 1;
  return blob;
}

namespace detail {
inline Outcome<Bytes> open_impl(ChannelCipherState& state, const KeyTable& keys,
                                const SealedBlob& blob, ByteView aad, bool strict_next) {
  if (state.key_id.kind() != KeyKind::aead) throw std::invalid_argument("open needs an aead key");
  // A blob from another channel's IV stream can never authenticate here,
  // even when it shares the key.
  if (blob.iv_salt() != state.salt) return Err::auth;
  uint64_t counter = blob.iv_counter();
  if (strict_next ? (counter != state.recv_last_accepted + 1)
                  : (counter < state.recv_last_accepted))
    return Err::replay;
  if (!std::equal(aad.begin(), aad.end(), blob.aad.begin(), blob.aad.end())) return Err::auth;
  auto plain = crypto::aes256gcm_open(keys.key(state.key_id), blob.iv, blob.payload, blob.tag, aad);
  if (!plain) return Err::auth;
  state.recv_last_accepted = counter;
  return *plain;
}
}  // namespace detail

// Message channels: exactly the next counter is acceptable.
inline Outcome<Bytes> open(ChannelCipherState& state, const KeyTable& keys, const SealedBlob& blob,
                           ByteView aad) {
  return detail::open_impl(state, keys, blob, aad, /*strict_next=*/true);
}

// Snapshot slots (tracking semaphores, sealed queue metadata): the producer
// may reseal several times between reads and the consumer may re-read the
// current value; only counters older than the last accepted one are replays.
inline Outcome<Bytes> open_latest(ChannelCipherState& state, const KeyTable& keys,
                                  const SealedBlob& blob, ByteView aad) {
  return detail::open_impl(state, keys, blob, aad, /*strict_next=*/false);
}

// ---- MAC channels ----

inline Bytes sign(KeyId mac_key_id, const KeyTable& keys, ByteView message) {
  if (mac_key_id.kind() != KeyKind::mac) throw std::invalid_argument("sign needs a mac key");
  return crypto::hmac_sha256(keys.key(mac_key_id), message);
}

inline Status verify(KeyId mac_key_id, const KeyTable& keys, ByteView message, ByteView digest) {
  Bytes expect = sign(mac_key_id, keys, message);
  if (expect.size() != digest.size()) return Err::auth;
  uint8_t diff = 0;
  for (size_t i = 0; i < expect.size(); ++i) diff |= expect[i] ^ digest[i];
  return diff == 0 ? ok_status() : Status(Err::auth);
}

}  // namespace gpucc
