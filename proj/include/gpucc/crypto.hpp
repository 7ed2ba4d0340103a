// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Thin wrappers over OpenSSL libcrypto for the primitives the simulator
// composes: SHA-256/384, HMAC-SHA-256, AES-256-GCM, Ed25519. CRC-32 is
// implemented locally (ISO-HDLC variant, the one the RPC queue uses).

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <array>
#include <memory>
#include <optional>

#include "gpucc/common.hpp"

namespace gpucc::crypto {

using Key32 = std::array<uint8_t, 32>;

inline Bytes sha256(ByteView data) {
  Bytes out(32);
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr))
    throw std::runtime_error("sha256 failed");
  return out;
}

inline Bytes sha384(ByteView data) {
  Bytes out(48);
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha384(), nullptr))
    throw std::runtime_error("sha384 failed");
  return out;
}

inline Bytes hmac_sha256(ByteView key, ByteView data) {
  Bytes out(32);
  unsigned int len = 32;
  if (!HMAC(EVP_sha256(), key.data(), int(key.size()), data.data(), data.size(), out.data(), &len))
    throw std::runtime_error("hmac failed");
  return out;
}

// Single-block HKDF-style expand: HMAC(prk, label || 0x01). All derived keys
// in the hierarchy are 32 bytes, so one block is always enough.
inline Key32 hkdf_expand_label(ByteView prk, std::string_view label) {
  Bytes info(label.begin(), label.end());
  info.push_back(0x01);
  Bytes d = hmac_sha256(prk, info);
  Key32 out{};
  std::copy(d.begin(), d.end(), out.begin());
  return out;
}

constexpr size_t kGcmIvLen = 12;
constexpr size_t kGcmTagLen = 16;

struct GcmSealed {
  Bytes ciphertext;
  std::array<uint8_t, kGcmTagLen> tag;
};

inline GcmSealed aes256gcm_seal(ByteView key, ByteView iv, ByteView plaintext, ByteView aad) {
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx(EVP_CIPHER_CTX_new(),
                                                                      EVP_CIPHER_CTX_free);
  if (!ctx) throw std::runtime_error("cipher ctx");
  if (key.size() != 32 || iv.size() != kGcmIvLen) throw std::invalid_argument("gcm key/iv size");
  if (!EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), iv.data()))
    throw std::runtime_error("gcm init");
  int outl = 0;
  if (!aad.empty() && !EVP_EncryptUpdate(ctx.get(), nullptr, &outl, aad.data(), int(aad.size())))
    throw std::runtime_error("gcm aad");
  GcmSealed out;
  out.ciphertext.resize(plaintext.size());
  if (!plaintext.empty() &&
      !EVP_EncryptUpdate(ctx.get(), out.ciphertext.data(), &outl, plaintext.data(),
                         int(plaintext.size())))
    throw std::runtime_error("gcm encrypt");
  if (!EVP_EncryptFinal_ex(ctx.get(), out.ciphertext.data() + plaintext.size(), &outl))
    throw std::runtime_error("gcm final");
  if (!EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kGcmTagLen, out.tag.data()))
    throw std::runtime_error("gcm tag");
  return out;
}

inline std::optional<Bytes> aes256gcm_open(ByteView key, ByteView iv, ByteView ciphertext,
                                           ByteView tag, ByteView aad) {
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx(EVP_CIPHER_CTX_new(),
                                                                      EVP_CIPHER_CTX_free);
  if (!ctx) throw std::runtime_error("cipher ctx");
  if (key.size() != 32 || iv.size() != kGcmIvLen || tag.size() != kGcmTagLen)
    throw std::invalid_argument("gcm key/iv/tag size");
  if (!EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), iv.data()))
    throw std::runtime_error("gcm init");
  int outl = 0;
  if (!aad.empty() && !EVP_DecryptUpdate(ctx.get(), nullptr, &outl, aad.data(), int(aad.size())))
    throw std::runtime_error("gcm aad");
  Bytes plain(ciphertext.size());
  if (!ciphertext.empty() &&
      !EVP_DecryptUpdate(ctx.get(), plain.data(), &outl, ciphertext.data(), int(ciphertext.size())))
    throw std::runtime_error("gcm decrypt");
  if (!EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kGcmTagLen,
                           const_cast<uint8_t*>(tag.data())))
    throw std::runtime_error("gcm set tag");
  if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + plain.size(), &outl) != 1)
    return std::nullopt;  // tag mismatch
  return plain;
}

// ---- Ed25519 (deterministic keys from 32-byte seeds) ----

struct Ed25519KeyPair {
  std::array<uint8_t, 32> seed;
  Bytes public_key;  // 32 bytes
};

namespace detail {
using PkeyPtr = std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)>;

inline PkeyPtr priv_from_seed(ByteView seed) {
  if (seed.size() != 32) throw std::invalid_argument("ed25519 seed size");
  PkeyPtr k(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()),
            EVP_PKEY_free);
  if (!k) throw std::runtime_error("ed25519 key");
  return k;
}
}  // namespace detail

inline Ed25519KeyPair ed25519_keypair(ByteView seed) {
  auto k = detail::priv_from_seed(seed);
  Ed25519KeyPair out;
  std::copy(seed.begin(), seed.end(), out.seed.begin());
  size_t publen = 32;
  out.public_key.resize(publen);
  if (!EVP_PKEY_get_raw_public_key(k.get(), out.public_key.data(), &publen))
    throw std::runtime_error("ed25519 pub");
  return out;
}

inline Bytes ed25519_sign(ByteView seed, ByteView msg) {
  auto k = detail::priv_from_seed(seed);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, k.get()))
    throw std::runtime_error("sign init");
  size_t siglen = 64;
  Bytes sig(siglen);
  if (!EVP_DigestSign(ctx.get(), sig.data(), &siglen, msg.data(), msg.size()))
    throw std::runtime_error("sign");
  sig.resize(siglen);
  return sig;
}

inline bool ed25519_verify(ByteView public_key, ByteView msg, ByteView sig) {
  if (public_key.size() != 32) return false;
  detail::PkeyPtr k(
      EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(), public_key.size()),
      EVP_PKEY_free);
  if (!k) return false;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, k.get())) return false;
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
}

// ---- CRC-32 (ISO-HDLC: reflected 0xEDB88320, init/xorout 0xFFFFFFFF) ----

namespace detail {
inline const std::array<uint32_t, 256>& crc32_table() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}
}  // namespace detail

inline uint32_t crc32(ByteView data) {
  const auto& t = detail::crc32_table();
  uint32_t c = 0xFFFFFFFFu;
  for (uint8_t b : data) c = t[(c ^ b) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

}  // namespace gpucc::crypto
