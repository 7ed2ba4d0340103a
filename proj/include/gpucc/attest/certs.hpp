// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Simplified JSON certificates with a pluggable signature scheme (Ed25519 by
// default). What matters here is chain topology and verification order, not
// encoding: [attestation, device_identity, provisioner, model, root], with
// the root replaced by a local anchor before any check runs.

#include <json.hpp>

#include "gpucc/crypto.hpp"

namespace gpucc::attest {

using Json = nlohmann::json;

enum class CertRole : uint8_t {
  root,
  model,
  provisioner,
  device_identity,
  attestation,
  rim_root,
  rim_intermediate,
  rim_leaf,
};

inline const char* to_string(CertRole r) {
  switch (r) {
    case CertRole::root: return "root";
    case CertRole::model: return "model";
    case CertRole::provisioner: return "provisioner";
    case CertRole::device_identity: return "device_identity";
    case CertRole::attestation: return "attestation";
    case CertRole::rim_root: return "rim_root";
    case CertRole::rim_intermediate: return "rim_intermediate";
    case CertRole::rim_leaf: return "rim_leaf";
  }
  return "?";
}

inline CertRole cert_role_from_string(const std::string& s) {
  for (CertRole r : {CertRole::root, CertRole::model, CertRole::provisioner, CertRole::device_identity,
                     CertRole::attestation, CertRole::rim_root, CertRole::rim_intermediate,
                     CertRole::rim_leaf})
    if (s == to_string(r)) return r;
  throw ConfigError("unknown cert role: " + s);
}

struct Certificate {
  std::string subject;
  std::string issuer;
  CertRole role = CertRole::root;
  Bytes public_key;  // 32-byte Ed25519
  uint64_t serial = 0;
  std::string alg = "ed25519";
  Bytes signature;  // by the issuer key, over tbs()

  Bytes tbs() const {
    Json j;
    j["subject"] = subject;
    j["issuer"] = issuer;
    j["role"] = to_string(role);
    j["public_key"] = to_hex(public_key);
    j["serial"] = serial;
    j["alg"] = alg;
    return to_bytes(j.dump());
  }

  Json to_json() const {
    Json j;
    j["subject"] = subject;
    j["issuer"] = issuer;
    j["role"] = to_string(role);
    j["public_key"] = to_hex(public_key);
    j["serial"] = serial;
    j["alg"] = alg;
    j["signature"] = to_hex(signature);
    return j;
  }

  static Certificate from_json(const Json& j) {
    Certificate c;
    c.subject = j.at("subject").get<std::string>();
    c.issuer = j.at("issuer").get<std::string>();
    c.role = cert_role_from_string(j.at("role").get<std::string>());
    c.public_key = from_hex(j.at("public_key").get<std::string>());
    c.serial = j.at("serial").get<uint64_t>();
    c.alg = j.at("alg").get<std::string>();
    c.signature = from_hex(j.at("signature").get<std::string>());
    return c;
  }
};

inline bool verify_cert_signature(const Certificate& cert, ByteView issuer_public_key) {
  if (cert.alg != "ed25519") return false;
  return crypto::ed25519_verify(issuer_public_key, cert.tbs(), cert.signature);
}

// Order: [attestation, device_identity, provisioner, model, root].
struct DeviceCertChain {
  std::vector<Certificate> certs;

  Json to_json() const {
    Json j = Json::array();
    for (const auto& c : certs) j.push_back(c.to_json());
    return j;
  }
  static DeviceCertChain from_json(const Json& j) {
    DeviceCertChain ch;
    for (const auto& e : j) ch.certs.push_back(Certificate::from_json(e));
    return ch;
  }
};

// All device-side and RIM-service key material, derived from one provisioning
// seed so fixtures regenerate bit-identically.
class DeviceAuthority {
 public:
  explicit DeviceAuthority(uint64_t provision_seed) : seed_(provision_seed) {}

  Bytes key_seed(const std::string& name) const {
    Bytes input;
    append_le64(input, seed_);
    append_bytes(input, to_bytes(name));
    return crypto::sha256(input);
  }

  Bytes public_key(const std::string& name) const {
    return crypto::ed25519_keypair(key_seed(name)).public_key;
  }

  Certificate issue(const std::string& subject, const std::string& subject_key,
                    const std::string& issuer, const std::string& issuer_key, CertRole role,
                    uint64_t serial) const {
    Certificate c;
    c.subject = subject;
    c.issuer = issuer;
    c.role = role;
    c.public_key = public_key(subject_key);
    c.serial = serial;
    c.signature = crypto::ed25519_sign(key_seed(issuer_key), c.tbs());
    return c;
  }

  DeviceCertChain device_chain() const {
    DeviceCertChain ch;
    ch.certs.push_back(issue("GPU Attestation", "attestation", "GPU Device Identity",
                             "device_identity", CertRole::attestation, 5));
    ch.certs.push_back(issue("GPU Device Identity", "device_identity", "Vendor Provisioner CA",
                             "provisioner", CertRole::device_identity, 4));
    ch.certs.push_back(issue("Vendor Provisioner CA", "provisioner", "Vendor Model CA", "model",
                             CertRole::provisioner, 3));
    ch.certs.push_back(issue("Vendor Model CA", "model", "Vendor Root CA", "root", CertRole::model, 2));
    ch.certs.push_back(issue("Vendor Root CA", "root", "Vendor Root CA", "root", CertRole::root, 1));
    return ch;
  }

  Certificate local_root() const {
    return issue("Vendor Root CA", "root", "Vendor Root CA", "root", CertRole::root, 1);
  }

  Certificate rim_root_cert() const {
    return issue("RIM Root CA", "rim_root", "RIM Root CA", "rim_root", CertRole::rim_root, 10);
  }
  Certificate rim_intermediate_cert() const {
    return issue("RIM Intermediate CA", "rim_intermediate", "RIM Root CA", "rim_root",
                 CertRole::rim_intermediate, 11);
  }
  Certificate rim_leaf_cert() const {
    return issue("RIM File Signer", "rim_leaf", "RIM Intermediate CA", "rim_intermediate",
                 CertRole::rim_leaf, 12);
  }

  Bytes attestation_signing_seed() const { return key_seed("attestation"); }
  Bytes rim_leaf_signing_seed() const { return key_seed("rim_leaf"); }

 private:
  uint64_t seed_;
};

}  // namespace gpucc::attest
