// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Attestation evidence: a signed report of 64 measurement records plus an
// opaque block identifying driver and VBIOS, and the five-certificate device
// chain. Report slots 0..3 hold the secure-boot stage measurements; the rest
// are configuration measurements derived from the machine config.

#include "gpucc/attest/certs.hpp"
#include "gpucc/boot.hpp"

namespace gpucc::attest {

constexpr size_t kMeasurementCount = 64;
constexpr size_t kMeasurementHashLen = 48;

struct MeasurementRecord {
  uint16_t spec = 1;
  uint16_t size = kMeasurementHashLen;
  Bytes hash;  // 48 bytes

  Json to_json() const { return {{"spec", spec}, {"size", size}, {"hash", to_hex(hash)}}; }
  static MeasurementRecord from_json(const Json& j) {
    MeasurementRecord r;
    r.spec = j.at("spec").get<uint16_t>();
    r.size = j.at("size").get<uint16_t>();
    r.hash = from_hex(j.at("hash").get<std::string>());
    return r;
  }
};

struct OpaqueBlock {
  std::string driver_version;
  std::string vbios_version;
};

struct AttestationReport {
  std::vector<MeasurementRecord> measurements;  // exactly 64
  OpaqueBlock opaque;
  Bytes nonce;  // 32 bytes
  Bytes signature;

  Bytes tbs() const {
    Json j;
    j["measurements"] = Json::array();
    for (const auto& r : measurements) j["measurements"].push_back(r.to_json());
    j["opaque"] = {{"driver_version", opaque.driver_version}, {"vbios_version", opaque.vbios_version}};
    j["nonce"] = to_hex(nonce);
    return to_bytes(j.dump());
  }

  Json to_json() const {
    Json j;
    j["measurements"] = Json::array();
    for (const auto& r : measurements) j["measurements"].push_back(r.to_json());
    j["opaque"] = {{"driver_version", opaque.driver_version}, {"vbios_version", opaque.vbios_version}};
    j["nonce"] = to_hex(nonce);
    j["signature"] = to_hex(signature);
    return j;
  }

  static AttestationReport from_json(const Json& j) {
    AttestationReport r;
    for (const auto& e : j.at("measurements")) r.measurements.push_back(MeasurementRecord::from_json(e));
    r.opaque.driver_version = j.at("opaque").at("driver_version").get<std::string>();
    r.opaque.vbios_version = j.at("opaque").at("vbios_version").get<std::string>();
    r.nonce = from_hex(j.at("nonce").get<std::string>());
    r.signature = from_hex(j.at("signature").get<std::string>());
    return r;
  }
};

struct Evidence {
  DeviceCertChain chain;
  AttestationReport report;
};

// Configuration measurement for slots 4..63.
inline Bytes config_slot_hash(const MachineConfig& config, size_t slot) {
  Bytes input = to_bytes("gpucc-cfg-slot/");
  append_le64(input, slot);
  append_le64(input, config.measurement_salt);
  append_bytes(input, to_bytes(config.driver_version));
  append_bytes(input, to_bytes(config.vbios_version));
  return crypto::sha384(input);
}

inline Outcome<Evidence> collect_evidence(Machine& m, ByteView nonce) {
  if (!booted(m)) return Err::not_booted;
  if (nonce.size() != 32) throw std::invalid_argument("nonce must be 32 bytes");
  if (m.boot_measurements.size() != 4) return Err::not_booted;

  DeviceAuthority authority(m.config.provision_seed);
  Evidence ev;
  ev.chain = authority.device_chain();

  AttestationReport& rep = ev.report;
  for (size_t i = 0; i < kMeasurementCount; ++i) {
    MeasurementRecord r;
    r.spec = i < 4 ? 1 : 2;
    r.hash = i < 4 ? m.boot_measurements[i] : config_slot_hash(m.config, i);
    rep.measurements.push_back(std::move(r));
  }
  rep.opaque = {m.config.driver_version, m.config.vbios_version};
  rep.nonce.assign(nonce.begin(), nonce.end());
  rep.signature = crypto::ed25519_sign(authority.attestation_signing_seed(), rep.tbs());

  // Sourcing split: two certificates read from the GPU, three from the
  // driver's store.
  for (const auto& c : ev.chain.certs) {
    bool from_gpu = c.role == CertRole::attestation || c.role == CertRole::device_identity;
    m.trace.emit("cvm_verifier", "evidence_source",
                 {{"cert", to_string(c.role)}, {"source", from_gpu ? "gpu" : "driver"}});
  }
  m.trace.emit("device_root", "evidence_collect",
               {{"records", kMeasurementCount}, {"nonce", to_hex(nonce)}});
  return ev;
}

// ---- RIM files ----

constexpr const char* kRimSchemaId = "gpucc-rim-v1";

struct RimFile {
  std::string target;  // "driver" | "vbios"
  std::string id;      // version string from the opaque block
  std::string schema_id = kRimSchemaId;
  // index -> allowed hashes (a slot may admit several golden values)
  std::vector<std::pair<uint32_t, std::vector<Bytes>>> golden;
  std::vector<Certificate> cert_chain;  // [rim_leaf, rim_intermediate]; root is local
  Bytes signature;                      // by rim_leaf over tbs()

  Bytes tbs() const {
    Json j;
    j["target"] = target;
    j["id"] = id;
    j["schema_id"] = schema_id;
    j["golden"] = Json::array();
    for (const auto& [idx, hashes] : golden) {
      Json hs = Json::array();
      for (const auto& h : hashes) hs.push_back(to_hex(h));
      j["golden"].push_back({{"index", idx}, {"hashes", hs}});
    }
    return to_bytes(j.dump());
  }

  Json to_json() const {
    Json j;
    j["target"] = target;
    j["id"] = id;
    j["schema_id"] = schema_id;
    j["golden"] = Json::array();
    for (const auto& [idx, hashes] : golden) {
      Json hs = Json::array();
      for (const auto& h : hashes) hs.push_back(to_hex(h));
      j["golden"].push_back({{"index", idx}, {"hashes", hs}});
    }
    j["cert_chain"] = Json::array();
    for (const auto& c : cert_chain) j["cert_chain"].push_back(c.to_json());
    j["signature"] = to_hex(signature);
    return j;
  }

  static RimFile from_json(const Json& j) {
    RimFile f;
    f.target = j.at("target").get<std::string>();
    f.id = j.at("id").get<std::string>();
    f.schema_id = j.at("schema_id").get<std::string>();
    for (const auto& e : j.at("golden")) {
      std::vector<Bytes> hashes;
      for (const auto& h : e.at("hashes")) hashes.push_back(from_hex(h.get<std::string>()));
      f.golden.emplace_back(e.at("index").get<uint32_t>(), std::move(hashes));
    }
    for (const auto& c : j.at("cert_chain")) f.cert_chain.push_back(Certificate::from_json(c));
    f.signature = from_hex(j.at("signature").get<std::string>());
    return f;
  }
};

// Golden RIM pair matching a machine's expected boot + config measurements.
// The driver RIM endorses slots 0..31, the VBIOS RIM slots 32..63.
inline std::pair<RimFile, RimFile> make_reference_rims(const Machine& m,
                                                       const std::vector<Bytes>& boot_measurements) {
  DeviceAuthority authority(m.config.provision_seed);
  auto build = [&](const std::string& target, const std::string& id, uint32_t lo, uint32_t hi) {
    RimFile f;
    f.target = target;
    f.id = id;
    for (uint32_t i = lo; i < hi; ++i) {
      Bytes expected = i < 4 ? boot_measurements[i] : config_slot_hash(m.config, i);
      f.golden.emplace_back(i, std::vector<Bytes>{expected});
    }
    f.cert_chain = {authority.rim_leaf_cert(), authority.rim_intermediate_cert()};
    f.signature = crypto::ed25519_sign(authority.rim_leaf_signing_seed(), f.tbs());
    return f;
  };
  return {build("driver", m.config.driver_version, 0, 32),
          build("vbios", m.config.vbios_version, 32, 64)};
}

}  // namespace gpucc::attest
