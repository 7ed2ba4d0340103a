// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The verifier pipeline: device chain (with local root substitution and
// per-certificate OCSP), report signature and nonce, RIM retrieval and
// validation, and golden-measurement comparison. Stages run strictly in that
// order and the first failure decides the verdict.

#include <filesystem>
#include <fstream>
#include <map>

#include "gpucc/attest/evidence.hpp"

namespace gpucc::attest {

enum class Reason : uint8_t {
  chain_sig,
  revoked,
  ocsp_unknown,
  report_sig,
  stale_nonce,
  rim_schema,
  rim_sig,
  rim_chain,
  rim_not_found,
  measurement_mismatch,
  not_booted,
};

inline const char* to_string(Reason r) {
  switch (r) {
    case Reason::chain_sig: return "chain_sig";
    case Reason::revoked: return "revoked";
    case Reason::ocsp_unknown: return "ocsp_unknown";
    case Reason::report_sig: return "report_sig";
    case Reason::stale_nonce: return "stale_nonce";
    case Reason::rim_schema: return "rim_schema";
    case Reason::rim_sig: return "rim_sig";
    case Reason::rim_chain: return "rim_chain";
    case Reason::rim_not_found: return "rim_not_found";
    case Reason::measurement_mismatch: return "measurement_mismatch";
    case Reason::not_booted: return "not_booted";
  }
  return "?";
}

struct Verdict {
  bool pass = false;
  std::vector<Reason> reasons;
  std::vector<uint32_t> mismatch_indices;

  static Verdict passed() { return {true, {}, {}}; }
  static Verdict failed(Reason r) { return {false, {r}, {}}; }

  Json to_json() const {
    Json j;
    j["result"] = pass ? "pass" : "fail";
    j["reasons"] = Json::array();
    for (Reason r : reasons) j["reasons"].push_back(to_string(r));
    j["mismatch_indices"] = mismatch_indices;
    return j;
  }
};

// ---- mock services ----

enum class OcspStatus : uint8_t { good, revoked, unknown };

struct OcspClient {
  std::map<uint64_t, OcspStatus> overrides;
  OcspStatus fallback = OcspStatus::good;
  mutable uint64_t queries = 0;

  OcspStatus query(uint64_t serial) const {
    ++queries;
    auto it = overrides.find(serial);
    return it == overrides.end() ? fallback : it->second;
  }

  Json to_json() const {
    Json j;
    j["fallback"] = fallback == OcspStatus::good      ? "good"
                    : fallback == OcspStatus::revoked ? "revoked"
                                                      : "unknown";
    j["overrides"] = Json::object();
    for (auto& [serial, st] : overrides)
      j["overrides"][std::to_string(serial)] =
          st == OcspStatus::good ? "good" : st == OcspStatus::revoked ? "revoked" : "unknown";
    return j;
  }
  static OcspClient from_json(const Json& j) {
    OcspClient c;
    auto parse = [](const std::string& s) {
      return s == "good" ? OcspStatus::good : s == "revoked" ? OcspStatus::revoked : OcspStatus::unknown;
    };
    c.fallback = parse(j.at("fallback").get<std::string>());
    for (auto& [k, v] : j.at("overrides").items())
      c.overrides[std::stoull(k)] = parse(v.get<std::string>());
    return c;
  }
};

class RimStore {
 public:
  void put(RimFile f) { files_[key(f.target, f.id)] = std::move(f); }

  std::optional<RimFile> get(const std::string& target, const std::string& id) const {
    auto it = files_.find(key(target, id));
    if (it == files_.end()) return std::nullopt;
    return it->second;
  }

  void write_dir(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [k, f] : files_) {
      std::ofstream out(dir / ("rim_" + f.target + "_" + f.id + ".json"));
      out << f.to_json().dump(2) << "\n";
    }
  }

  static RimStore from_dir(const std::filesystem::path& dir) {
    RimStore s;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() != ".json") continue;
      std::ifstream in(e.path());
      Json j;
      in >> j;
      s.put(RimFile::from_json(j));
    }
    return s;
  }

  size_t size() const { return files_.size(); }

 private:
  static std::string key(const std::string& target, const std::string& id) { return target + ":" + id; }
  std::map<std::string, RimFile> files_;
};

struct Services {
  OcspClient ocsp;
  RimStore rims;
  Certificate local_root;      // device-chain trust anchor
  Certificate local_rim_root;  // RIM-chain trust anchor
};

// ---- pipeline stages ----

inline std::optional<Reason> verify_device_chain(const DeviceCertChain& chain,
                                                 const Certificate& local_root,
                                                 const OcspClient& ocsp, Trace* trace = nullptr) {
  if (chain.certs.size() != 5) return Reason::chain_sig;

  // Replace the in-evidence root before anything is checked: a compromised
  // driver cannot smuggle its own anchor.
  DeviceCertChain ch = chain;
  ch.certs[4] = local_root;
  if (trace) trace->emit("cvm_verifier", "root_substituted", {{"serial", local_root.serial}});

  const Certificate& attestation = ch.certs[0];
  const Certificate& device_identity = ch.certs[1];
  const Certificate& provisioner = ch.certs[2];
  const Certificate& model = ch.certs[3];
  const Certificate& root = ch.certs[4];

  // Reverse order: device identity up to the root, then the attestation cert
  // under the device identity key.
  const std::pair<const Certificate*, const Certificate*> links[] = {
      {&device_identity, &provisioner},
      {&provisioner, &model},
      {&model, &root},
      {&root, &root},
      {&attestation, &device_identity},
  };
  for (const auto& [cert, issuer] : links) {
    bool ok = verify_cert_signature(*cert, issuer->public_key);
    if (trace)
      trace->emit("cvm_verifier", "chain_verify", {{"cert", to_string(cert->role)}, {"ok", ok}});
    if (!ok) return Reason::chain_sig;
    OcspStatus st = ocsp.query(cert->serial);
    if (trace)
      trace->emit("cvm_verifier", "ocsp_query",
                  {{"serial", cert->serial},
                   {"status", st == OcspStatus::good      ? "good"
                              : st == OcspStatus::revoked ? "revoked"
                                                          : "unknown"}});
    if (st == OcspStatus::revoked) return Reason::revoked;
    if (st == OcspStatus::unknown) return Reason::ocsp_unknown;
  }
  return std::nullopt;
}

inline std::optional<Reason> verify_report(const AttestationReport& report,
                                           const Certificate& attestation_cert, ByteView nonce,
                                           Trace* trace = nullptr) {
  if (report.measurements.size() != kMeasurementCount) return Reason::report_sig;
  bool sig_ok = crypto::ed25519_verify(attestation_cert.public_key, report.tbs(), report.signature);
  if (trace) trace->emit("cvm_verifier", "report_verify", {{"sig_ok", sig_ok}});
  if (!sig_ok) return Reason::report_sig;
  if (report.nonce.size() != nonce.size() ||
      !std::equal(nonce.begin(), nonce.end(), report.nonce.begin()))
    return Reason::stale_nonce;
  return std::nullopt;
}

inline std::optional<Reason> verify_rim_file(const RimFile& f, const Certificate& local_rim_root,
                                             Trace* trace = nullptr) {
  if (f.schema_id != kRimSchemaId) return Reason::rim_schema;
  if (f.cert_chain.size() != 2) return Reason::rim_chain;
  const Certificate& leaf = f.cert_chain[0];
  const Certificate& intermediate = f.cert_chain[1];
  // Append the local RIM root to complete the chain.
  if (!verify_cert_signature(leaf, intermediate.public_key) ||
      !verify_cert_signature(intermediate, local_rim_root.public_key) ||
      !verify_cert_signature(local_rim_root, local_rim_root.public_key))
    return Reason::rim_chain;
  if (!crypto::ed25519_verify(leaf.public_key, f.tbs(), f.signature)) return Reason::rim_sig;
  if (trace) trace->emit("cvm_verifier", "rim_verify", {{"target", f.target}, {"id", f.id}});
  return std::nullopt;
}

struct RimPair {
  RimFile driver;
  RimFile vbios;
};

inline std::variant<RimPair, Reason> fetch_and_verify_rims(const OpaqueBlock& opaque,
                                                           const RimStore& store,
                                                           const Certificate& local_rim_root,
                                                           Trace* trace = nullptr) {
  RimPair out;
  struct Want {
    const char* target;
    const std::string* id;
    RimFile* dst;
  } wants[] = {{"driver", &opaque.driver_version, &out.driver},
               {"vbios", &opaque.vbios_version, &out.vbios}};
  for (auto& w : wants) {
    auto f = store.get(w.target, *w.id);
    if (trace)
      trace->emit("cvm_verifier", "rim_fetch",
                  {{"target", w.target}, {"id", *w.id}, {"found", f.has_value()}});
    if (!f) return Reason::rim_not_found;
    if (auto r = verify_rim_file(*f, local_rim_root, trace)) return *r;
    *w.dst = std::move(*f);
  }
  return out;
}

inline Verdict compare_measurements(const AttestationReport& report, const RimPair& rims,
                                    Trace* trace = nullptr) {
  std::map<uint32_t, const std::vector<Bytes>*> allowed;
  for (const auto& [idx, hashes] : rims.driver.golden) allowed[idx] = &hashes;
  for (const auto& [idx, hashes] : rims.vbios.golden) allowed[idx] = &hashes;

  Verdict v;
  for (uint32_t i = 0; i < report.measurements.size(); ++i) {
    auto it = allowed.find(i);
    bool match = false;
    if (it != allowed.end())
      for (const auto& h : *it->second)
        if (h == report.measurements[i].hash) {
          match = true;
          break;
        }
    if (!match) v.mismatch_indices.push_back(i);
  }
  v.pass = v.mismatch_indices.empty();
  if (!v.pass) v.reasons.push_back(Reason::measurement_mismatch);
  if (trace)
    trace->emit("cvm_verifier", "measurement_compare",
                {{"mismatches", v.mismatch_indices.size()}});
  return v;
}

// Full pipeline over an evidence bundle. Stage order is load-bearing: no RIM
// is fetched unless the chain verified, no comparison without verified RIMs.
inline Verdict verify_evidence(const Evidence& evidence, const Services& services, ByteView nonce,
                               Trace* trace = nullptr) {
  if (auto r = verify_device_chain(evidence.chain, services.local_root, services.ocsp, trace))
    return Verdict::failed(*r);
  if (trace) trace->emit("cvm_verifier", "chain_ok", {});
  if (auto r = verify_report(evidence.report, evidence.chain.certs[0], nonce, trace))
    return Verdict::failed(*r);
  if (trace) trace->emit("cvm_verifier", "report_ok", {});
  auto rims = fetch_and_verify_rims(evidence.report.opaque, services.rims, services.local_rim_root, trace);
  if (std::holds_alternative<Reason>(rims)) return Verdict::failed(std::get<Reason>(rims));
  if (trace) trace->emit("cvm_verifier", "rims_ok", {});
  return compare_measurements(evidence.report, std::get<RimPair>(rims), trace);
}

// Collect evidence from the machine, verify it, and (on pass) transition the
// device to READY.
inline Verdict attest(Machine& m, const Services& services, ByteView nonce, bool set_ready = true) {
  auto evidence = collect_evidence(m, nonce);
  if (!evidence.ok()) return Verdict::failed(Reason::not_booted);
  Verdict v = verify_evidence(evidence.value(), services, nonce, &m.trace);
  m.trace.emit("cvm_verifier", "attest_verdict", v.to_json());
  if (v.pass && set_ready) {
    m.attestation_ready = true;
    m.trace.emit("cvm_verifier", "ready", {{"epoch", m.epoch}});
  }
  return v;
}

}  // namespace gpucc::attest
