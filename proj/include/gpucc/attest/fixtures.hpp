// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fixture factory for the attestation test matrix: one clean bundle that must
// pass, and one mutation per failure reason, each tripping exactly its own
// stage of the pipeline.

#include "gpucc/attest/verifier.hpp"
#include "gpucc/boot.hpp"

namespace gpucc::attest::fixtures {

struct Bundle {
  Evidence evidence;
  Services services;
  Bytes nonce;
};

struct Case {
  std::string name;
  Bundle bundle;
  std::optional<Reason> expected;  // nullopt = pass
};

inline Bundle make_clean(Machine& m, ByteView nonce) {
  auto evidence = collect_evidence(m, nonce);
  if (!evidence.ok()) throw ConfigError("fixture machine must be booted");
  DeviceAuthority authority(m.config.provision_seed);
  Bundle b;
  b.evidence = std::move(evidence).value();
  b.nonce.assign(nonce.begin(), nonce.end());
  b.services.local_root = authority.local_root();
  b.services.local_rim_root = authority.rim_root_cert();
  auto [driver, vbios] = make_reference_rims(m, m.boot_measurements);
  b.services.rims.put(std::move(driver));
  b.services.rims.put(std::move(vbios));
  return b;
}

inline std::vector<Case> negative_matrix(Machine& m, ByteView nonce) {
  DeviceAuthority authority(m.config.provision_seed);
  std::vector<Case> cases;

  cases.push_back({"clean", make_clean(m, nonce), std::nullopt});

  {
    Case c{"revoked_provisioner", make_clean(m, nonce), Reason::revoked};
    c.bundle.services.ocsp.overrides[3] = OcspStatus::revoked;  // provisioner serial
    cases.push_back(std::move(c));
  }
  {
    Case c{"bad_chain_sig", make_clean(m, nonce), Reason::chain_sig};
    c.bundle.evidence.chain.certs[2].signature[0] ^= 0x01;
    cases.push_back(std::move(c));
  }
  {
    Case c{"bad_report_sig", make_clean(m, nonce), Reason::report_sig};
    c.bundle.evidence.report.signature[0] ^= 0x01;
    cases.push_back(std::move(c));
  }
  {
    Case c{"stale_nonce", make_clean(m, nonce), Reason::stale_nonce};
    c.bundle.nonce[0] ^= 0xFF;  // verifier expects a different nonce
    cases.push_back(std::move(c));
  }
  {
    Case c{"bad_rim_schema", make_clean(m, nonce), Reason::rim_schema};
    auto f = c.bundle.services.rims.get("driver", m.config.driver_version);
    f->schema_id = "bogus-schema";
    c.bundle.services.rims.put(std::move(*f));
    cases.push_back(std::move(c));
  }
  {
    Case c{"bad_rim_chain", make_clean(m, nonce), Reason::rim_chain};
    auto f = c.bundle.services.rims.get("driver", m.config.driver_version);
    // Leaf re-issued under an unrelated key: the chain no longer anchors.
    DeviceAuthority rogue(m.config.provision_seed ^ 0xdeadbeefULL);
    f->cert_chain[0] = rogue.rim_leaf_cert();
    f->signature = crypto::ed25519_sign(rogue.rim_leaf_signing_seed(), f->tbs());
    c.bundle.services.rims.put(std::move(*f));
    cases.push_back(std::move(c));
  }
  {
    Case c{"bad_rim_sig", make_clean(m, nonce), Reason::rim_sig};
    auto f = c.bundle.services.rims.get("vbios", m.config.vbios_version);
    f->signature[3] ^= 0x01;  // chain intact, file signature broken
    c.bundle.services.rims.put(std::move(*f));
    cases.push_back(std::move(c));
  }
  {
    Case c{"perturbed_measurement", make_clean(m, nonce), Reason::measurement_mismatch};
    // Record 7 perturbed and the report re-signed: everything verifies except
    // the golden comparison.
    c.bundle.evidence.report.measurements[7].hash[0] ^= 0x01;
    c.bundle.evidence.report.signature = crypto::ed25519_sign(
        authority.attestation_signing_seed(), c.bundle.evidence.report.tbs());
    cases.push_back(std::move(c));
  }
  {
    Case c{"ocsp_unknown", make_clean(m, nonce), Reason::ocsp_unknown};
    c.bundle.services.ocsp.overrides[2] = OcspStatus::unknown;  // model serial
    cases.push_back(std::move(c));
  }
  return cases;
}

// ---- directory layout used by the CLI `attest` subcommand ----

inline void write_bundle(const Bundle& b, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "evidence");
  fs::create_directories(dir / "anchors");
  std::ofstream(dir / "evidence" / "chain.json") << b.evidence.chain.to_json().dump(2) << "\n";
  std::ofstream(dir / "evidence" / "report.json") << b.evidence.report.to_json().dump(2) << "\n";
  std::ofstream(dir / "anchors" / "root.json") << b.services.local_root.to_json().dump(2) << "\n";
  std::ofstream(dir / "anchors" / "rim_root.json")
      << b.services.local_rim_root.to_json().dump(2) << "\n";
  std::ofstream(dir / "ocsp.json") << b.services.ocsp.to_json().dump(2) << "\n";
  std::ofstream(dir / "nonce.txt") << to_hex(b.nonce) << "\n";
  b.services.rims.write_dir(dir / "rims");
}

inline Json load_json_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot read " + p.string());
  Json j;
  f >> j;
  return j;
}

inline Evidence load_evidence_dir(const std::filesystem::path& dir) {
  Evidence ev;
  ev.chain = DeviceCertChain::from_json(load_json_file(dir / "chain.json"));
  ev.report = AttestationReport::from_json(load_json_file(dir / "report.json"));
  return ev;
}

}  // namespace gpucc::attest::fixtures
