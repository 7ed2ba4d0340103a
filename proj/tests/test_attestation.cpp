// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "gpucc/attest/fixtures.hpp"

using namespace gpucc;

namespace {

Machine booted_machine(uint64_t seed = 11) {
  Machine m = build_machine(MachineConfig{});
  m.set_cc_mode(true);
  REQUIRE(secure_boot(m, make_test_bundle(seed)).ok);
  return m;
}

Bytes test_nonce(uint8_t fill = 0x21) { return Bytes(32, fill); }

}  // namespace

TEST_CASE("collect_evidence binds boot measurements, nonce, and sourcing split") {
  Machine m = booted_machine();
  FirmwareBundle bundle = make_test_bundle(11);
  auto ev = attest::collect_evidence(m, test_nonce());
  REQUIRE(ev.ok());

  const auto& report = ev.value().report;
  REQUIRE(report.measurements.size() == 64);
  for (const auto& r : report.measurements) {
    CHECK(r.hash.size() == 48);
    CHECK(r.size == 48);
  }
  // Slot 0 holds the FSP image hash; slots 0..3 mirror the boot chain.
  CHECK(report.measurements[0].hash == crypto::sha384(bundle.fsp));
  CHECK(report.measurements[2].hash == crypto::sha384(bundle.gsp_rm));
  CHECK(report.nonce == test_nonce());
  CHECK(report.opaque.driver_version == m.config.driver_version);

  REQUIRE(ev.value().chain.certs.size() == 5);
  CHECK(ev.value().chain.certs[0].role == attest::CertRole::attestation);
  CHECK(ev.value().chain.certs[4].role == attest::CertRole::root);

  // Two certificates sourced from the GPU, three from the driver store.
  int gpu = 0, driver = 0;
  for (const auto& evn : m.trace.events())
    if (evn.name == "evidence_source")
      (evn.meta.value("source", "") == "gpu" ? gpu : driver) += 1;
  CHECK(gpu == 2);
  CHECK(driver == 3);
}

TEST_CASE("collect_evidence requires a booted machine") {
  Machine m = build_machine(MachineConfig{});
  auto ev = attest::collect_evidence(m, test_nonce());
  REQUIRE(!ev.ok());
  CHECK(ev.error() == Err::not_booted);
}

TEST_CASE("device chain verification substitutes the local root first") {
  Machine m = booted_machine();
  auto bundle = attest::fixtures::make_clean(m, test_nonce());

  SECTION("golden chain verifies") {
    CHECK(!attest::verify_device_chain(bundle.evidence.chain, bundle.services.local_root,
                                       bundle.services.ocsp));
  }

  SECTION("one OCSP query per certificate") {
    bundle.services.ocsp.queries = 0;
    REQUIRE(!attest::verify_device_chain(bundle.evidence.chain, bundle.services.local_root,
                                         bundle.services.ocsp));
    CHECK(bundle.services.ocsp.queries == 5);
  }

  SECTION("revoked certificate fails with revoked") {
    bundle.services.ocsp.overrides[3] = attest::OcspStatus::revoked;
    auto r = attest::verify_device_chain(bundle.evidence.chain, bundle.services.local_root,
                                         bundle.services.ocsp);
    REQUIRE(r.has_value());
    CHECK(*r == attest::Reason::revoked);
  }

  SECTION("attacker-substituted in-evidence root is irrelevant") {
    auto chain = bundle.evidence.chain;
    chain.certs[4].public_key = Bytes(32, 0xAB);  // garbage root
    chain.certs[4].signature = Bytes(64, 0xCD);
    CHECK(!attest::verify_device_chain(chain, bundle.services.local_root, bundle.services.ocsp));

    // Unless the chain itself doesn't anchor to the local root.
    attest::DeviceAuthority rogue(999);
    auto rogue_chain = rogue.device_chain();
    auto r = attest::verify_device_chain(rogue_chain, bundle.services.local_root,
                                         bundle.services.ocsp);
    REQUIRE(r.has_value());
    CHECK(*r == attest::Reason::chain_sig);
  }
}

TEST_CASE("report verification: signature and nonce") {
  Machine m = booted_machine();
  auto bundle = attest::fixtures::make_clean(m, test_nonce());
  const auto& att_cert = bundle.evidence.chain.certs[0];

  CHECK(!attest::verify_report(bundle.evidence.report, att_cert, test_nonce()));

  SECTION("one flipped measurement byte breaks the signature") {
    auto report = bundle.evidence.report;
    report.measurements[10].hash[5] ^= 0x01;
    auto r = attest::verify_report(report, att_cert, test_nonce());
    REQUIRE(r.has_value());
    CHECK(*r == attest::Reason::report_sig);
  }

  SECTION("wrong nonce is stale") {
    auto r = attest::verify_report(bundle.evidence.report, att_cert, test_nonce(0x99));
    REQUIRE(r.has_value());
    CHECK(*r == attest::Reason::stale_nonce);
  }
}

TEST_CASE("rim retrieval and validation") {
  Machine m = booted_machine();
  auto bundle = attest::fixtures::make_clean(m, test_nonce());

  SECTION("matching store entries verify") {
    auto rims = attest::fetch_and_verify_rims(bundle.evidence.report.opaque, bundle.services.rims,
                                              bundle.services.local_rim_root);
    REQUIRE(std::holds_alternative<attest::RimPair>(rims));
    CHECK(std::get<attest::RimPair>(rims).driver.target == "driver");
    CHECK(std::get<attest::RimPair>(rims).vbios.target == "vbios");
  }

  SECTION("unknown schema id fails rim_schema") {
    auto f = bundle.services.rims.get("driver", m.config.driver_version);
    f->schema_id = "not-a-schema";
    bundle.services.rims.put(std::move(*f));
    auto rims = attest::fetch_and_verify_rims(bundle.evidence.report.opaque, bundle.services.rims,
                                              bundle.services.local_rim_root);
    REQUIRE(std::holds_alternative<attest::Reason>(rims));
    CHECK(std::get<attest::Reason>(rims) == attest::Reason::rim_schema);
  }

  SECTION("rim leaf signed by an untrusted key fails rim_chain") {
    auto f = bundle.services.rims.get("vbios", m.config.vbios_version);
    attest::DeviceAuthority rogue(555);
    f->cert_chain[0] = rogue.rim_leaf_cert();
    f->signature = crypto::ed25519_sign(rogue.rim_leaf_signing_seed(), f->tbs());
    bundle.services.rims.put(std::move(*f));
    auto rims = attest::fetch_and_verify_rims(bundle.evidence.report.opaque, bundle.services.rims,
                                              bundle.services.local_rim_root);
    REQUIRE(std::holds_alternative<attest::Reason>(rims));
    CHECK(std::get<attest::Reason>(rims) == attest::Reason::rim_chain);
  }

  SECTION("missing store entry fails rim_not_found") {
    attest::RimStore empty;
    auto rims = attest::fetch_and_verify_rims(bundle.evidence.report.opaque, empty,
                                              bundle.services.local_rim_root);
    REQUIRE(std::holds_alternative<attest::Reason>(rims));
    CHECK(std::get<attest::Reason>(rims) == attest::Reason::rim_not_found);
  }

  SECTION("rim file signature tamper fails rim_sig") {
    auto f = bundle.services.rims.get("driver", m.config.driver_version);
    f->signature[0] ^= 0x01;
    bundle.services.rims.put(std::move(*f));
    auto rims = attest::fetch_and_verify_rims(bundle.evidence.report.opaque, bundle.services.rims,
                                              bundle.services.local_rim_root);
    REQUIRE(std::holds_alternative<attest::Reason>(rims));
    CHECK(std::get<attest::Reason>(rims) == attest::Reason::rim_sig);
  }
}

TEST_CASE("measurement comparison supports multiple golden values per slot") {
  Machine m = booted_machine();
  auto bundle = attest::fixtures::make_clean(m, test_nonce());
  auto rims = attest::fetch_and_verify_rims(bundle.evidence.report.opaque, bundle.services.rims,
                                            bundle.services.local_rim_root);
  auto pair = std::get<attest::RimPair>(rims);

  SECTION("all 64 match: pass") {
    auto v = attest::compare_measurements(bundle.evidence.report, pair);
    CHECK(v.pass);
  }

  SECTION("record 7 not in the golden set: fail with index 7") {
    auto report = bundle.evidence.report;
    report.measurements[7].hash[0] ^= 0xFF;
    auto v = attest::compare_measurements(report, pair);
    CHECK(!v.pass);
    REQUIRE(v.mismatch_indices.size() == 1);
    CHECK(v.mismatch_indices[0] == 7);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0] == attest::Reason::measurement_mismatch);
  }

  SECTION("report matching the second allowed hash passes") {
    auto report = bundle.evidence.report;
    Bytes alternate = crypto::sha384(to_bytes("alternate firmware build"));
    report.measurements[9].hash = alternate;
    // The golden list for slot 9 now admits both values.
    for (auto& [idx, hashes] : pair.driver.golden)
      if (idx == 9) hashes.push_back(alternate);
    auto v = attest::compare_measurements(report, pair);
    CHECK(v.pass);
  }
}

TEST_CASE("attest orchestrates the stages in order and gates READY") {
  Machine m = booted_machine();
  auto bundle = attest::fixtures::make_clean(m, test_nonce());

  auto v = attest::attest(m, bundle.services, bundle.nonce, true);
  CHECK(v.pass);
  CHECK(m.attestation_ready);

  // Order: chain_ok strictly before any rim_fetch; ready only after verdict.
  std::optional<uint64_t> chain_t, rim_t, ready_t, verdict_t;
  for (const auto& ev : m.trace.events()) {
    if (ev.name == "chain_ok" && !chain_t) chain_t = ev.t;
    if (ev.name == "rim_fetch" && !rim_t) rim_t = ev.t;
    if (ev.name == "ready") ready_t = ev.t;
    if (ev.name == "attest_verdict") verdict_t = ev.t;
  }
  REQUIRE((chain_t && rim_t && ready_t && verdict_t));
  CHECK(*chain_t < *rim_t);
  CHECK(*verdict_t < *ready_t);
}

TEST_CASE("failed attestation never sets READY and no rim fetch precedes chain failure") {
  Machine m = booted_machine();
  auto bundle = attest::fixtures::make_clean(m, test_nonce());
  bundle.services.ocsp.overrides[4] = attest::OcspStatus::revoked;

  auto v = attest::attest(m, bundle.services, bundle.nonce, true);
  CHECK(!v.pass);
  REQUIRE(v.reasons.size() == 1);
  CHECK(v.reasons[0] == attest::Reason::revoked);
  CHECK(!m.attestation_ready);
  for (const auto& ev : m.trace.events()) CHECK(ev.name != "rim_fetch");
}

TEST_CASE("negative matrix: each reason reachable by exactly its fixture") {
  Machine m = booted_machine();
  auto cases = attest::fixtures::negative_matrix(m, test_nonce());
  REQUIRE(cases.size() == 10);
  for (auto& c : cases) {
    auto v = attest::verify_evidence(c.bundle.evidence, c.bundle.services, c.bundle.nonce);
    INFO("case " << c.name);
    if (!c.expected) {
      CHECK(v.pass);
    } else {
      CHECK(!v.pass);
      REQUIRE(v.reasons.size() == 1);
      CHECK(v.reasons[0] == *c.expected);
    }
  }
}

TEST_CASE("evidence bundle round-trips through the directory layout") {
  Machine m = booted_machine();
  auto bundle = attest::fixtures::make_clean(m, test_nonce());
  auto dir = std::filesystem::temp_directory_path() / "gpucc_attest_fixture_test";
  std::filesystem::remove_all(dir);
  attest::fixtures::write_bundle(bundle, dir);

  auto evidence = attest::fixtures::load_evidence_dir(dir / "evidence");
  auto rims = attest::RimStore::from_dir(dir / "rims");
  attest::Services services;
  services.local_root = attest::Certificate::from_json(
      attest::fixtures::load_json_file(dir / "anchors" / "root.json"));
  services.local_rim_root = attest::Certificate::from_json(
      attest::fixtures::load_json_file(dir / "anchors" / "rim_root.json"));
  services.rims = std::move(rims);

  auto v = attest::verify_evidence(evidence, services, bundle.nonce);
  CHECK(v.pass);
  std::filesystem::remove_all(dir);
}
