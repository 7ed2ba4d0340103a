// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "gpucc/boot.hpp"
#include "gpucc/rpc.hpp"
#include "gpucc/sec2.hpp"

using namespace gpucc;

namespace {
Machine booted_cc_machine(uint64_t seed = 1) {
  Machine m = build_machine(MachineConfig{});
  m.set_cc_mode(true);
  REQUIRE(secure_boot(m, make_test_bundle(seed)).ok);
  return m;
}
}  // namespace

TEST_CASE("build_machine lays out regions per config") {
  Machine m = build_machine(MachineConfig{});
  CHECK(kBar0Words == 0x400000);
  CHECK(m.cvm_private.size == 48ull << 20);
  CHECK(m.shared_staging.base == m.cvm_private.end());

  // CPR claims at least the configured fraction of GPU memory.
  double frac = double(m.cpr.size) / double(m.cpr.size + m.vidmem.size);
  CHECK(frac >= 0.9);
  // 0.9 of 64 MiB is 57.6 MiB; page rounding keeps it within one page.
  CHECK(m.cpr.size >= uint64_t(57.6 * 1024 * 1024));
  CHECK(m.cpr.size <= uint64_t(57.6 * 1024 * 1024) + kPageSize);
  CHECK(m.boot_state == BootState::cold);

  for (Region* r : m.regions()) CHECK(r->base % kPageSize == 0);
}

TEST_CASE("build_machine rejects bad configs") {
  MachineConfig overlap;
  overlap.staging_base = 4096;  // inside cvm_private
  CHECK_THROWS_AS(build_machine(overlap), ConfigError);

  MachineConfig bad_frac;
  bad_frac.cpr_fraction = 1.5;
  CHECK_THROWS_AS(build_machine(bad_frac), ConfigError);

  MachineConfig zero;
  zero.gpu_mem_size = 0;
  CHECK_THROWS_AS(build_machine(zero), ConfigError);
}

TEST_CASE("secure boot walks the chain and measures each stage") {
  Machine m = build_machine(MachineConfig{});
  m.set_cc_mode(true);
  FirmwareBundle bundle = make_test_bundle(3);

  SECTION("untampered bundle reaches sec2_booted with 4 measurements") {
    BootReport r = secure_boot(m, bundle);
    CHECK(r.ok);
    CHECK(m.boot_state == BootState::sec2_booted);
    REQUIRE(r.measurements.size() == 4);
    for (const auto& h : r.measurements) CHECK(h.size() == 48);
    CHECK(r.measurements[0] == crypto::sha384(bundle.fsp));
    CHECK(m.epoch == 1);
    CHECK(m.cc_mode_active);
  }

  SECTION("tampered gsp_rm stops the chain before sec2") {
    bundle.gsp_rm[100] ^= 0x01;
    BootReport r = secure_boot(m, bundle);
    CHECK(!r.ok);
    REQUIRE(r.failed.has_value());
    CHECK(*r.failed == BootStage::gsp_rm);
    CHECK(m.boot_state == BootState::failed);
    // Measurements exist only for stages before the failure.
    CHECK(r.measurements.size() == 2);
    CHECK(!m.cc_mode_active);
  }

  SECTION("erot rejects a bad fsp signature even when brom accepts") {
    bundle.erot_present = true;
    bundle.erot_fsp_signature = bundle.sig_fsp;
    (*bundle.erot_fsp_signature)[0] ^= 0x01;
    BootReport r = secure_boot(m, bundle);
    CHECK(!r.ok);
    REQUIRE(r.failed.has_value());
    CHECK(*r.failed == BootStage::fsp);
    CHECK(r.measurements.empty());
  }
}

TEST_CASE("cc mode latches at reset") {
  Machine m = build_machine(MachineConfig{});
  CHECK(!m.cc_mode_active);
  m.set_cc_mode(true);
  CHECK(m.cc_mode_pending);
  CHECK(!m.cc_mode_active);

  REQUIRE(secure_boot(m, make_test_bundle(1)).ok);
  CHECK(m.cc_mode_active);

  // Disable: pending only until the next boot.
  m.set_cc_mode(false);
  CHECK(m.cc_mode_active);
  sec2::soft_reset(m);
  REQUIRE(secure_boot(m, make_test_bundle(1)).ok);
  CHECK(!m.cc_mode_active);

  // Non-CC mode: CPR host access allowed again.
  auto r = m.host_read(m.cpr.base, 16);
  REQUIRE(r.ok());
  CHECK(r.value().kind == AccessResult::Kind::value);
}

TEST_CASE("bar0_read applies the decoupler policy") {
  Machine m = booted_cc_machine();

  SECTION("unaligned offset is rejected") {
    auto r = m.bar0_read(0x102, Actor::host);
    REQUIRE(!r.ok());
    CHECK(r.error() == Err::unaligned);
  }

  SECTION("blocked register reads as zeros in CC mode") {
    // Word 1 is zeros-classed in the default CC manifest.
    auto r = m.bar0_read(4, Actor::host);
    REQUIRE(r.ok());
    CHECK(r.value().kind == AccessResult::Kind::zeros);
  }

  SECTION("fault PUT register stays visible and live") {
    auto r = m.bar0_read(kFaultPutReplayableOffset, Actor::host);
    REQUIRE(r.ok());
    CHECK(r.value().kind == AccessResult::Kind::value);
    uint32_t before = r.value().word;
    m.gsp_faults.replayable_put = 5;
    auto r2 = m.bar0_read(kFaultPutReplayableOffset, Actor::host);
    CHECK(r2.value().word != before);
    CHECK((r2.value().word & 0xFFFFF) == 5);
  }

  SECTION("non-CC mode exposes error words with the 0xbad pattern") {
    Machine plain = build_machine(MachineConfig{});
    REQUIRE(secure_boot(plain, make_test_bundle(1)).ok);
    REQUIRE(!plain.cc_mode_active);
    // Word 0x80000 is error-classed in the default non-CC manifest.
    auto r = plain.bar0_read(0x80000 * 4, Actor::host);
    REQUIRE(r.ok());
    CHECK(r.value().kind == AccessResult::Kind::error);
    CHECK((r.value().word >> 20) == 0xbad);
  }
}

TEST_CASE("host access control per region") {
  Machine m = booted_cc_machine();

  SECTION("staging reads return the actual bytes") {
    Bytes data = to_bytes("staging-bytes");
    m.mem_write(m.shared_staging.base + 64, data);
    auto r = m.host_read(m.shared_staging.base + 64, data.size());
    REQUIRE(r.ok());
    CHECK(r.value().kind == AccessResult::Kind::value);
    CHECK(r.value().bytes == data);
  }

  SECTION("cpr access faults in CC mode") {
    auto r = m.host_read(m.cpr.base, 16);
    REQUIRE(r.ok());
    CHECK(r.value().kind == AccessResult::Kind::fault);
    auto w = m.host_write(m.cpr.base, to_bytes("xx"));
    REQUIRE(w.ok());
    CHECK(w.value() == Machine::WriteOutcome::fault);
  }

  SECTION("cvm private reads are deterministic opaque bytes, writes fault") {
    m.mem_write(m.cvm_private.base, to_bytes("secret-content"));
    auto r1 = m.host_read(m.cvm_private.base, 32);
    auto r2 = m.host_read(m.cvm_private.base, 32);
    REQUIRE(r1.ok());
    CHECK(r1.value().kind == AccessResult::Kind::opaque);
    CHECK(r1.value().bytes == r2.value().bytes);
    CHECK(!contains_subsequence(r1.value().bytes, to_bytes("secret-content")));

    auto w = m.host_write(m.cvm_private.base, to_bytes("evil"));
    REQUIRE(w.ok());
    CHECK(w.value() == Machine::WriteOutcome::fault);

    // A new epoch changes the opaque view.
    m.epoch += 1;
    auto r3 = m.host_read(m.cvm_private.base, 32);
    CHECK(r3.value().bytes != r1.value().bytes);
  }

  SECTION("out of range access is an error") {
    auto r = m.host_read(m.vidmem.end() + kPageSize, 8);
    REQUIRE(!r.ok());
    CHECK(r.error() == Err::out_of_range);
  }
}

TEST_CASE("epoch hygiene: stale sessions fail after reboot") {
  Machine m = booted_cc_machine();
  Rng rng(4);
  Bytes r1 = rng.bytes(32), r2 = rng.bytes(32);
  Session s = Session::establish(m, r1, r2);
  CHECK(s.check_fresh(m).ok());

  sec2::soft_reset(m);
  CHECK(!s.check_fresh(m).ok());
  CHECK(s.check_fresh(m).error() == Err::session_stale);

  m.set_cc_mode(true);
  REQUIRE(secure_boot(m, make_test_bundle(9)).ok);
  CHECK(!s.check_fresh(m).ok());

  auto rpc = rpc::init_rpc_infrastructure(m, s);
  REQUIRE(!rpc.ok());
  CHECK(rpc.error() == Err::session_stale);
}

TEST_CASE("default manifests encode the advertised counts") {
  Machine m = build_machine(MachineConfig{});
  auto cc = m.bar0_cc.counts();
  CHECK(cc.values == 1042);
  CHECK(cc.errors == 7970);
  CHECK(cc.zeros == 4185292);
  auto noncc = m.bar0_noncc.counts();
  CHECK(noncc.values == 333028);
  CHECK(noncc.errors == 3365929);
  CHECK(noncc.zeros == 495347);
}

TEST_CASE("manifest JSON round-trips into the same map") {
  Bar0Manifest manifest = default_cc_manifest();
  Bar0Manifest parsed = Bar0Manifest::from_json(manifest.to_json());
  auto a = Bar0Map::from_manifest(manifest).counts();
  auto b = Bar0Map::from_manifest(parsed).counts();
  CHECK(a.values == b.values);
  CHECK(a.zeros == b.zeros);
  CHECK(a.errors == b.errors);
}

TEST_CASE("shipped manifest files match the builtin generators") {
  MachineConfig from_files;
  from_files.bar0_manifest_cc = std::string(GPUCC_DATA_DIR) + "/bar0_cc.json";
  from_files.bar0_manifest_noncc = std::string(GPUCC_DATA_DIR) + "/bar0_noncc.json";
  Machine m = build_machine(from_files);
  auto cc = m.bar0_cc.counts();
  CHECK(cc.values == 1042);
  CHECK(cc.errors == 7970);
  auto noncc = m.bar0_noncc.counts();
  CHECK(noncc.values == 333028);
  CHECK(noncc.errors == 3365929);
  // Same classification as the builtin map at the role registers.
  Machine builtin = build_machine(MachineConfig{});
  m.cc_mode_active = builtin.cc_mode_active = true;
  for (uint64_t off : {kFaultPutReplayableOffset, kDoorbellOffset}) {
    auto a = m.bar0_read(off, Actor::host);
    auto b = builtin.bar0_read(off, Actor::host);
    REQUIRE((a.ok() && b.ok()));
    CHECK(a.value().word == b.value().word);
  }
}

TEST_CASE("system dump covers cvm private view plus staging") {
  Machine m = booted_cc_machine();
  Bytes dump = m.dump_system_memory();
  CHECK(dump.size() == m.cvm_private.size + m.shared_staging.size);
  // Staging bytes appear verbatim at their offset.
  m.mem_write(m.shared_staging.base + 123, to_bytes("visible"));
  dump = m.dump_system_memory();
  CHECK(contains_subsequence(
      ByteView(dump.data() + m.cvm_private.size, m.shared_staging.size), to_bytes("visible")));
}
