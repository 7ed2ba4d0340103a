// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "gpucc/sec2.hpp"

using namespace gpucc;

namespace {

struct Rig {
  Machine machine = build_machine(MachineConfig{});
  std::optional<Session> session;
  Rng rng{55};

  Rig() {
    machine.set_cc_mode(true);
    REQUIRE(secure_boot(machine, make_test_bundle(6)).ok);
    Bytes r1 = rng.bytes(32), r2 = rng.bytes(32);
    session.emplace(Session::establish(machine, r1, r2));
  }
  Machine& m() { return machine; }
  Session& s() { return *session; }
};

}  // namespace

TEST_CASE("scrubber channel binds the dedicated scrubber keys") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  CHECK(ch.value().hmac_key.name() == "cpu_sec2_hmac_scrubber");
  CHECK(ch.value().data_key.name() == "cpu_sec2_data_scrubber");
  CHECK(!ch.value().in_cpr);

  // Control state is host-readable plaintext in staging.
  auto gpput = rig.m().host_read(ch.value().cb_addr, 8);
  REQUIRE(gpput.ok());
  CHECK(gpput.value().kind == AccessResult::Kind::value);
}

TEST_CASE("scrubber channel requires a booted SEC2") {
  Machine cold = build_machine(MachineConfig{});
  Rng rng(1);
  // No boot: no session either, so drive the channel factory directly.
  Machine booted = build_machine(MachineConfig{});
  booted.set_cc_mode(true);
  REQUIRE(secure_boot(booted, make_test_bundle(1)).ok);
  Bytes r1 = rng.bytes(32), r2 = rng.bytes(32);
  Session s = Session::establish(booted, r1, r2);
  sec2::soft_reset(booted);  // back to cold
  auto ch = sec2::create_swl_scrubber_channel(booted, s);
  REQUIRE(!ch.ok());
  CHECK(ch.error() == Err::not_booted);
  (void)cold;
}

TEST_CASE("scrub zeroes exactly the requested pages") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  Channel scrubber = std::move(ch).value();

  // Dirty pages 3,4,5 and a neighbour that must stay untouched.
  for (uint64_t p : {3, 4, 5, 6}) rig.m().mem_fill(rig.m().cpr.base + p * kPageSize, kPageSize, 0xFF);

  auto sem = sec2::submit_scrub(rig.m(), rig.s(), scrubber, {{3, 4, 5}});
  REQUIRE(sem.ok());
  CHECK(sem.value() == 1);

  for (uint64_t p : {3, 4, 5}) {
    Bytes content = rig.m().mem_read(rig.m().cpr.base + p * kPageSize, kPageSize);
    CHECK(size_t(std::count(content.begin(), content.end(), 0)) == kPageSize);
  }
  Bytes untouched = rig.m().mem_read(rig.m().cpr.base + 6 * kPageSize, kPageSize);
  CHECK(size_t(std::count(untouched.begin(), untouched.end(), 0xFF)) == kPageSize);

  // Completion semaphore is plaintext in staging.
  auto sem_read = rig.m().host_read(scrubber.semaphore_addr, 8);
  REQUIRE(sem_read.ok());
  CHECK(get_le64(sem_read.value().bytes.data()) == 1);
}

TEST_CASE("tampered scrub method is rejected and pages stay intact") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  Channel scrubber = std::move(ch).value();
  rig.m().mem_fill(rig.m().cpr.base + 9 * kPageSize, kPageSize, 0xEE);

  auto tamper = [&](Machine& mm) {
    // Flip a bit of the page-index argument inside the staged pushbuffer.
    Bytes b = mm.mem_read(scrubber.pushbuf_addr + 12, 1);
    b[0] ^= 0x04;
    REQUIRE(mm.host_write(scrubber.pushbuf_addr + 12, b).ok());
  };
  auto r = sec2::submit_scrub(rig.m(), rig.s(), scrubber, {{9}}, false, tamper);
  REQUIRE(!r.ok());
  CHECK(r.error() == Err::auth);
  Bytes content = rig.m().mem_read(rig.m().cpr.base + 9 * kPageSize, kPageSize);
  CHECK(size_t(std::count(content.begin(), content.end(), 0xEE)) == kPageSize);
}

TEST_CASE("flipped plaintext semaphore is visible progress corruption, DoS class") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  Channel scrubber = std::move(ch).value();
  REQUIRE(sec2::submit_scrub(rig.m(), rig.s(), scrubber, {{2}}).ok());

  uint8_t bogus[8];
  put_le64(bogus, 999);
  REQUIRE(rig.m().host_write(scrubber.semaphore_addr, ByteView(bogus, 8)).ok());
  auto v = poll_semaphore(rig.m(), rig.s(), scrubber);
  REQUIRE(v.ok());
  CHECK(v.value() == 999);  // driver observes the wrong progress value
  CHECK(v.value() != scrubber.sem_expected);
}

TEST_CASE("sec2 executes decrypt_to_cpr but refuses to encrypt") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  Channel scrubber = std::move(ch).value();

  SECTION("decrypt_to_cpr lands plaintext in the CPR") {
    Bytes payload = rig.rng.bytes(128);
    auto blob = seal(scrubber.data_states->tx, rig.s().keys(), payload, {});
    REQUIRE(blob.ok());
    uint64_t src = rig.m().staging_alloc("sealed_input", 512);
    rig.m().mem_write(src, blob.value().serialize());
    uint64_t dst = rig.m().cpr.base + 20 * kPageSize;

    std::vector<sec2::Method> methods{{sec2::Opcode::decrypt_to_cpr, {src, dst, 128}}};
    REQUIRE(sec2::build_signed_push(rig.m(), rig.s(), scrubber, methods, false).ok());
    auto results = sec2::sec2_process(rig.m(), rig.s(), scrubber);
    REQUIRE(results.ok());
    REQUIRE(results.value().size() == 1);
    CHECK(results.value()[0].result == "ok");
    CHECK(rig.m().mem_read(dst, 128) == payload);
  }

  SECTION("encrypt_from_cpr is a capability violation") {
    std::vector<sec2::Method> methods{
        {sec2::Opcode::encrypt_from_cpr, {rig.m().cpr.base, rig.m().shared_staging.base, 64}}};
    REQUIRE(sec2::build_signed_push(rig.m(), rig.s(), scrubber, methods, false).ok());
    auto results = sec2::sec2_process(rig.m(), rig.s(), scrubber);
    REQUIRE(results.ok());
    REQUIRE(results.value().size() == 1);
    CHECK(results.value()[0].result == "capability_violation");
  }

  SECTION("empty method list executes nothing") {
    REQUIRE(sec2::build_signed_push(rig.m(), rig.s(), scrubber, {}, false).ok());
    auto results = sec2::sec2_process(rig.m(), rig.s(), scrubber);
    REQUIRE(results.ok());
    CHECK(results.value().empty());
  }
}

TEST_CASE("sec2 never seals: no sec2-keyed entry appears in the iv log") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  Channel scrubber = std::move(ch).value();
  REQUIRE(sec2::submit_scrub(rig.m(), rig.s(), scrubber, {{11, 12}}).ok());

  // The scrubber data key sealed nothing: only driver-side seals may exist,
  // and in the plaintext-push mode not even those.
  for (const auto& e : rig.s().iv_log().entries) {
    KeyId id{e.key_index};
    CHECK(id.name().find("sec2") == std::string::npos);
  }
}

TEST_CASE("encrypt_scrubber_pushes seals the pushbuffer with the data key") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  Channel scrubber = std::move(ch).value();
  rig.m().mem_fill(rig.m().cpr.base + 13 * kPageSize, kPageSize, 0xAB);

  auto sem = sec2::submit_scrub(rig.m(), rig.s(), scrubber, {{13}}, /*seal_push=*/true);
  REQUIRE(sem.ok());
  Bytes content = rig.m().mem_read(rig.m().cpr.base + 13 * kPageSize, kPageSize);
  CHECK(size_t(std::count(content.begin(), content.end(), 0)) == kPageSize);

  // The staged pushbuffer is not a legible method stream in this mode.
  Bytes staged = rig.m().mem_read(scrubber.pushbuf_addr, 4);
  CHECK(get_le32(staged.data()) != 2);
}

TEST_CASE("1000 single-bit tampered pushes never execute") {
  Rig rig;
  auto ch = sec2::create_swl_scrubber_channel(rig.m(), rig.s());
  REQUIRE(ch.ok());
  Channel scrubber = std::move(ch).value();

  int executed = 0, rejected_auth = 0, suppressed = 0;
  constexpr int kTrials = 1000;
  for (int t = 0; t < kTrials; ++t) {
    uint64_t page = 16 + t % 4;
    rig.m().mem_fill(rig.m().cpr.base + page * kPageSize, kPageSize, 0xEE);
    uint64_t sem_before = scrubber.sem_expected;
    auto tamper = [&](Machine& mm) {
      bool tags = rig.rng.chance(0.3);
      uint64_t put = read_gpput(mm, scrubber);
      GpFifoEntry entry = read_gpfifo_entry(mm, scrubber, put - 1);
      uint64_t base = tags ? scrubber.scrub_tag_addr : entry.pushbuffer_addr;
      uint64_t span = tags ? 32 : entry.length;
      uint64_t bit = rig.rng.below(span * 8);
      Bytes b = mm.mem_read(base + bit / 8, 1);
      b[0] ^= uint8_t(1u << (bit % 8));
      REQUIRE(mm.host_write(base + bit / 8, b).ok());
    };
    auto r = sec2::submit_scrub(rig.m(), rig.s(), scrubber, {{page}}, false, tamper);
    Bytes content = rig.m().mem_read(rig.m().cpr.base + page * kPageSize, kPageSize);
    bool untouched = size_t(std::count(content.begin(), content.end(), 0xEE)) == kPageSize;
    if (!untouched) {
      ++executed;  // a tampered push actually ran: must never happen
    } else if (!r.ok() && r.error() == Err::auth) {
      ++rejected_auth;
    } else {
      // Count-prefix truncation suppresses the whole push: DoS, not forgery.
      ++suppressed;
      scrubber.sem_expected = sem_before;
    }
  }
  CHECK(executed == 0);
  CHECK(rejected_auth + suppressed == kTrials);
  CHECK(rejected_auth > 950);  // suppression needs one exact bit; it stays rare
}

TEST_CASE("soft reset wipes memory before visibility and kills sessions") {
  Rig rig;
  rig.m().mem_fill(rig.m().cpr.base, kPageSize, 0x77);
  rig.m().mem_fill(rig.m().vidmem.base, kPageSize, 0x88);
  uint64_t old_epoch = rig.m().epoch;

  sec2::soft_reset(rig.m());

  // Everything zero and host-visible now that we're out of CC mode state.
  auto vid = rig.m().host_read(rig.m().vidmem.base, kPageSize);
  REQUIRE(vid.ok());
  CHECK(size_t(std::count(vid.value().bytes.begin(), vid.value().bytes.end(), 0)) == kPageSize);
  CHECK(size_t(std::count(rig.m().cpr.content.begin(), rig.m().cpr.content.end(), 0)) ==
        rig.m().cpr.content.size());

  CHECK(rig.m().epoch == old_epoch + 1);
  CHECK(!rig.s().check_fresh(rig.m()).ok());
  CHECK(rig.m().boot_state == BootState::cold);

  // Trace order: wipes strictly precede the visibility event.
  std::optional<uint64_t> wipe_t, visible_t;
  for (const auto& ev : rig.m().trace.events()) {
    if (ev.name == "wipe") wipe_t = ev.t;
    if (ev.name == "reset" && ev.meta.value("phase", "") == "visible" && !visible_t) visible_t = ev.t;
  }
  REQUIRE(wipe_t.has_value());
  REQUIRE(visible_t.has_value());
  CHECK(*wipe_t < *visible_t);

  // Idempotent on a cold machine.
  sec2::soft_reset(rig.m());
  CHECK(rig.m().boot_state == BootState::cold);
}
