// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "gpucc/fault.hpp"

using namespace gpucc;

namespace {

struct Rig {
  Machine machine = build_machine(MachineConfig{});
  std::optional<Session> session;
  std::optional<rpc::RpcChannel> channel;
  std::optional<fault::FaultChannels> faults;
  Rng rng{31};

  Rig() {
    machine.set_cc_mode(true);
    REQUIRE(secure_boot(machine, make_test_bundle(8)).ok);
    Bytes r1 = rng.bytes(32), r2 = rng.bytes(32);
    session.emplace(Session::establish(machine, r1, r2));
    auto ch = rpc::init_rpc_infrastructure(machine, *session);
    REQUIRE(ch.ok());
    channel.emplace(std::move(ch).value());
    auto fc = fault::register_shadow_buffers(machine, *session, *channel);
    REQUIRE(fc.ok());
    faults.emplace(std::move(fc).value());
  }

  Machine& m() { return machine; }
  Session& s() { return *session; }
  rpc::RpcChannel& ch() { return *channel; }
  fault::FaultChannels& fc() { return *faults; }

  void drain_rx() {
    for (;;) {
      auto st = rpc::recv_status(machine, *session, *channel);
      if (!st.ok()) break;
    }
  }
};

}  // namespace

TEST_CASE("registration allocates two buffers bound to distinct kind keys") {
  Rig rig;
  CHECK(rig.fc().replayable.ring_addr != rig.fc().non_replayable.ring_addr);
  CHECK(rig.m().gsp_faults.registered);

  // Registration went through the RPC as exactly one command.
  int reg_cmds = 0;
  for (const auto& ev : rig.m().trace.events())
    if (ev.name == "rpc_send") ++reg_cmds;
  CHECK(reg_cmds == 1);

  // Buffers are host-readable staging memory (ciphertext once used).
  auto rd = rig.m().host_read(rig.fc().replayable.ring_addr, 64);
  REQUIRE(rd.ok());
  CHECK(rd.value().kind == AccessResult::Kind::value);

  // The two standing fault channels use the two distinct derived keys.
  CHECK(rig.s().fault_replayable.tx.key_id.name() == "gsp_cpu_replayable_fault");
  CHECK(rig.s().fault_non_replayable.tx.key_id.name() == "gsp_cpu_non_replayable_fault");
}

TEST_CASE("raise then handle round-trips the packet fields") {
  Rig rig;
  fault::FaultPacket p{fault::Kind::replayable, 0xdeadbeef000, 0x42, fault::AccessType::atomic, 1};
  REQUIRE(fault::raise_fault(rig.m(), rig.s(), rig.ch(), rig.fc(), p).ok());
  CHECK(rig.m().gsp_faults.replayable_put == 1);

  // The RPC return path carried MMU_FAULT_QUEUED.
  auto evt = rpc::recv_status(rig.m(), rig.s(), rig.ch());
  REQUIRE(evt.ok());
  CHECK(evt.value().function == rpc::kEvtMmuFaultQueued);

  auto handled = fault::handle_faults(rig.m(), rig.s(), rig.fc());
  REQUIRE(handled.ok());
  REQUIRE(handled.value().size() == 1);
  const auto& got = handled.value()[0];
  CHECK(got.kind == fault::Kind::replayable);
  CHECK(got.fault_addr == 0xdeadbeef000);
  CHECK(got.engine_id == 0x42);
  CHECK(got.access_type == fault::AccessType::atomic);
}

TEST_CASE("decoded packets preserve raise order per buffer") {
  Rig rig;
  for (uint64_t i = 0; i < 5; ++i)
    REQUIRE(fault::raise_fault(rig.m(), rig.s(), rig.ch(), rig.fc(),
                               {fault::Kind::replayable, 0x1000 * i, uint16_t(i),
                                fault::AccessType::read, 1})
                .ok());
  rig.drain_rx();
  auto handled = fault::handle_faults(rig.m(), rig.s(), rig.fc());
  REQUIRE(handled.ok());
  REQUIRE(handled.value().size() == 5);
  for (uint64_t i = 0; i < 5; ++i) CHECK(handled.value()[i].fault_addr == 0x1000 * i);
}

TEST_CASE("flipped valid byte is an AAD mismatch") {
  Rig rig;
  REQUIRE(fault::raise_fault(rig.m(), rig.s(), rig.ch(), rig.fc(),
                             {fault::Kind::non_replayable, 0x7000, 3, fault::AccessType::write, 1})
              .ok());
  rig.drain_rx();
  uint64_t slot = rig.fc().non_replayable.ring_addr;
  Bytes b = rig.m().mem_read(slot, 1);
  b[0] ^= 0x01;
  REQUIRE(rig.m().host_write(slot, b).ok());
  auto handled = fault::handle_faults(rig.m(), rig.s(), rig.fc());
  REQUIRE(!handled.ok());
  CHECK(handled.error() == Err::auth);
}

TEST_CASE("kind keys never open each other's packets") {
  Rig rig;
  constexpr int kTrials = 1000;
  int rejected = 0;
  KeyTable keys = rig.s().keys();
  for (int t = 0; t < kTrials; ++t) {
    // Seal a replayable-keyed packet, then try the non-replayable receive state.
    ChannelCipherState tx = rig.s().fault_replayable.tx;
    tx.salt = rig.rng.next_u32();
    tx.iv_log = nullptr;
    Bytes record = fault::serialize_packet(
        {fault::Kind::replayable, rig.rng.next_u64(), uint16_t(t), fault::AccessType::read, 1});
    Bytes aad{1};
    auto blob = seal(tx, keys, record, aad);
    REQUIRE(blob.ok());
    ChannelCipherState rx = rig.s().fault_non_replayable.rx;
    rx.salt = tx.salt;
    auto r = open(rx, keys, blob.value(), aad);
    if (!r.ok() && r.error() == Err::auth) ++rejected;
  }
  CHECK(rejected == kTrials);
}

TEST_CASE("ring full is an explicit error, not an overwrite") {
  Rig rig;
  uint32_t cap = rig.m().config.fault_ring_capacity;
  for (uint32_t i = 0; i + 1 < cap; ++i)
    REQUIRE(fault::raise_fault(rig.m(), rig.s(), rig.ch(), rig.fc(),
                               {fault::Kind::replayable, i, 1, fault::AccessType::read, 1})
                .ok());
  auto overflow = fault::raise_fault(rig.m(), rig.s(), rig.ch(), rig.fc(),
                                     {fault::Kind::replayable, 0xFF, 1, fault::AccessType::read, 1});
  REQUIRE(!overflow.ok());
  CHECK(overflow.error() == Err::ring_full);

  rig.drain_rx();
  auto handled = fault::handle_faults(rig.m(), rig.s(), rig.fc());
  REQUIRE(handled.ok());
  CHECK(handled.value().size() == cap - 1);
  // Entries kept their order; nothing was clobbered by the dropped fault.
  for (uint32_t i = 0; i + 1 < cap; ++i) CHECK(handled.value()[i].fault_addr == i);
}

TEST_CASE("the PUT register is the only host-visible fault signal") {
  Rig rig;
  auto before = rig.m().bar0_read(kFaultPutReplayableOffset, Actor::host);
  REQUIRE(before.ok());

  Bytes staged_before = rig.m().mem_read(rig.fc().replayable.ring_addr, fault::kSlotSize);
  REQUIRE(fault::raise_fault(rig.m(), rig.s(), rig.ch(), rig.fc(),
                             {fault::Kind::replayable, 0x9000, 2, fault::AccessType::read, 1})
              .ok());

  auto after = rig.m().bar0_read(kFaultPutReplayableOffset, Actor::host);
  REQUIRE(after.ok());
  CHECK(before.value().word != after.value().word);
  CHECK((after.value().word & 0xFFFFF) == 1);

  // The slot changed, but only to ciphertext: no packet field is legible.
  Bytes staged_after = rig.m().mem_read(rig.fc().replayable.ring_addr, fault::kSlotSize);
  CHECK(staged_before != staged_after);
  uint8_t addr_le[8];
  put_le64(addr_le, 0x9000);
  CHECK(!contains_subsequence(staged_after, ByteView(addr_le, 8)));

  // The non-replayable register did not move.
  auto other = rig.m().bar0_read(kFaultPutNonReplayableOffset, Actor::host);
  CHECK((other.value().word & 0xFFFFF) == 0);
}

TEST_CASE("raising without registration fails") {
  Machine m = build_machine(MachineConfig{});
  m.set_cc_mode(true);
  REQUIRE(secure_boot(m, make_test_bundle(9)).ok);
  Rng rng(9);
  Bytes r1 = rng.bytes(32), r2 = rng.bytes(32);
  Session s = Session::establish(m, r1, r2);
  auto ch = rpc::init_rpc_infrastructure(m, s);
  REQUIRE(ch.ok());
  auto& rc = const_cast<rpc::RpcChannel&>(ch.value());
  fault::FaultChannels fc;
  fc.replayable = {fault::Kind::replayable, m.shared_staging.base, 4, 0};
  fc.non_replayable = {fault::Kind::non_replayable, m.shared_staging.base + 4096, 4, 0};
  auto r = fault::raise_fault(m, s, rc, fc, {fault::Kind::replayable, 1, 1, fault::AccessType::read, 1});
  REQUIRE(!r.ok());
  CHECK(r.error() == Err::not_booted);
}
