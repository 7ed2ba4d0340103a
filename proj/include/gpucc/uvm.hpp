// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two-phase secure work submission. Phase I: the singleton SEC2 channel
// bootstraps 16 WLC + 16 LCIC channels whose control state lives in the CPR,
// and uploads the static schedule halves (the per-channel decrypt_push and
// the LCIC advance schedule). Phase II: a WLC cycle decrypts a freshly sealed
// run_push, which decrypts and dispatches the sealed UVM CE push on another
// copy engine, and the LCIC advances the WLC's GPPUT by two for the next
// cycle. Progress flows back only through sealed tracking semaphores.

#include "gpucc/sec2.hpp"

namespace gpucc::uvm {

constexpr size_t kWlcCount = 16;
constexpr uint64_t kRunSlotSize = 256;
constexpr uint64_t kUvmSlotSize = 8 * 1024;

// setup_channel_state sub-operations carried in args[0].
enum SetupOp : uint64_t {
  kSetupInitChannel = 1,   // [1, channel_id, cb_addr, gpfifo_capacity]
  kSetupUpload = 2,        // [2, dst_addr, byte_len, packed words...]
  kSetupDecryptRun = 3,    // [3, run_seal_staging, run_plain_cpr]  (decrypt_push body)
  kSetupAdvanceWlc = 4,    // [4, wlc_cb_addr, steps]               (LCIC schedule body)
  kSetupDispatchUvm = 5,   // [5, uvm_seal_staging, uvm_wire_len, uvm_plain_cpr, ce_channel_id]
};

struct WlcSlots {
  uint64_t run_seal_staging = 0;   // fixed staging slot, resealed per launch
  uint64_t uvm_seal_staging = 0;   // fixed staging slot for the sealed UVM CE push
  uint64_t run_plain_cpr = 0;      // decrypt_push target
  uint64_t decrypt_push_cpr = 0;   // static decrypt_push body
  uint64_t decrypt_push_len = 0;
  uint64_t uvm_plain_cpr = 0;      // run_push target for the UVM CE pushbuffer
  uint64_t lcic_sched_cpr = 0;
  uint64_t lcic_sched_len = 0;
  StatePair run_states;            // lce{x}_h2d_kernel stream for the run slot
};

struct UvmContext {
  Channel sec2_channel;
  std::array<Channel, kWlcCount> wlc{};
  std::array<Channel, kWlcCount> lcic{};
  std::array<Channel, kLceCount> ce{};
  std::array<WlcSlots, kWlcCount> slots{};
  bool operational = false;
};

struct LaunchToken {
  uint64_t wlc_sem = 0;
  uint64_t ce_sem = 0;
};

inline Outcome<Channel> create_sec2_channel(Machine& m, Session& s) {
  if (!booted(m)) return Err::not_booted;
  if (m.uvm_sec2_channel_exists) return Err::singleton_violation;
  auto ch = sec2::make_sec2_engine_channel(m, s, ChannelRole::sec2, "kernel", 0x52);
  if (!ch.ok()) return ch.error();
  m.uvm_sec2_channel_exists = true;
  return ch;
}

using TamperHook = std::function<void(Machine&, uint32_t push_index)>;
using BlockedAccessHook = std::function<void(Machine&, uint64_t addr)>;

namespace detail {

inline Bytes pack_upload_args(uint64_t dst, ByteView body, std::vector<uint64_t>& args) {
  args.push_back(kSetupUpload);
  args.push_back(dst);
  args.push_back(body.size());
  for (size_t off = 0; off < body.size(); off += 8) {
    uint8_t word[8] = {};
    std::copy_n(body.begin() + off, std::min<size_t>(8, body.size() - off), word);
    args.push_back(get_le64(word));
  }
  return {};
}

inline Bytes unpack_upload(const sec2::Method& method) {
  uint64_t len = method.args[2];
  Bytes body(((len + 7) / 8) * 8);
  for (size_t i = 3; i < method.args.size(); ++i) put_le64(body.data() + (i - 3) * 8, method.args[i]);
  body.resize(len);
  return body;
}

// After an aborted launch both endpoints resynchronize their counters; the
// staged blobs that were never opened are dead.
inline void resync(StatePair& pair) { pair.rx.recv_last_accepted = pair.tx.send_counter - 1; }

}  // namespace detail

inline Outcome<Unit> bootstrap_wlc_lcic(Machine& m, Session& s, UvmContext& ctx,
                                        const TamperHook& tamper = {}) {
  if (!ctx.sec2_channel.operational) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;

  // Engine-side handler for setup_channel_state methods.
  auto setup_hook = [&](Machine& mm, const sec2::Method& method) -> Status {
    if (method.args.empty()) return Err::out_of_range;
    switch (method.args[0]) {
      case kSetupInitChannel: {
        if (method.args.size() < 4) return Err::out_of_range;
        uint64_t cb = method.args[2];
        uint32_t cap = uint32_t(method.args[3]);
        if (!mm.cpr.contains(cb, channel_cb_size(cap))) return Err::out_of_range;
        mm.mem_fill(cb, channel_cb_size(cap), 0);
        uint32_t id = uint32_t(method.args[1]);
        if (id >= 0x100 && id < 0x100 + kWlcCount) {
          // WLC: prefill the static alternating schedule entries.
          uint32_t i = id - 0x100;
          Channel tmp;
          tmp.cb_addr = cb;
          tmp.gpfifo_capacity = cap;
          for (uint32_t k = 0; k < cap; ++k) {
            bool decrypt = (k % 2) == 0;
            write_gpfifo_entry(mm, tmp, k,
                               {decrypt ? ctx.slots[i].decrypt_push_cpr : ctx.slots[i].run_plain_cpr,
                                decrypt ? ctx.slots[i].decrypt_push_len : kRunSlotSize});
          }
        }
        return ok_status();
      }
      case kSetupUpload: {
        if (method.args.size() < 3) return Err::out_of_range;
        Bytes body = detail::unpack_upload(method);
        if (!mm.cpr.contains(method.args[1], body.size())) return Err::out_of_range;
        mm.mem_write(method.args[1], body);
        return ok_status();
      }
      default:
        return Err::out_of_range;
    }
  };

  for (uint32_t i = 0; i < kWlcCount; ++i) {
    int x = int(i % kLceCount);
    const std::string h2d = "lce" + std::to_string(x) + "_h2d_kernel";
    const std::string d2h = "lce" + std::to_string(x) + "_d2h_kernel";

    Channel& w = ctx.wlc[i];
    w.id = 0x100 + i;
    w.role = ChannelRole::wlc;
    w.engine = EngineRef::lce(x);
    w.in_cpr = true;
    w.gpfifo_capacity = m.config.gpfifo_capacity;
    w.cb_addr = m.cpr_alloc("wlc_cb", channel_cb_size(w.gpfifo_capacity), 64);
    w.semaphore_addr = m.staging_alloc("wlc_semaphore", kSealedSemSlotSize, 64);
    w.h2d = s.make_pair(KeyId::from_name(h2d));
    w.d2h = s.make_pair(KeyId::from_name(d2h));

    Channel& l = ctx.lcic[i];
    l.id = 0x200 + i;
    l.role = ChannelRole::lcic;
    l.engine = EngineRef::lce(x);
    l.in_cpr = true;
    l.gpfifo_capacity = m.config.gpfifo_capacity;
    l.cb_addr = m.cpr_alloc("lcic_cb", channel_cb_size(l.gpfifo_capacity), 64);
    l.semaphore_addr = m.staging_alloc("lcic_semaphore", kSealedSemSlotSize, 64);
    l.d2h = s.make_pair(KeyId::from_name(d2h));

    WlcSlots& sl = ctx.slots[i];
    sl.run_seal_staging = m.staging_alloc("wlc_run_sealed", kRunSlotSize, 64);
    sl.uvm_seal_staging = m.staging_alloc("uvm_push_sealed", kUvmSlotSize, 64);
    sl.run_plain_cpr = m.cpr_alloc("wlc_run_plain", kRunSlotSize, 64);
    sl.uvm_plain_cpr = m.cpr_alloc("uvm_push_plain", kUvmSlotSize, 64);
    sl.run_states = s.make_pair(KeyId::from_name(h2d));

    Bytes decrypt_body = sec2::serialize_methods(
        {{sec2::Opcode::setup_channel_state, {kSetupDecryptRun, sl.run_seal_staging, sl.run_plain_cpr}}});
    sl.decrypt_push_cpr = m.cpr_alloc("wlc_decrypt_push", decrypt_body.size(), 64);
    sl.decrypt_push_len = decrypt_body.size();

    Bytes lcic_body = sec2::serialize_methods(
        {{sec2::Opcode::setup_channel_state, {kSetupAdvanceWlc, w.cb_addr, 2}}});
    sl.lcic_sched_cpr = m.cpr_alloc("lcic_schedule", lcic_body.size(), 64);
    sl.lcic_sched_len = lcic_body.size();

    std::vector<sec2::Method> methods;
    methods.push_back({sec2::Opcode::setup_channel_state,
                       {kSetupInitChannel, w.id, w.cb_addr, w.gpfifo_capacity}});
    methods.push_back({sec2::Opcode::setup_channel_state,
                       {kSetupInitChannel, l.id, l.cb_addr, l.gpfifo_capacity}});
    {
      std::vector<uint64_t> args;
      detail::pack_upload_args(sl.decrypt_push_cpr, decrypt_body, args);
      methods.push_back({sec2::Opcode::setup_channel_state, std::move(args)});
    }
    {
      std::vector<uint64_t> args;
      detail::pack_upload_args(sl.lcic_sched_cpr, lcic_body, args);
      methods.push_back({sec2::Opcode::setup_channel_state, std::move(args)});
    }

    auto push = sec2::build_signed_push(m, s, ctx.sec2_channel, methods, false);
    if (!push.ok()) return push.error();
    if (tamper) tamper(m, i);
    auto exec = sec2::sec2_process(m, s, ctx.sec2_channel, setup_hook);
    if (!exec.ok()) {
      // Bootstrap aborts: nothing becomes operational.
      for (auto& c : ctx.wlc) c.operational = false;
      for (auto& c : ctx.lcic) c.operational = false;
      ctx.operational = false;
      m.trace.emit("cvm_driver", "uvm_bootstrap", {{"result", "aborted"}, {"push", i}});
      return exec.error();
    }
    for (const auto& r : exec.value())
      if (r.result != "ok") {
        ctx.operational = false;
        m.trace.emit("cvm_driver", "uvm_bootstrap", {{"result", "failed"}, {"push", i}});
        return Err::rpc_failure;
      }
    w.operational = true;
    l.operational = true;
  }

  for (int y = 0; y < kLceCount; ++y) {
    Channel& c = ctx.ce[y];
    c.id = 0x300 + y;
    c.role = ChannelRole::uvm_ce;
    c.engine = EngineRef::lce(y);
    c.in_cpr = true;
    c.gpfifo_capacity = m.config.gpfifo_capacity;
    c.cb_addr = m.cpr_alloc("uvm_ce_cb", channel_cb_size(c.gpfifo_capacity), 64);
    c.semaphore_addr = m.staging_alloc("uvm_ce_semaphore", kSealedSemSlotSize, 64);
    c.h2d = s.make_pair(KeyId::from_name("lce" + std::to_string(y) + "_h2d_kernel"));
    c.d2h = s.make_pair(KeyId::from_name("lce" + std::to_string(y) + "_d2h_kernel"));
    m.mem_fill(c.cb_addr, channel_cb_size(c.gpfifo_capacity), 0);
    c.operational = true;
  }

  ctx.operational = true;
  m.trace.emit("cvm_driver", "uvm_bootstrap",
               {{"result", "ok"}, {"wlc", kWlcCount}, {"lcic", kWlcCount}});
  return Unit{};
}

struct LaunchHooks {
  std::function<void(Machine&)> after_stage;  // host window once both blobs are staged
};

inline Outcome<LaunchToken> launch_uvm_push(Machine& m, Session& s, UvmContext& ctx,
                                            uint32_t wlc_index,
                                            const std::vector<sec2::Method>& uvm_methods,
                                            const BlockedAccessHook& on_blocked = {},
                                            const LaunchHooks& hooks = {}) {
  if (!ctx.operational || wlc_index >= kWlcCount) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  Channel& wlc = ctx.wlc[wlc_index];
  Channel& lcic = ctx.lcic[wlc_index];
  WlcSlots& sl = ctx.slots[wlc_index];
  Channel& ce = ctx.ce[(wlc.engine.lce_index + 1) % kLceCount];

  // Driver side: seal the UVM CE pushbuffer and the run_push that dispatches
  // it. The run slot and the UVM slot carry independent IV streams under the
  // same lce{x}_h2d_kernel key, since the engine opens run first.
  Bytes uvm_plain = sec2::serialize_methods(uvm_methods);
  uint64_t uvm_wire_len = 36 + uvm_plain.size();
  if (uvm_wire_len > kUvmSlotSize) throw std::invalid_argument("uvm push too large");

  Bytes run_plain = sec2::serialize_methods({{sec2::Opcode::setup_channel_state,
                                              {kSetupDispatchUvm, sl.uvm_seal_staging, uvm_wire_len,
                                               sl.uvm_plain_cpr, ce.id}}});
  if (36 + run_plain.size() > kRunSlotSize) throw std::invalid_argument("run push too large");

  auto uvm_blob = seal(wlc.h2d->tx, s.keys(), uvm_plain, {});
  if (!uvm_blob.ok()) return uvm_blob.error();
  m.mem_write(sl.uvm_seal_staging, uvm_blob.value().serialize());
  m.trace.emit("cvm_driver", "uvm_push_stage",
               {{"wlc", wlc.id}, {"bytes", uvm_plain.size()}, {"sealed", true}},
               Visibility::host_visible);

  auto run_blob = seal(sl.run_states.tx, s.keys(), run_plain, {});
  if (!run_blob.ok()) return run_blob.error();
  m.mem_write(sl.run_seal_staging, run_blob.value().serialize());
  m.trace.emit("cvm_driver", "run_push_stage", {{"wlc", wlc.id}, {"sealed", true}},
               Visibility::host_visible);

  if (hooks.after_stage) hooks.after_stage(m);

  uint64_t gpput_before = read_gpput(m, wlc);
  auto abort_launch = [&](Err e, const char* phase) -> Outcome<LaunchToken> {
    detail::resync(sl.run_states);
    detail::resync(*wlc.h2d);
    m.trace.emit("gpu_engine", "launch_abort",
                 {{"wlc", wlc.id}, {"phase", phase}, {"error", to_string(e)}});
    return e;
  };

  // decrypt_push: static, fetched from CPR every cycle.
  if ((gpput_before % 2) != 0) return Err::channel_busy;
  GpFifoEntry dentry = read_gpfifo_entry(m, wlc, gpput_before);
  Bytes decrypt_body = m.mem_read(dentry.pushbuffer_addr, dentry.length);
  auto dmethods = sec2::parse_methods(decrypt_body);
  if (!dmethods.ok() || dmethods.value().size() != 1 ||
      dmethods.value()[0].args.size() < 3 || dmethods.value()[0].args[0] != kSetupDecryptRun)
    return abort_launch(Err::auth, "decrypt_push");
  {
    const auto& a = dmethods.value()[0].args;
    Bytes wire = m.mem_read(a[1], kRunSlotSize);
    auto blob = SealedBlob::deserialize(wire);
    if (!blob.ok()) return abort_launch(Err::auth, "wlc_decrypt");
    auto plain = open(sl.run_states.rx, s.keys(), blob.value(), blob.value().aad);
    m.trace.emit("gpu_engine", "wlc_decrypt",
                 {{"wlc", wlc.id}, {"result", plain.ok() ? "ok" : to_string(plain.error())}});
    if (!plain.ok()) return abort_launch(plain.error(), "wlc_decrypt");
    m.mem_write(a[2], plain.value());
  }

  // run_push: dispatches the UVM CE push onto the attached engine.
  Bytes run_body = m.mem_read(sl.run_plain_cpr, kRunSlotSize);
  auto rmethods = sec2::parse_methods(run_body);
  if (!rmethods.ok() || rmethods.value().empty() || rmethods.value()[0].args.size() < 5 ||
      rmethods.value()[0].args[0] != kSetupDispatchUvm)
    return abort_launch(Err::auth, "run_push");
  {
    const auto& a = rmethods.value()[0].args;
    Bytes wire = m.mem_read(a[1], a[2]);
    auto blob = SealedBlob::deserialize(wire);
    if (!blob.ok()) return abort_launch(Err::auth, "wlc_run");
    auto plain = open(wlc.h2d->rx, s.keys(), blob.value(), blob.value().aad);
    m.trace.emit("gpu_engine", "wlc_run",
                 {{"wlc", wlc.id}, {"result", plain.ok() ? "ok" : to_string(plain.error())}});
    if (!plain.ok()) return abort_launch(plain.error(), "wlc_run");
    m.mem_write(a[3], plain.value());
    uint64_t ce_put = read_gpput(m, ce);
    write_gpfifo_entry(m, ce, ce_put, {a[3], plain.value().size()});
    write_gpput(m, ce, ce_put + 1);
  }

  // CE executes the UVM push from the CPR; non-CPR accesses are blocked.
  {
    uint64_t ce_index = read_gpput(m, ce) - 1;
    GpFifoEntry entry = read_gpfifo_entry(m, ce, ce_index);
    Bytes body = m.mem_read(entry.pushbuffer_addr, entry.length);
    auto methods = sec2::parse_methods(body);
    if (!methods.ok()) return abort_launch(Err::auth, "ce_exec");
    uint32_t blocked = 0;
    for (const auto& method : methods.value()) {
      if (method.opcode == sec2::Opcode::memset_secure && method.args.size() >= 3) {
        if (!m.cpr.contains(method.args[0], method.args[1])) {
          ++blocked;
          m.trace.emit("gpu_engine", "ce_blocked_access", {{"addr", method.args[0]}, {"ce", ce.id}});
          if (on_blocked) on_blocked(m, method.args[0]);
          continue;
        }
        m.mem_fill(method.args[0], method.args[1], uint8_t(method.args[2]));
      }
    }
    m.trace.emit("gpu_engine", "ce_exec",
                 {{"ce", ce.id}, {"methods", methods.value().size()}, {"blocked", blocked}});
  }

  // Tracking semaphores: CE under lce{y}_d2h, WLC/LCIC under lce{x}_d2h.
  ce.sem_expected += 1;
  if (auto st = update_sealed_semaphore(m, s, ce, ce.sem_expected); !st.ok()) return st.error();
  wlc.sem_expected += 1;
  if (auto st = update_sealed_semaphore(m, s, wlc, wlc.sem_expected); !st.ok()) return st.error();
  lcic.sem_expected += 1;
  if (auto st = update_sealed_semaphore(m, s, lcic, lcic.sem_expected); !st.ok()) return st.error();

  // LCIC advances the WLC two steps so the next cycle starts at decrypt_push.
  Bytes lcic_body = m.mem_read(sl.lcic_sched_cpr, sl.lcic_sched_len);
  auto lmethods = sec2::parse_methods(lcic_body);
  if (!lmethods.ok() || lmethods.value().empty() || lmethods.value()[0].args.size() < 3 ||
      lmethods.value()[0].args[0] != kSetupAdvanceWlc)
    return abort_launch(Err::auth, "lcic");
  write_gpput(m, wlc, read_gpput(m, wlc) + lmethods.value()[0].args[2]);
  m.trace.emit("gpu_engine", "lcic_advance",
               {{"wlc", wlc.id}, {"lcic", lcic.id}, {"gpput", read_gpput(m, wlc)}});

  return LaunchToken{wlc.sem_expected, ce.sem_expected};
}

}  // namespace gpucc::uvm
