// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// SEC2 engine model. SEC2 verifies HMAC-signed method streams and decrypts
// sealed payloads into the CPR, but never produces ciphertext itself: there
// are no sec2_cpu_* keys, so anything flowing back to the driver (semaphores
// included) is plaintext. Hosts can watch it; they cannot forge methods.

#include <functional>

#include "gpucc/channel.hpp"

namespace gpucc::sec2 {

enum class Opcode : uint32_t {
  memset_secure = 1,
  semaphore_release = 2,
  decrypt_to_cpr = 3,
  setup_channel_state = 4,
  encrypt_from_cpr = 5,  // present in the vocabulary; SEC2 always rejects it
};

struct Method {
  Opcode opcode = Opcode::memset_secure;
  std::vector<uint64_t> args;
};

inline bool is_semaphore_method(const Method& m) { return m.opcode == Opcode::semaphore_release; }

inline Bytes serialize_method(const Method& m) {
  Bytes out;
  append_le32(out, uint32_t(m.opcode));
  append_le32(out, uint32_t(m.args.size()));
  for (uint64_t a : m.args) append_le64(out, a);
  return out;
}

inline Bytes serialize_methods(const std::vector<Method>& methods) {
  Bytes out;
  append_le32(out, uint32_t(methods.size()));
  for (const auto& m : methods) append_bytes(out, serialize_method(m));
  return out;
}

inline Outcome<std::vector<Method>> parse_methods(ByteView raw) {
  if (raw.size() < 4) return Err::auth;
  uint32_t n = get_le32(raw.data());
  if (n > 4096) return Err::auth;
  std::vector<Method> out;
  size_t off = 4;
  for (uint32_t i = 0; i < n; ++i) {
    if (raw.size() < off + 8) return Err::auth;
    Method m;
    m.opcode = Opcode(get_le32(raw.data() + off));
    uint32_t argc = get_le32(raw.data() + off + 4);
    off += 8;
    if (argc > 1024 || raw.size() < off + size_t(argc) * 8) return Err::auth;
    for (uint32_t a = 0; a < argc; ++a) {
      m.args.push_back(get_le64(raw.data() + off));
      off += 8;
    }
    out.push_back(std::move(m));
  }
  return out;
}

struct ScrubRequest {
  std::vector<uint64_t> pages;  // CPR page indices
};

constexpr uint64_t kTagBufSlots = 64;
constexpr uint64_t kTagBufSize = kTagBufSlots * 32;

inline Outcome<Channel> make_sec2_engine_channel(Machine& m, Session& s, ChannelRole role,
                                                 const char* suffix, uint32_t id) {
  if (!booted(m)) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  Channel ch;
  ch.id = id;
  ch.role = role;
  ch.engine = EngineRef::sec2();
  ch.in_cpr = false;
  ch.gpfifo_capacity = m.config.gpfifo_capacity;
  std::string tag = std::string(to_string(role));
  ch.cb_addr = m.staging_alloc(tag + "_channel_cb", channel_cb_size(ch.gpfifo_capacity), 64);
  ch.pushbuf_size = 16 * kPageSize;
  ch.pushbuf_addr = m.staging_alloc(tag + "_pushbuffer", ch.pushbuf_size);
  ch.semaphore_addr = m.staging_alloc(tag + "_semaphore", 8, 8);
  ch.scrub_tag_addr = m.staging_alloc(tag + "_scrub_tags", kTagBufSize, 64);
  ch.sema_tag_addr = m.staging_alloc(tag + "_sema_tags", kTagBufSize, 64);
  ch.sem_plaintext = true;
  ch.hmac_key = KeyId::from_name(std::string("cpu_sec2_hmac_") + suffix);
  ch.data_key = KeyId::from_name(std::string("cpu_sec2_data_") + suffix);
  ch.data_states = s.make_pair(ch.data_key);
  ch.operational = true;
  m.mem_fill(ch.cb_addr, channel_cb_size(ch.gpfifo_capacity), 0);
  m.mem_fill(ch.semaphore_addr, 8, 0);
  m.trace.emit("cvm_driver", "sec2_channel_create",
               {{"role", to_string(role)}, {"hmac_key", ch.hmac_key.name()}, {"data_key", ch.data_key.name()}},
               Visibility::host_visible);
  return ch;
}

inline Outcome<Channel> create_swl_scrubber_channel(Machine& m, Session& s) {
  return make_sec2_engine_channel(m, s, ChannelRole::scrubber, "scrubber", 0x5c);
}

// One HMAC digest per method, keyed by the channel's hmac key and bound to
// the method's position and the stream's total method count (so reordering
// and truncation both break verification). Scrub-class digests and
// semaphore-class digests go to separate tag buffers.
inline Bytes method_digest(const Channel& ch, const Session& s, uint32_t total, uint32_t index,
                           const Method& m) {
  Bytes msg;
  append_le32(msg, total);
  append_le32(msg, index);
  append_bytes(msg, serialize_method(m));
  return sign(ch.hmac_key, s.keys(), msg);
}

struct PushHandle {
  uint64_t pushbuf_addr = 0;
  uint64_t push_len = 0;
  uint64_t gpfifo_index = 0;
  size_t method_count = 0;
  bool sealed = false;
};

// Serialize, sign and submit a method stream on a SEC2-engine channel. With
// encrypt_scrubber_pushes the pushbuffer is additionally sealed with the
// channel's data key (the otherwise-unused cpu_sec2_data_scrubber).
inline Outcome<PushHandle> build_signed_push(Machine& m, Session& s, Channel& ch,
                                             const std::vector<Method>& methods, bool seal_push) {
  if (!ch.operational) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;

  uint32_t scrub_i = 0, sema_i = 0;
  for (uint32_t i = 0; i < methods.size(); ++i) {
    Bytes digest = method_digest(ch, s, uint32_t(methods.size()), i, methods[i]);
    uint64_t slot_addr = is_semaphore_method(methods[i]) ? ch.sema_tag_addr + 32 * sema_i++
                                                         : ch.scrub_tag_addr + 32 * scrub_i++;
    if (scrub_i > kTagBufSlots || sema_i > kTagBufSlots) throw ConfigError("tag buffer overflow");
    m.mem_write(slot_addr, digest);
  }

  Bytes push = serialize_methods(methods);
  ch.sealed_pushes = seal_push;
  if (seal_push) {
    auto blob = seal(ch.data_states->tx, s.keys(), push, {});
    if (!blob.ok()) return blob.error();
    push = blob.value().serialize();
  }
  if (push.size() > ch.pushbuf_size) throw ConfigError("pushbuffer overflow");
  m.mem_write(ch.pushbuf_addr, push);

  PushHandle h;
  h.pushbuf_addr = ch.pushbuf_addr;
  h.push_len = push.size();
  h.gpfifo_index = read_gpput(m, ch);
  h.method_count = methods.size();
  h.sealed = seal_push;
  submit_gpfifo(m, ch, {h.pushbuf_addr, h.push_len});
  m.trace.emit("cvm_driver", "sec2_push",
               {{"channel", ch.id},
                {"methods", methods.size()},
                {"bytes", h.push_len},
                {"sealed", seal_push}},
               Visibility::host_visible);
  return h;
}

struct MethodResult {
  uint32_t index = 0;
  std::string result;  // ok | capability_violation | auth | out_of_range
};

// Per-push execution hook for setup_channel_state; UVM bootstrap plugs in here.
using SetupHook = std::function<Status(Machine&, const Method&)>;

// SEC2 engine side: fetch pending GPFIFO entries, re-derive every method's
// HMAC and compare against the tag buffers. Nothing from a push executes
// unless all of its digests verify.
inline Outcome<std::vector<MethodResult>> sec2_process(Machine& m, Session& s, Channel& ch,
                                                       const SetupHook& setup = {}) {
  if (!booted(m)) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;

  std::vector<MethodResult> results;
  uint64_t put = read_gpput(m, ch);
  for (; ch.engine_get < put; ++ch.engine_get) {
    GpFifoEntry entry = read_gpfifo_entry(m, ch, ch.engine_get);
    if (!m.shared_staging.contains(entry.pushbuffer_addr, entry.length)) return Err::out_of_range;
    Bytes push = m.mem_read(entry.pushbuffer_addr, entry.length);

    if (ch.sealed_pushes) {
      // Sealed pushbuffers are opened before verification.
      auto blob = SealedBlob::deserialize(push);
      if (!blob.ok()) {
        ch.engine_get = put;
        return Err::auth;
      }
      auto plain = open(ch.data_states->rx, s.keys(), blob.value(), blob.value().aad);
      if (!plain.ok()) {
        ch.engine_get = put;
        return Err::auth;
      }
      push = plain.value();
    }

    auto methods = parse_methods(push);
    if (!methods.ok()) {
      m.trace.emit("sec2", "scrub_verify", {{"channel", ch.id}, {"ok", false}, {"reason", "malformed"}});
      ch.engine_get = put;
      return Err::auth;
    }

    uint32_t scrub_i = 0, sema_i = 0;
    bool all_ok = true;
    for (uint32_t i = 0; i < methods.value().size(); ++i) {
      const Method& method = methods.value()[i];
      uint64_t slot_addr = is_semaphore_method(method) ? ch.sema_tag_addr + 32 * sema_i++
                                                       : ch.scrub_tag_addr + 32 * scrub_i++;
      Bytes digest = m.mem_read(slot_addr, 32);
      Bytes msg;
      append_le32(msg, uint32_t(methods.value().size()));
      append_le32(msg, i);
      append_bytes(msg, serialize_method(method));
      if (!verify(ch.hmac_key, s.keys(), msg, digest).ok()) {
        all_ok = false;
        break;
      }
    }
    m.trace.emit("sec2", "scrub_verify", {{"channel", ch.id}, {"ok", all_ok}});
    if (!all_ok) {
      ch.engine_get = put;
      return Err::auth;
    }

    for (uint32_t i = 0; i < methods.value().size(); ++i) {
      const Method& method = methods.value()[i];
      MethodResult r;
      r.index = i;
      switch (method.opcode) {
        case Opcode::memset_secure: {
          if (method.args.size() < 3 || !m.cpr.contains(method.args[0], method.args[1])) {
            r.result = "out_of_range";
            break;
          }
          m.mem_fill(method.args[0], method.args[1], uint8_t(method.args[2]));
          r.result = "ok";
          break;
        }
        case Opcode::semaphore_release: {
          if (method.args.size() < 2 || !m.shared_staging.contains(method.args[0], 8)) {
            r.result = "out_of_range";
            break;
          }
          uint8_t le[8];
          put_le64(le, method.args[1]);
          m.mem_write(method.args[0], ByteView(le, 8));
          m.trace.emit("sec2", "semaphore_update",
                       {{"channel", ch.id}, {"sealed", false}, {"value", method.args[1]}},
                       Visibility::host_visible);
          r.result = "ok";
          break;
        }
        case Opcode::decrypt_to_cpr: {
          if (method.args.size() < 3) {
            r.result = "out_of_range";
            break;
          }
          uint64_t src = method.args[0], dst = method.args[1], len = method.args[2];
          if (!m.shared_staging.contains(src, 36 + len) || !m.cpr.contains(dst, len)) {
            r.result = "out_of_range";
            break;
          }
          Bytes raw = m.mem_read(src, 36 + len);
          auto blob = SealedBlob::deserialize(raw);
          if (!blob.ok()) {
            r.result = "auth";
            break;
          }
          auto plain = open(ch.data_states->rx, s.keys(), blob.value(), blob.value().aad);
          if (!plain.ok()) {
            r.result = plain.error() == Err::replay ? "replay" : "auth";
            break;
          }
          m.mem_write(dst, plain.value());
          r.result = "ok";
          break;
        }
        case Opcode::setup_channel_state: {
          Status st = setup ? setup(m, method) : ok_status();
          r.result = st.ok() ? "ok" : "out_of_range";
          break;
        }
        case Opcode::encrypt_from_cpr:
          // SEC2 cannot produce ciphertext.
          r.result = "capability_violation";
          break;
      }
      m.trace.emit("sec2", "sec2_execute",
                   {{"channel", ch.id}, {"opcode", uint32_t(method.opcode)}, {"result", r.result}});
      results.push_back(std::move(r));
    }
  }
  return results;
}

using TamperHook = std::function<void(Machine&)>;

// Build + verify + execute a scrub in one step; `between` opens the host's
// window on the staged push before SEC2 fetches it.
inline Outcome<uint64_t> submit_scrub(Machine& m, Session& s, Channel& ch, const ScrubRequest& req,
                                      bool seal_push = false, const TamperHook& between = {}) {
  if (ch.role != ChannelRole::scrubber) throw std::invalid_argument("not a scrubber channel");
  for (uint64_t p : req.pages)
    if (p >= m.cpr.size / kPageSize) return Err::out_of_range;

  std::vector<Method> methods;
  for (uint64_t p : req.pages)
    methods.push_back({Opcode::memset_secure, {m.cpr.base + p * kPageSize, kPageSize, 0}});
  methods.push_back({Opcode::semaphore_release, {ch.semaphore_addr, ch.sem_expected + 1}});

  m.trace.emit("cvm_driver", "scrub_submit", {{"pages", req.pages.size()}, {"sealed_push", seal_push}});
  auto push = build_signed_push(m, s, ch, methods, seal_push);
  if (!push.ok()) return push.error();
  if (between) between(m);

  auto exec = sec2_process(m, s, ch);
  if (!exec.ok()) return exec.error();

  ch.sem_expected += 1;
  uint64_t observed = get_le64(m.mem_read(ch.semaphore_addr, 8).data());
  if (observed != ch.sem_expected)
    m.trace.emit("cvm_driver", "attack_classified",
                 {{"kind", "dos"}, {"surface", "scrubber_semaphore"}, {"observed", observed}});
  m.trace.emit("sec2", "scrub_done", {{"pages", req.pages.size()}, {"semaphore", observed}});
  return observed;
}

// Soft reset: delete shared keys and wipe device memory strictly before the
// bus becomes visible again.
inline void soft_reset(Machine& m) {
  m.trace.emit("sec2", "reset", {{"phase", "begin"}});
  m.bus_visible = false;
  std::fill(m.cpr.content.begin(), m.cpr.content.end(), 0);
  m.trace.emit("sec2", "wipe", {{"region", "cpr"}});
  std::fill(m.vidmem.content.begin(), m.vidmem.content.end(), 0);
  m.trace.emit("sec2", "wipe", {{"region", "vidmem"}});
  m.epoch += 1;  // all prior-epoch cipher states die here
  m.trace.emit("sec2", "keys_deleted", {{"epoch", m.epoch}});
  m.bus_visible = true;
  m.trace.emit("sec2", "reset", {{"phase", "visible"}});
  m.boot_state = BootState::cold;
  m.failed_stage.reset();
  m.boot_measurements.clear();
  m.gsp_faults = {};
  m.uvm_sec2_channel_exists = false;
  m.attestation_ready = false;
}

}  // namespace gpucc::sec2
