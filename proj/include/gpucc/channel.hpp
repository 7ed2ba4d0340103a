// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Generic GPU channel: a GPFIFO ring of pushbuffer descriptors plus its GPPUT
// cursor, materialized in region memory so host visibility rules apply for
// real. SEC2-engine channels live in staging (plaintext control state); WLC,
// LCIC and UVM-CE channels live in the CPR.

#include "gpucc/session.hpp"

namespace gpucc {

enum class ChannelRole : uint8_t { sec2, scrubber, wlc, lcic, uvm_ce };

inline const char* to_string(ChannelRole r) {
  switch (r) {
    case ChannelRole::sec2: return "sec2";
    case ChannelRole::scrubber: return "scrubber";
    case ChannelRole::wlc: return "wlc";
    case ChannelRole::lcic: return "lcic";
    case ChannelRole::uvm_ce: return "uvm_ce";
  }
  return "?";
}

struct GpFifoEntry {
  uint64_t pushbuffer_addr = 0;
  uint64_t length = 0;
};

struct Channel {
  uint32_t id = 0;
  ChannelRole role = ChannelRole::sec2;
  EngineRef engine = EngineRef::sec2();
  bool in_cpr = false;

  uint64_t cb_addr = 0;  // gpput u64 at +0, gpfifo entries (16 B each) at +8
  uint32_t gpfifo_capacity = 32;
  uint64_t pushbuf_addr = 0;
  uint64_t pushbuf_size = 0;
  uint64_t semaphore_addr = 0;  // staging
  bool sem_plaintext = false;   // SEC2-engine channels: no d2h keys exist

  // lce channels
  std::optional<StatePair> h2d, d2h;
  // sec2-engine channels
  KeyId hmac_key{};
  KeyId data_key{};
  std::optional<StatePair> data_states;  // cpu->sec2 sealed payloads
  uint64_t scrub_tag_addr = 0;           // staging tag buffers (sec2 channels)
  uint64_t sema_tag_addr = 0;

  uint64_t engine_get = 0;    // engine-side consumed entries (private)
  uint64_t sem_expected = 0;  // driver-side expected semaphore value
  bool sealed_pushes = false;
  bool operational = false;
};

constexpr uint64_t kGpFifoEntrySize = 16;
constexpr uint64_t kSealedSemSlotSize = 64;

inline uint64_t channel_cb_size(uint32_t gpfifo_capacity) {
  return 8 + uint64_t(gpfifo_capacity) * kGpFifoEntrySize;
}

inline uint64_t read_gpput(Machine& m, const Channel& ch) {
  return get_le64(m.mem_read(ch.cb_addr, 8).data());
}

inline void write_gpput(Machine& m, const Channel& ch, uint64_t v) {
  uint8_t le[8];
  put_le64(le, v);
  m.mem_write(ch.cb_addr, ByteView(le, 8));
}

inline GpFifoEntry read_gpfifo_entry(Machine& m, const Channel& ch, uint64_t index) {
  Bytes raw = m.mem_read(ch.cb_addr + 8 + (index % ch.gpfifo_capacity) * kGpFifoEntrySize,
                         kGpFifoEntrySize);
  return {get_le64(raw.data()), get_le64(raw.data() + 8)};
}

inline void write_gpfifo_entry(Machine& m, const Channel& ch, uint64_t index, GpFifoEntry e) {
  Bytes raw(kGpFifoEntrySize);
  put_le64(raw.data(), e.pushbuffer_addr);
  put_le64(raw.data() + 8, e.length);
  m.mem_write(ch.cb_addr + 8 + (index % ch.gpfifo_capacity) * kGpFifoEntrySize, raw);
}

// Append one descriptor and advance GPPUT; rings the doorbell.
inline void submit_gpfifo(Machine& m, Channel& ch, GpFifoEntry e) {
  uint64_t put = read_gpput(m, ch);
  write_gpfifo_entry(m, ch, put, e);
  write_gpput(m, ch, put + 1);
  m.doorbell_count += 1;
  m.trace.emit("cvm_driver", "doorbell", {{"channel", ch.id}, {"gpput", put + 1}},
               ch.in_cpr ? Visibility::private_side : Visibility::host_visible);
}

// Sealed tracking-semaphore update (lce channels). AAD binds the channel id
// so a blob cannot be spliced onto a sibling channel sharing the same key.
inline Status update_sealed_semaphore(Machine& m, Session& s, Channel& ch, uint64_t value) {
  if (!ch.d2h) throw std::logic_error("channel has no d2h keys");
  Bytes aad;
  append_le32(aad, ch.id);
  uint8_t le[8];
  put_le64(le, value);
  auto blob = seal(ch.d2h->tx, s.keys(), ByteView(le, 8), aad);
  if (!blob.ok()) return blob.error();
  Bytes wire = blob.value().serialize();
  if (wire.size() > kSealedSemSlotSize) throw std::logic_error("semaphore slot overflow");
  wire.resize(kSealedSemSlotSize, 0);
  m.mem_write(ch.semaphore_addr, wire);
  m.trace.emit("gpu_engine", "semaphore_update",
               {{"channel", ch.id}, {"role", to_string(ch.role)}, {"sealed", true}, {"value", value}},
               Visibility::host_visible);
  return ok_status();
}

inline void update_plain_semaphore(Machine& m, Channel& ch, uint64_t value) {
  uint8_t le[8];
  put_le64(le, value);
  m.mem_write(ch.semaphore_addr, ByteView(le, 8));
  m.trace.emit("gpu_engine", "semaphore_update",
               {{"channel", ch.id}, {"role", to_string(ch.role)}, {"sealed", false}, {"value", value}},
               Visibility::host_visible);
}

// Driver-side semaphore poll. Sealed semaphores are snapshot slots: any
// counter advance is fresh, stale counters are replays.
inline Outcome<uint64_t> poll_semaphore(Machine& m, Session& s, Channel& ch) {
  if (ch.sem_plaintext) {
    uint64_t v = get_le64(m.mem_read(ch.semaphore_addr, 8).data());
    m.trace.emit("cvm_driver", "semaphore_poll",
                 {{"channel", ch.id}, {"sealed", false}, {"value", v}});
    return v;
  }
  if (!ch.d2h) throw std::logic_error("channel has no d2h keys");
  Bytes raw = m.mem_read(ch.semaphore_addr, kSealedSemSlotSize);
  auto blob = SealedBlob::deserialize(raw);
  if (!blob.ok()) return Err::auth;
  Bytes aad;
  append_le32(aad, ch.id);
  auto plain = open_latest(ch.d2h->rx, s.keys(), blob.value(), aad);
  if (!plain.ok()) return plain.error();
  uint64_t v = get_le64(plain.value().data());
  m.trace.emit("cvm_driver", "semaphore_poll", {{"channel", ch.id}, {"sealed", true}, {"value", v}});
  return v;
}

}  // namespace gpucc
