// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Encrypted fault delivery: replayable and non-replayable fault packets are
// sealed into per-kind shadow buffers in staging, the PUT cursor is exposed
// through a repurposed BAR0 register, and an MMU_FAULT_QUEUED event rides the
// RPC return path.

#include "gpucc/rpc.hpp"

namespace gpucc::fault {

enum class Kind : uint8_t { replayable = 0, non_replayable = 1 };

inline const char* to_string(Kind k) { return k == Kind::replayable ? "replayable" : "non_replayable"; }

enum class AccessType : uint8_t { read = 0, write = 1, atomic = 2 };

struct FaultPacket {
  Kind kind = Kind::replayable;
  uint64_t fault_addr = 0;
  uint16_t engine_id = 0;
  AccessType access_type = AccessType::read;
  uint8_t valid = 1;  // plaintext flag, doubles as AAD
};

constexpr size_t kPacketRecordSize = 64;
constexpr size_t kSlotSize = 128;  // valid(1) pad(3) wire(<=101) pad

inline Bytes serialize_packet(const FaultPacket& p) {
  Bytes out(kPacketRecordSize, 0);
  out[0] = uint8_t(p.kind);
  out[1] = uint8_t(p.access_type);
  put_le16(out.data() + 2, p.engine_id);
  put_le64(out.data() + 8, p.fault_addr);
  return out;
}

inline FaultPacket parse_packet(ByteView raw, uint8_t valid) {
  FaultPacket p;
  p.kind = Kind(raw[0]);
  p.access_type = AccessType(raw[1]);
  p.engine_id = get_le16(raw.data() + 2);
  p.fault_addr = get_le64(raw.data() + 8);
  p.valid = valid;
  return p;
}

struct ShadowBuffer {
  Kind kind = Kind::replayable;
  uint64_t ring_addr = 0;
  uint32_t capacity = 0;
  uint32_t get = 0;  // CVM-private read cursor
};

struct FaultChannels {
  ShadowBuffer replayable;
  ShadowBuffer non_replayable;
};

inline Outcome<FaultChannels> register_shadow_buffers(Machine& m, Session& s, rpc::RpcChannel& ch,
                                                      uint32_t capacity = 0) {
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  if (capacity == 0) capacity = m.config.fault_ring_capacity;

  FaultChannels fc;
  fc.replayable = {Kind::replayable,
                   m.staging_alloc("fault_ring_replayable", uint64_t(capacity) * kSlotSize), capacity, 0};
  fc.non_replayable = {Kind::non_replayable,
                       m.staging_alloc("fault_ring_nonreplayable", uint64_t(capacity) * kSlotSize),
                       capacity, 0};

  rpc::RpcMessage msg;
  msg.function = rpc::kCmdRegisterFaultBuffers;
  append_le64(msg.params, fc.replayable.ring_addr);
  append_le32(msg.params, capacity);
  append_le64(msg.params, fc.non_replayable.ring_addr);
  append_le32(msg.params, capacity);
  auto seq = rpc::send_command(m, s, ch, msg);
  if (!seq.ok()) return seq.error();
  auto svc = rpc::gsp_service(m, s, ch);
  if (!svc.ok()) return svc.error();
  auto status = rpc::recv_status(m, s, ch);
  if (!status.ok()) return status.error();
  auto parsed = rpc::parse_status(status.value());
  if (!parsed.ok() || parsed.value().code != rpc::kStatusOk) return Err::rpc_failure;

  m.trace.emit("cvm_driver", "fault_register",
               {{"replayable_addr", fc.replayable.ring_addr},
                {"non_replayable_addr", fc.non_replayable.ring_addr},
                {"capacity", capacity}});
  return fc;
}

namespace detail {
inline ChannelCipherState& tx_state(Session& s, Kind k) {
  return k == Kind::replayable ? s.fault_replayable.tx : s.fault_non_replayable.tx;
}
inline ChannelCipherState& rx_state(Session& s, Kind k) {
  return k == Kind::replayable ? s.fault_replayable.rx : s.fault_non_replayable.rx;
}
inline uint32_t& put_cursor(Machine& m, Kind k) {
  return k == Kind::replayable ? m.gsp_faults.replayable_put : m.gsp_faults.non_replayable_put;
}
}  // namespace detail

// GSP side: seal a fault packet into its shadow buffer, advance the BAR0 PUT
// register, and queue the notification event.
inline Status raise_fault(Machine& m, Session& s, rpc::RpcChannel& ch, FaultChannels& fc,
                          const FaultPacket& packet) {
  if (!m.gsp_faults.registered) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  ShadowBuffer& buf = packet.kind == Kind::replayable ? fc.replayable : fc.non_replayable;
  uint32_t& put = detail::put_cursor(m, packet.kind);
  if ((put + 1) % buf.capacity == buf.get % buf.capacity) {
    m.trace.emit("gsp", "fault_dropped", {{"kind", to_string(packet.kind)}});
    return Err::ring_full;
  }

  Bytes record = serialize_packet(packet);
  Bytes aad{packet.valid};
  auto blob = seal(detail::tx_state(s, packet.kind), s.keys(), record, aad);
  if (!blob.ok()) return blob.error();

  Bytes slot(kSlotSize, 0);
  slot[0] = packet.valid;
  Bytes wire = blob.value().serialize();
  if (4 + wire.size() > kSlotSize) throw std::logic_error("fault slot overflow");
  std::copy(wire.begin(), wire.end(), slot.begin() + 4);
  m.mem_write(buf.ring_addr + uint64_t(put % buf.capacity) * kSlotSize, slot);
  put = (put + 1) % buf.capacity;

  rpc::RpcMessage evt;
  evt.function = rpc::kEvtMmuFaultQueued;
  append_le32(evt.params, rpc::kStatusOk);
  append_le32(evt.params, 0);
  append_le32(evt.params, uint32_t(packet.kind));
  auto queued = rpc::queue_gsp_status(m, s, ch, evt);
  if (!queued.ok()) return queued.error();

  m.trace.emit("gsp", "fault_raise",
               {{"kind", to_string(packet.kind)}, {"put", put}, {"addr", packet.fault_addr}},
               Visibility::host_visible);
  return ok_status();
}

// CVM ISR side: drain both shadow buffers, verifying each slot's valid byte
// as AAD before parsing.
inline Outcome<std::vector<FaultPacket>> handle_faults(Machine& m, Session& s, FaultChannels& fc) {
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  std::vector<FaultPacket> out;
  for (ShadowBuffer* buf : {&fc.replayable, &fc.non_replayable}) {
    uint32_t put = detail::put_cursor(m, buf->kind);
    while (buf->get % buf->capacity != put % buf->capacity) {
      uint64_t slot_addr = buf->ring_addr + uint64_t(buf->get % buf->capacity) * kSlotSize;
      Bytes slot = m.mem_read(slot_addr, kSlotSize);
      uint8_t valid = slot[0];
      auto blob = SealedBlob::deserialize(ByteView(slot.data() + 4, kSlotSize - 4));
      if (!blob.ok()) return Err::auth;
      Bytes aad{valid};
      auto plain = open(detail::rx_state(s, buf->kind), s.keys(), blob.value(), aad);
      if (!plain.ok()) return plain.error();
      FaultPacket p = parse_packet(plain.value(), valid);
      m.trace.emit("cvm_driver", "fault_handle",
                   {{"kind", to_string(p.kind)}, {"addr", p.fault_addr}, {"get", buf->get}});
      out.push_back(p);
      m.mem_fill(slot_addr, 1, 0);  // consume: clear the valid flag
      buf->get = (buf->get + 1) % buf->capacity;
    }
  }
  return out;
}

}  // namespace gpucc::fault
