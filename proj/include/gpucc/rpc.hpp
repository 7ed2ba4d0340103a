// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The CPU<->GSP RMAPI RPC channel: a 129-entry physical address table plus TX
// and RX queues of 63 page-sized elements each, all resident in the shared
// staging buffer. Element headers (auth tag, AAD, checksum, sequence number,
// element count) stay in plaintext unless the encrypt_rpc_metadata mitigation
// is enabled; payloads are always sealed.

#include "gpucc/session.hpp"

namespace gpucc::rpc {

constexpr size_t kEntryCount = 129;
constexpr size_t kQueueElems = 63;
constexpr size_t kElemHeaderSize = 44;
constexpr size_t kElemPayloadCapacity = kPageSize - kElemHeaderSize;  // 4052
// Sealing the header alongside the slice costs 36 bytes of blob framing.
constexpr size_t kSealedElemPayloadCapacity = kPageSize - 36 - kElemHeaderSize;  // 4016

// Synthetic command vocabulary (the real RMAPI encodings are proprietary).
enum CommandId : uint32_t {
  kCmdNop = 0,
  kCmdMemRead = 1,
  kCmdMemWrite = 2,
  kCmdRegisterFaultBuffers = 3,
  kCmdSetCcPolicy = 4,
  kCmdQueryStatus = 5,
  kCmdAlloc = 6,
  kCmdFree = 7,
  kEvtMmuFaultQueued = 0x1000,
};

enum StatusCode : uint32_t {
  kStatusOk = 0,
  kStatusAuth = 1,
  kStatusChecksum = 2,
  kStatusBadArgs = 3,
  kStatusReplay = 4,
  kStatusUnknownFn = 5,
};

struct RpcMessage {
  uint32_t function = kCmdNop;
  Bytes params;
};

struct ElementHeader {
  std::array<uint8_t, 16> auth_tag{};
  std::array<uint8_t, 16> aad{};  // seq(4) || elem_count(4) || seal counter(8), LE
  uint32_t checksum = 0;
  uint32_t seq = 0;
  uint32_t elem_count = 1;

  Bytes serialize() const {
    Bytes out(kElemHeaderSize);
    std::copy(auth_tag.begin(), auth_tag.end(), out.begin());
    std::copy(aad.begin(), aad.end(), out.begin() + 16);
    put_le32(out.data() + 32, checksum);
    put_le32(out.data() + 36, seq);
    put_le32(out.data() + 40, elem_count);
    return out;
  }

  static ElementHeader parse(ByteView raw) {
    if (raw.size() < kElemHeaderSize) throw std::invalid_argument("short element header");
    ElementHeader h;
    std::copy_n(raw.begin(), 16, h.auth_tag.begin());
    std::copy_n(raw.begin() + 16, 16, h.aad.begin());
    h.checksum = get_le32(raw.data() + 32);
    h.seq = get_le32(raw.data() + 36);
    h.elem_count = get_le32(raw.data() + 40);
    return h;
  }

  uint64_t aad_counter() const { return get_le64(aad.data() + 8); }
};

struct RpcInfra {
  uint64_t table_addr = 0;
  std::array<uint64_t, kEntryCount> entries{};  // [0] self, [1] tx hdr, [2..64] tx, [65] rx hdr, [66..128] rx

  uint64_t tx_header() const { return entries[1]; }
  uint64_t tx_elem(size_t i) const { return entries[2 + i]; }
  uint64_t rx_header() const { return entries[65]; }
  uint64_t rx_elem(size_t i) const { return entries[66 + i]; }
};

struct RpcChannel {
  RpcInfra infra;
  bool encrypt_metadata = false;
  uint32_t tx_seq = 0;  // next command sequence number
  uint32_t rx_seq = 0;  // next status sequence number
  // Private cursor mirrors: each actor owns its cursor and reads only the
  // peer's cursor from staging (the staged copy is what the host can attack).
  uint32_t tx_write = 0, tx_read = 0, rx_write = 0, rx_read = 0;
  // Queue-metadata sealing states (mitigation mode); one pair per cursor writer.
  StatePair meta_tx_write, meta_tx_read, meta_rx_write, meta_rx_read;
};

struct ServiceResult {
  uint32_t seq = 0;
  std::string result;  // ok | auth | replay | checksum | malformed | unknown_fn | bad_args
};

inline uint32_t compute_checksum(ByteView data) { return crypto::crc32(data); }

// ---- message body framing: [inner_len u32][function u32][params], zero-padded ----

namespace detail {

inline Bytes frame_message(const RpcMessage& msg, size_t padded_size) {
  Bytes out;
  out.reserve(padded_size);
  append_le32(out, uint32_t(4 + msg.params.size()));
  append_le32(out, msg.function);
  append_bytes(out, msg.params);
  out.resize(padded_size, 0);
  return out;
}

inline Outcome<RpcMessage> unframe_message(ByteView plain) {
  if (plain.size() < 8) return Err::auth;
  uint32_t inner_len = get_le32(plain.data());
  if (inner_len < 4 || 4 + size_t(inner_len) > plain.size()) return Err::auth;
  RpcMessage msg;
  msg.function = get_le32(plain.data() + 4);
  msg.params.assign(plain.begin() + 8, plain.begin() + 4 + inner_len);
  return msg;
}

// Page image: header || payload slice, checksum patched over the whole page
// with the checksum field zeroed.
inline Bytes element_page(const ElementHeader& header, ByteView slice, size_t page_payload) {
  Bytes page = header.serialize();
  page.resize(kElemHeaderSize + page_payload, 0);
  std::copy(slice.begin(), slice.end(), page.begin() + kElemHeaderSize);
  put_le32(page.data() + 32, 0);
  uint32_t crc = compute_checksum(page);
  put_le32(page.data() + 32, crc);
  return page;
}

inline bool element_crc_ok(ByteView page) {
  Bytes copy(page.begin(), page.end());
  uint32_t stored = get_le32(copy.data() + 32);
  put_le32(copy.data() + 32, 0);
  return compute_checksum(copy) == stored;
}

struct Cursors {
  uint32_t read = 0;
  uint32_t write = 0;
};

inline uint32_t free_slots(const Cursors& c) { return (c.read + kQueueElems - c.write - 1) % kQueueElems; }
inline uint32_t used_slots(const Cursors& c) { return (c.write + kQueueElems - c.read) % kQueueElems; }

}  // namespace detail

// ---- queue header access (plaintext or sealed, per mitigation) ----

namespace detail {

// Sealed cursor slots live at fixed offsets of the header page.
constexpr uint64_t kReadSlotOff = 0;
constexpr uint64_t kWriteSlotOff = 64;
constexpr size_t kCursorWireSize = 40;  // iv12 tag16 aadlen4 paylen4 value4

inline void write_cursor(Machine& m, Session& s, RpcChannel& rpc, uint64_t header_addr,
                         bool is_read_ptr, StatePair& pair, uint32_t value) {
  if (!rpc.encrypt_metadata) {
    uint8_t le[4];
    put_le32(le, value);
    m.mem_write(header_addr + (is_read_ptr ? 0 : 4), ByteView(le, 4));
    return;
  }
  uint8_t le[4];
  put_le32(le, value);
  auto blob = seal(pair.tx, s.keys(), ByteView(le, 4), {});
  m.mem_write(header_addr + (is_read_ptr ? kReadSlotOff : kWriteSlotOff), blob.value().serialize());
}

inline uint32_t read_cursor(Machine& m, Session& s, RpcChannel& rpc, uint64_t header_addr,
                            bool is_read_ptr, StatePair& pair) {
  if (!rpc.encrypt_metadata) {
    Bytes raw = m.mem_read(header_addr + (is_read_ptr ? 0 : 4), 4);
    return get_le32(raw.data()) % kQueueElems;
  }
  Bytes raw = m.mem_read(header_addr + (is_read_ptr ? kReadSlotOff : kWriteSlotOff), kCursorWireSize);
  auto blob = SealedBlob::deserialize(raw);
  if (!blob.ok()) return 0;
  auto plain = open_latest(pair.rx, s.keys(), blob.value(), {});
  if (!plain.ok()) return 0;  // tampered metadata reads as empty: DoS class
  return get_le32(plain.value().data()) % kQueueElems;
}

}  // namespace detail

inline size_t element_capacity(const RpcChannel& rpc) {
  return rpc.encrypt_metadata ? kSealedElemPayloadCapacity : kElemPayloadCapacity;
}

inline Outcome<RpcChannel> init_rpc_infrastructure(Machine& m, Session& s,
                                                   bool encrypt_metadata = false) {
  if (!booted(m) || !m.cc_mode_active) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  if (!m.staging_available(kEntryCount * kPageSize)) return Err::staging_exhausted;

  RpcChannel rpc;
  rpc.encrypt_metadata = encrypt_metadata;
  rpc.infra.table_addr = m.staging_alloc("rpc_addr_table", kPageSize);
  rpc.infra.entries[0] = rpc.infra.table_addr;
  rpc.infra.entries[1] = m.staging_alloc("rpc_tx_header", kPageSize);
  for (size_t i = 0; i < kQueueElems; ++i) rpc.infra.entries[2 + i] = m.staging_alloc("rpc_tx_elem", kPageSize);
  rpc.infra.entries[65] = m.staging_alloc("rpc_rx_header", kPageSize);
  for (size_t i = 0; i < kQueueElems; ++i) rpc.infra.entries[66 + i] = m.staging_alloc("rpc_rx_elem", kPageSize);

  Bytes table(kEntryCount * 8);
  for (size_t i = 0; i < kEntryCount; ++i) put_le64(table.data() + 8 * i, rpc.infra.entries[i]);
  m.mem_write(rpc.infra.table_addr, table);

  m.mem_fill(rpc.infra.tx_header(), kPageSize, 0);
  m.mem_fill(rpc.infra.rx_header(), kPageSize, 0);

  rpc.meta_tx_write = s.make_pair(KeyId::from_name("cpu_gsp_locked_rpc"));
  rpc.meta_tx_read = s.make_pair(KeyId::from_name("gsp_cpu_locked_rpc"));
  rpc.meta_rx_write = s.make_pair(KeyId::from_name("gsp_cpu_locked_rpc"));
  rpc.meta_rx_read = s.make_pair(KeyId::from_name("cpu_gsp_locked_rpc"));

  if (encrypt_metadata) {
    // Seed sealed cursor slots so the first reads decode to zero.
    detail::write_cursor(m, s, rpc, rpc.infra.tx_header(), true, rpc.meta_tx_read, 0);
    detail::write_cursor(m, s, rpc, rpc.infra.tx_header(), false, rpc.meta_tx_write, 0);
    detail::write_cursor(m, s, rpc, rpc.infra.rx_header(), true, rpc.meta_rx_read, 0);
    detail::write_cursor(m, s, rpc, rpc.infra.rx_header(), false, rpc.meta_rx_write, 0);
  }

  m.trace.emit("cvm_driver", "rpc_init",
               {{"table_addr", rpc.infra.table_addr},
                {"entries", kEntryCount},
                {"metadata_sealed", encrypt_metadata}},
               Visibility::host_visible);
  return rpc;
}

namespace detail {

// Emit one message into a queue. Used by both directions: the driver fills TX
// with commands, the GSP fills RX with statuses and events.
inline Outcome<uint32_t> enqueue_message(Machine& m, Session& s, RpcChannel& rpc, bool to_tx,
                                         ChannelCipherState& tx_state, StatePair& write_meta,
                                         StatePair& read_meta, uint32_t& seq_counter,
                                         const RpcMessage& msg, const char* actor) {
  const size_t capacity = element_capacity(rpc);
  const size_t inner_size = 8 + msg.params.size();
  uint32_t n = uint32_t((inner_size + capacity - 1) / capacity);
  if (n == 0) n = 1;
  if (n > kQueueElems - 1) throw std::invalid_argument("rpc message exceeds queue capacity");

  uint64_t header_addr = to_tx ? rpc.infra.tx_header() : rpc.infra.rx_header();
  Cursors cur;
  cur.read = read_cursor(m, s, rpc, header_addr, true, read_meta);  // peer-owned
  cur.write = to_tx ? rpc.tx_write : rpc.rx_write;                  // own mirror
  if (n > free_slots(cur)) return Err::queue_full;

  uint32_t seq = seq_counter++;
  Bytes framed = frame_message(msg, size_t(n) * capacity);

  if (!rpc.encrypt_metadata) {
    // One seal per message; the ciphertext is striped across elements and the
    // tag rides in the first element's header.
    ElementHeader h;
    h.seq = seq;
    h.elem_count = n;
    put_le32(h.aad.data(), seq);
    put_le32(h.aad.data() + 4, n);
    put_le64(h.aad.data() + 8, tx_state.send_counter);
    auto sealed = seal(tx_state, s.keys(), framed, h.aad);
    if (!sealed.ok()) return sealed.error();
    for (uint32_t k = 0; k < n; ++k) {
      ElementHeader eh = h;
      eh.auth_tag = k == 0 ? sealed.value().tag : std::array<uint8_t, 16>{};
      ByteView slice(sealed.value().payload.data() + size_t(k) * capacity, capacity);
      uint64_t addr = to_tx ? rpc.infra.tx_elem((cur.write + k) % kQueueElems)
                            : rpc.infra.rx_elem((cur.write + k) % kQueueElems);
      m.mem_write(addr, element_page(eh, slice, capacity));
    }
  } else {
    // Mitigation: header and slice sealed together, one blob per element.
    for (uint32_t k = 0; k < n; ++k) {
      ElementHeader eh;
      eh.seq = seq;
      eh.elem_count = n;
      put_le32(eh.aad.data(), seq);
      put_le32(eh.aad.data() + 4, n);
      put_le64(eh.aad.data() + 8, tx_state.send_counter);
      ByteView slice(framed.data() + size_t(k) * capacity, capacity);
      Bytes page = element_page(eh, slice, capacity);
      auto sealed = seal(tx_state, s.keys(), page, {});
      if (!sealed.ok()) return sealed.error();
      uint64_t addr = to_tx ? rpc.infra.tx_elem((cur.write + k) % kQueueElems)
                            : rpc.infra.rx_elem((cur.write + k) % kQueueElems);
      Bytes wire = sealed.value().serialize();
      wire.resize(kPageSize, 0);
      m.mem_write(addr, wire);
    }
  }

  cur.write = (cur.write + n) % kQueueElems;
  (to_tx ? rpc.tx_write : rpc.rx_write) = cur.write;
  write_cursor(m, s, rpc, header_addr, false, write_meta, cur.write);

  m.trace.emit(actor, to_tx ? "rpc_send" : "rpc_enqueue_status",
               {{"seq", seq},
                {"elemCount", n},
                {"header_bytes", n * kElemHeaderSize},
                {"payload_bytes", framed.size()},
                {"sealed_header", rpc.encrypt_metadata}},
               Visibility::host_visible);
  return seq;
}

struct DequeuedMessage {
  uint32_t seq = 0;
  uint32_t elem_count = 1;
  Outcome<RpcMessage> message = Err::auth;
};

// Pull one message off a queue head, advancing the read cursor past it even
// when verification fails (detection, not crash). On an authentication
// failure for the expected counter the receive counter is burned so the
// channel stays in sync with the sender.
inline Outcome<DequeuedMessage> dequeue_message(Machine& m, Session& s, RpcChannel& rpc, bool from_tx,
                                                ChannelCipherState& rx_state, StatePair& write_meta,
                                                StatePair& read_meta) {
  const size_t capacity = element_capacity(rpc);
  uint64_t header_addr = from_tx ? rpc.infra.tx_header() : rpc.infra.rx_header();
  Cursors cur;
  cur.read = from_tx ? rpc.tx_read : rpc.rx_read;                     // own mirror
  cur.write = read_cursor(m, s, rpc, header_addr, false, write_meta);  // peer-owned
  if (cur.read == cur.write) return Err::queue_empty;

  auto elem_addr = [&](uint32_t slot) {
    return from_tx ? rpc.infra.tx_elem(slot % kQueueElems) : rpc.infra.rx_elem(slot % kQueueElems);
  };

  DequeuedMessage out;
  auto burn = [&](uint64_t counter) {
    if (counter == rx_state.recv_last_accepted + 1) rx_state.recv_last_accepted = counter;
  };

  if (!rpc.encrypt_metadata) {
    Bytes first = m.mem_read(elem_addr(cur.read), kPageSize);
    ElementHeader h = ElementHeader::parse(first);
    uint32_t n = h.elem_count;
    bool malformed = n == 0 || n > kQueueElems - 1 || n > used_slots(cur);
    if (malformed) n = 1;
    out.seq = h.seq;
    out.elem_count = n;

    bool crc_ok = !malformed;
    Bytes ciphertext;
    for (uint32_t k = 0; k < n && crc_ok; ++k) {
      Bytes page = k == 0 ? first : m.mem_read(elem_addr(cur.read + k), kPageSize);
      if (!element_crc_ok(ByteView(page.data(), kElemHeaderSize + capacity))) crc_ok = false;
      ElementHeader eh = ElementHeader::parse(page);
      if (eh.seq != h.seq || eh.elem_count != h.elem_count) crc_ok = false;
      append_bytes(ciphertext, ByteView(page.data() + kElemHeaderSize, capacity));
    }

    if (malformed) {
      out.message = Err::checksum_mismatch;
    } else if (!crc_ok) {
      burn(h.aad_counter());
      out.message = Err::checksum_mismatch;
    } else if (get_le32(h.aad.data()) != h.seq || get_le32(h.aad.data() + 4) != h.elem_count) {
      burn(h.aad_counter());
      out.message = Err::auth;
    } else {
      SealedBlob blob;
      put_le32(blob.iv.data(), rx_state.salt);
      put_le64(blob.iv.data() + 4, h.aad_counter());
      blob.tag = h.auth_tag;
      blob.aad.assign(h.aad.begin(), h.aad.end());
      blob.payload = std::move(ciphertext);
      auto plain = open(rx_state, s.keys(), blob, blob.aad);
      if (plain.ok()) {
        out.message = unframe_message(plain.value());
      } else {
        if (plain.error() == Err::auth) burn(h.aad_counter());
        out.message = plain.error();
      }
    }
    cur.read = (cur.read + n) % kQueueElems;
  } else {
    Bytes first_raw = m.mem_read(elem_addr(cur.read), kPageSize);
    auto first_blob = SealedBlob::deserialize(first_raw);
    uint32_t n = 1;
    uint64_t first_counter = 0;
    Bytes framed;
    Outcome<RpcMessage> msg = Err::auth;
    if (first_blob.ok()) {
      first_counter = first_blob.value().iv_counter();
      auto open_elem = [&](const SealedBlob& blob) -> Outcome<Bytes> {
        auto plain = open(rx_state, s.keys(), blob, {});
        if (!plain.ok() && plain.error() == Err::auth) burn(blob.iv_counter());
        return plain;
      };
      auto plain = open_elem(first_blob.value());
      if (plain.ok()) {
        ElementHeader h = ElementHeader::parse(plain.value());
        out.seq = h.seq;
        n = h.elem_count && h.elem_count <= used_slots(cur) ? h.elem_count : 1;
        bool all_ok = element_crc_ok(plain.value());
        append_bytes(framed, ByteView(plain.value().data() + kElemHeaderSize, capacity));
        for (uint32_t k = 1; k < n && all_ok; ++k) {
          Bytes raw = m.mem_read(elem_addr(cur.read + k), kPageSize);
          auto blob = SealedBlob::deserialize(raw);
          Outcome<Bytes> p = blob.ok() ? open_elem(blob.value()) : Outcome<Bytes>(Err::auth);
          if (!p.ok() || !element_crc_ok(p.value())) {
            all_ok = false;
            msg = p.ok() ? Outcome<RpcMessage>(Err::checksum_mismatch) : Outcome<RpcMessage>(p.error());
            break;
          }
          append_bytes(framed, ByteView(p.value().data() + kElemHeaderSize, capacity));
        }
        if (all_ok) msg = unframe_message(framed);
      } else {
        msg = plain.error();
      }
      // A rejected group at the expected stream position still consumed the
      // sender's counters; skip past it so the channel stays usable after
      // detection. Replays of old groups burn nothing.
      if (!msg.ok() && first_counter <= rx_state.recv_last_accepted + 1 &&
          first_counter + n - 1 > rx_state.recv_last_accepted)
        rx_state.recv_last_accepted = first_counter + n - 1;
    }
    out.elem_count = n;
    out.message = std::move(msg);
    cur.read = (cur.read + n) % kQueueElems;
  }

  (from_tx ? rpc.tx_read : rpc.rx_read) = cur.read;
  write_cursor(m, s, rpc, header_addr, true, read_meta, cur.read);
  return out;
}

}  // namespace detail

inline Outcome<uint32_t> send_command(Machine& m, Session& s, RpcChannel& rpc, const RpcMessage& msg) {
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  return detail::enqueue_message(m, s, rpc, /*to_tx=*/true, s.rpc_cpu_gsp.tx, rpc.meta_tx_write,
                                 rpc.meta_tx_read, rpc.tx_seq, msg, "cvm_driver");
}

// GSP-side event/status injection into the RX queue.
inline Outcome<uint32_t> queue_gsp_status(Machine& m, Session& s, RpcChannel& rpc, const RpcMessage& msg) {
  return detail::enqueue_message(m, s, rpc, /*to_tx=*/false, s.rpc_gsp_cpu.tx, rpc.meta_rx_write,
                                 rpc.meta_rx_read, rpc.rx_seq, msg, "gsp");
}

// Synthetic command executor; returns (status code, reply data).
inline std::pair<uint32_t, Bytes> execute_gsp_command(Machine& m, Session& s, const RpcMessage& msg) {
  const Bytes& p = msg.params;
  switch (msg.function) {
    case kCmdNop:
      return {kStatusOk, {}};
    case kCmdMemRead: {
      if (p.size() < 24) return {kStatusBadArgs, {}};
      uint64_t cpr_addr = get_le64(p.data()), staging_addr = get_le64(p.data() + 8),
               size = get_le64(p.data() + 16);
      if (!m.cpr.contains(cpr_addr, size)) return {kStatusBadArgs, {}};
      if (!m.shared_staging.contains(staging_addr, 36 + size)) return {kStatusBadArgs, {}};
      Bytes data = m.mem_read(cpr_addr, size);
      auto blob = seal(s.dma_gsp_cpu.tx, s.keys(), data, {});
      if (!blob.ok()) return {kStatusBadArgs, {}};
      m.mem_write(staging_addr, blob.value().serialize());
      m.trace.emit("gsp", "dma_stage_out", {{"bytes", size}, {"sealed", true}}, Visibility::host_visible);
      return {kStatusOk, {}};
    }
    case kCmdMemWrite: {
      if (p.size() < 24) return {kStatusBadArgs, {}};
      uint64_t cpr_addr = get_le64(p.data()), staging_addr = get_le64(p.data() + 8),
               size = get_le64(p.data() + 16);
      if (!m.cpr.contains(cpr_addr, size)) return {kStatusBadArgs, {}};
      if (!m.shared_staging.contains(staging_addr, 36 + size)) return {kStatusBadArgs, {}};
      Bytes raw = m.mem_read(staging_addr, 36 + size);
      auto blob = SealedBlob::deserialize(raw);
      if (!blob.ok()) return {kStatusAuth, {}};
      auto plain = open(s.dma_cpu_gsp.rx, s.keys(), blob.value(), blob.value().aad);
      if (!plain.ok()) {
        if (plain.error() == Err::auth &&
            blob.value().iv_counter() == s.dma_cpu_gsp.rx.recv_last_accepted + 1)
          s.dma_cpu_gsp.rx.recv_last_accepted += 1;
        return {plain.error() == Err::replay ? kStatusReplay : kStatusAuth, {}};
      }
      m.mem_write(cpr_addr, plain.value());
      return {kStatusOk, {}};
    }
    case kCmdRegisterFaultBuffers: {
      if (p.size() < 24) return {kStatusBadArgs, {}};
      uint64_t r_addr = get_le64(p.data());
      uint32_t r_cap = get_le32(p.data() + 8);
      uint64_t nr_addr = get_le64(p.data() + 12);
      uint32_t nr_cap = get_le32(p.data() + 20);
      if (!m.shared_staging.contains(r_addr, uint64_t(r_cap) * 128) ||
          !m.shared_staging.contains(nr_addr, uint64_t(nr_cap) * 128))
        return {kStatusBadArgs, {}};
      m.gsp_faults = {true, r_addr, nr_addr, r_cap, nr_cap, 0, 0};
      return {kStatusOk, {}};
    }
    case kCmdSetCcPolicy: {
      if (p.size() < 4) return {kStatusBadArgs, {}};
      m.set_cc_mode(get_le32(p.data()) != 0);
      return {kStatusOk, {}};
    }
    case kCmdQueryStatus: {
      Bytes data;
      append_le32(data, uint32_t(m.boot_state));
      append_le32(data, m.cc_mode_active ? 1 : 0);
      append_le64(data, m.epoch);
      return {kStatusOk, data};
    }
    case kCmdAlloc: {
      if (p.size() < 8) return {kStatusBadArgs, {}};
      try {
        uint64_t addr = m.cpr_alloc("rpc_alloc", get_le64(p.data()));
        Bytes data;
        append_le64(data, addr);
        return {kStatusOk, data};
      } catch (const ConfigError&) {
        return {kStatusBadArgs, {}};
      }
    }
    case kCmdFree:
      return {kStatusOk, {}};
    default:
      return {kStatusUnknownFn, {}};
  }
}

// Drain the TX queue: verify, decrypt, execute, and push one status per
// command into the RX queue. Tampered elements are dropped with an error
// status instead of crashing the channel.
inline Outcome<std::vector<ServiceResult>> gsp_service(Machine& m, Session& s, RpcChannel& rpc) {
  if (!booted(m)) return Err::not_booted;
  if (!s.check_fresh(m).ok()) return Err::session_stale;

  std::vector<ServiceResult> results;
  for (;;) {
    auto deq = detail::dequeue_message(m, s, rpc, /*from_tx=*/true, s.rpc_cpu_gsp.rx,
                                       rpc.meta_tx_write, rpc.meta_tx_read);
    if (!deq.ok()) {
      if (deq.error() == Err::queue_empty) break;
      return deq.error();
    }
    const auto& got = deq.value();
    ServiceResult r;
    r.seq = got.seq;
    uint32_t code;
    Bytes reply_data;
    uint32_t reply_fn = 0xFFFFFFFFu;
    if (got.message.ok()) {
      reply_fn = got.message.value().function;
      auto [c, data] = execute_gsp_command(m, s, got.message.value());
      code = c;
      reply_data = std::move(data);
      r.result = code == kStatusOk          ? "ok"
                 : code == kStatusAuth      ? "auth"
                 : code == kStatusReplay    ? "replay"
                 : code == kStatusBadArgs   ? "bad_args"
                 : code == kStatusUnknownFn ? "unknown_fn"
                                            : "error";
    } else {
      switch (got.message.error()) {
        case Err::auth: code = kStatusAuth; r.result = "auth"; break;
        case Err::replay: code = kStatusReplay; r.result = "replay"; break;
        default: code = kStatusChecksum; r.result = "checksum"; break;
      }
    }
    m.trace.emit("gsp", "rpc_service",
                 {{"seq", got.seq},
                  {"elemCount", got.elem_count},
                  {"result", r.result},
                  {"tampered", r.result != "ok"}});

    RpcMessage status;
    status.function = reply_fn;
    append_le32(status.params, code);
    append_le32(status.params, got.seq);
    append_bytes(status.params, reply_data);
    auto queued = queue_gsp_status(m, s, rpc, status);
    if (!queued.ok() && queued.error() == Err::queue_full)
      m.trace.emit("gsp", "rpc_status_dropped", {{"seq", got.seq}});
    results.push_back(std::move(r));
  }
  return results;
}

struct StatusMessage {
  uint32_t function = 0;
  uint32_t code = 0;
  uint32_t command_seq = 0;
  Bytes data;
};

inline Outcome<StatusMessage> parse_status(const RpcMessage& msg) {
  if (msg.params.size() < 8) return Err::auth;
  StatusMessage st;
  st.function = msg.function;
  st.code = get_le32(msg.params.data());
  st.command_seq = get_le32(msg.params.data() + 4);
  st.data.assign(msg.params.begin() + 8, msg.params.end());
  return st;
}

inline Outcome<RpcMessage> recv_status(Machine& m, Session& s, RpcChannel& rpc) {
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  auto deq = detail::dequeue_message(m, s, rpc, /*from_tx=*/false, s.rpc_gsp_cpu.rx,
                                     rpc.meta_rx_write, rpc.meta_rx_read);
  if (!deq.ok()) return deq.error();
  const auto& got = deq.value();
  std::string result = got.message.ok() ? "ok" : to_string(got.message.error());
  m.trace.emit("cvm_driver", "rpc_status", {{"seq", got.seq}, {"result", result}});
  if (!got.message.ok()) return got.message.error();
  return got.message.value();
}

}  // namespace gpucc::rpc
