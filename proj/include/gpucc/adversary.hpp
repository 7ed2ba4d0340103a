// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Executable host-level attacks: the self-referential address-table scan,
// ciphertext replay, plaintext-metadata inference over staging snapshots,
// timing classification, the BAR0 audit, and raw tamper injection. Everything
// here works from host-visible bytes only.

#include <algorithm>

#include "gpucc/dma.hpp"

namespace gpucc::adversary {

struct ScanHit {
  uint64_t page_addr = 0;
};

// 4096-byte-stride scan for a page whose first 8 bytes equal its own address.
inline std::vector<ScanHit> scan_for_address_table(ByteView dump, uint64_t base_addr,
                                                   uint64_t stride = 4096) {
  if (stride == 0 || dump.size() % stride != 0)
    throw std::invalid_argument("dump length must be a multiple of the stride");
  std::vector<ScanHit> hits;
  for (uint64_t off = 0; off + 8 <= dump.size(); off += stride) {
    uint64_t value = get_le64(dump.data() + off);
    if (value == base_addr + off) hits.push_back({base_addr + off});
  }
  return hits;
}

enum class AttackOutcome : uint8_t { rejected_replay, rejected_auth, accepted };

inline const char* to_string(AttackOutcome o) {
  switch (o) {
    case AttackOutcome::rejected_replay: return "rejected_replay";
    case AttackOutcome::rejected_auth: return "rejected_auth";
    case AttackOutcome::accepted: return "accepted";
  }
  return "?";
}

template <typename T>
inline AttackOutcome classify_outcome(const Outcome<T>& result) {
  if (result.ok()) return AttackOutcome::accepted;
  return result.error() == Err::replay ? AttackOutcome::rejected_replay : AttackOutcome::rejected_auth;
}

// ---- RPC activity inference from host-visible staging snapshots ----

struct StagingSnapshot {
  uint64_t base = 0;  // staging base address
  Bytes data;
};

struct InferredElement {
  uint32_t seq = 0;
  uint32_t elem_count = 0;
};

struct InferenceReport {
  uint64_t send_count = 0;
  uint64_t recv_count = 0;
  std::vector<InferredElement> elements;  // one per observed TX message
};

// Parse what a host can parse: the plaintext address table, the queue header
// cursors, and the element headers of slots that advanced between snapshots.
// Under encrypt_rpc_metadata these bytes are ciphertext and the numbers come
// out as noise; the function does not know or care.
inline InferenceReport infer_rpc_activity(const std::vector<StagingSnapshot>& snapshots,
                                          uint64_t table_addr) {
  InferenceReport report;
  if (snapshots.empty()) return report;

  auto read_u64 = [](const StagingSnapshot& s, uint64_t addr) {
    return get_le64(s.data.data() + (addr - s.base));
  };
  auto read_u32 = [](const StagingSnapshot& s, uint64_t addr) {
    return get_le32(s.data.data() + (addr - s.base));
  };

  const StagingSnapshot& first = snapshots.front();
  uint64_t tx_header = read_u64(first, table_addr + 8);
  std::array<uint64_t, 63> tx_elems{};
  for (size_t i = 0; i < 63; ++i) tx_elems[i] = read_u64(first, table_addr + 8 * (2 + i));
  uint64_t rx_header = read_u64(first, table_addr + 8 * 65);

  uint32_t prev_tx_write = read_u32(first, tx_header + 4) % 63;
  uint32_t prev_rx_write = read_u32(first, rx_header + 4) % 63;

  for (size_t si = 1; si < snapshots.size(); ++si) {
    const StagingSnapshot& snap = snapshots[si];
    uint32_t tx_write = read_u32(snap, tx_header + 4) % 63;
    uint32_t rx_write = read_u32(snap, rx_header + 4) % 63;

    uint32_t advanced = (tx_write + 63 - prev_tx_write) % 63;
    report.recv_count += (rx_write + 63 - prev_rx_write) % 63;

    // Walk the freshly written slots; the first header's elemCount groups them.
    uint32_t slot = prev_tx_write;
    while (advanced > 0) {
      uint64_t elem_addr = tx_elems[slot % 63];
      InferredElement e;
      e.seq = read_u32(snap, elem_addr + 36);
      e.elem_count = read_u32(snap, elem_addr + 40);
      report.elements.push_back(e);
      report.send_count += 1;
      uint32_t step = e.elem_count >= 1 && e.elem_count <= advanced ? e.elem_count : 1;
      slot = (slot + step) % 63;
      advanced -= step;
    }
    prev_tx_write = tx_write;
    prev_rx_write = rx_write;
  }
  return report;
}

// ---- timing classifier ----

struct TimingClassifier {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Best single threshold separating size==4096 from size<=256 on micros.
inline Outcome<TimingClassifier> classify_timing(const std::vector<dma::TimingSample>& samples) {
  std::vector<std::pair<double, bool>> points;  // micros, is_large
  size_t large = 0, small = 0;
  for (const auto& s : samples) {
    if (s.size == 4096) {
      points.push_back({s.micros, true});
      ++large;
    } else if (s.size <= 256) {
      points.push_back({s.micros, false});
      ++small;
    }
  }
  if (large < 50 || small < 50) return Err::insufficient_samples;

  std::sort(points.begin(), points.end());
  // Sweep: classify "large" when micros > threshold. Start with the threshold
  // below all points (everything classified large).
  size_t correct = large;
  size_t best_correct = correct;
  double best_threshold = points.front().first - 1.0;
  for (size_t i = 0; i < points.size(); ++i) {
    correct += points[i].second ? -1 : +1;
    if (correct > best_correct) {
      best_correct = correct;
      best_threshold =
          i + 1 < points.size() ? (points[i].first + points[i + 1].first) / 2.0 : points[i].first + 1.0;
    }
  }
  return TimingClassifier{best_threshold, double(best_correct) / double(points.size())};
}

// ---- BAR0 audit ----

struct Bar0Stats {
  uint64_t values = 0;
  uint64_t zeros = 0;
  uint64_t errors = 0;
  uint64_t total = kBar0Words;

  double pct_trunc(uint64_t count) const {
    return std::floor(double(count) / double(total) * 10000.0) / 100.0;
  }
  Json to_json() const {
    return {{"values", values},       {"zeros", zeros},
            {"errors", errors},       {"total", total},
            {"values_pct", pct_trunc(values)}, {"zeros_pct", pct_trunc(zeros)},
            {"errors_pct", pct_trunc(errors)}};
  }
};

// Full 0x400000-word scan in 4-byte strides through the live register policy.
inline Bar0Stats audit_bar0(Machine& m) {
  Bar0Stats stats;
  for (uint32_t w = 0; w < kBar0Words; ++w) {
    AccessResult r = m.bar0_read_word(w);
    switch (r.kind) {
      case AccessResult::Kind::value: ++stats.values; break;
      case AccessResult::Kind::zeros: ++stats.zeros; break;
      case AccessResult::Kind::error: ++stats.errors; break;
      default: break;
    }
  }
  m.trace.emit("adversary", "bar0_audit", stats.to_json(), Visibility::host_visible);
  return stats;
}

// ---- tamper injection ----

struct Mutation {
  uint64_t addr = 0;
  uint64_t bit = 0;            // bit index within the byte span at addr
  std::optional<Bytes> bytes;  // overwrite instead of bit flip when set
};

inline Outcome<Machine::WriteOutcome> tamper(Machine& m, const Mutation& mut) {
  if (mut.bytes) {
    auto r = m.host_write(mut.addr, *mut.bytes);
    if (r.ok())
      m.trace.emit("adversary", "tamper",
                   {{"addr", mut.addr},
                    {"bytes", mut.bytes->size()},
                    {"result", r.value() == Machine::WriteOutcome::ok ? "ok" : "fault"}},
                   Visibility::host_visible);
    return r;
  }
  uint64_t byte_addr = mut.addr + mut.bit / 8;
  auto cur = m.host_read(byte_addr, 1);
  if (!cur.ok()) return cur.error();
  if (cur.value().kind != AccessResult::Kind::value) {
    m.trace.emit("adversary", "tamper", {{"addr", mut.addr}, {"result", "fault"}},
                 Visibility::host_visible);
    return Machine::WriteOutcome::fault;
  }
  Bytes flipped = cur.value().bytes;
  flipped[0] ^= uint8_t(1u << (mut.bit % 8));
  auto r = m.host_write(byte_addr, flipped);
  if (r.ok())
    m.trace.emit("adversary", "tamper",
                 {{"addr", mut.addr},
                  {"bit", mut.bit},
                  {"result", r.value() == Machine::WriteOutcome::ok ? "ok" : "fault"}},
                 Visibility::host_visible);
  return r;
}

}  // namespace gpucc::adversary
