// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Bulk CPU<->GSP transfers bounced through the staging buffer. Plaintext only
// ever exists in CVM private memory and the CPR; the staged copy is sealed.
// A parameterized latency model reproduces the bimodal timing channel and its
// constant-time mitigation.

#include <functional>

#include "gpucc/rpc.hpp"

namespace gpucc::dma {

enum class Direction : uint8_t { read_cpr, write_cpr };

struct TransferRequest {
  Direction direction = Direction::read_cpr;
  uint64_t cpr_addr = 0;
  uint64_t staging_addr = 0;
  uint64_t size = 0;
};

struct TimingModel {
  double base_fast = 40.0;   // us
  double base_slow = 85.0;   // us
  double p_slow = 0.35;
  double per_byte = 0.02;    // us per byte
  double noise_sigma = 3.0;  // us
};

struct TimingSample {
  std::string op;  // "read" | "write"
  uint64_t size = 0;
  double micros = 0.0;
};

inline double sample_latency(const TimingModel& model, uint64_t size, Rng& rng,
                             bool constant_time = false) {
  double us;
  if (constant_time) {
    // Pad every invocation to the worst-case transfer cost.
    us = model.base_slow + model.per_byte * 4096.0 + rng.gaussian(0.0, model.noise_sigma);
  } else {
    double base = rng.chance(model.p_slow) ? model.base_slow : model.base_fast;
    us = base + model.per_byte * double(size) + rng.gaussian(0.0, model.noise_sigma);
  }
  return us < 0.0 ? 0.0 : us;
}

using TamperHook = std::function<void(Machine&)>;

namespace detail {

inline Outcome<Unit> check_request(const Machine& m, const TransferRequest& req) {
  if (!m.cc_mode_active) return Err::not_booted;
  if (!m.cpr.contains(req.cpr_addr, req.size)) return Err::out_of_range;
  if (!m.shared_staging.contains(req.staging_addr, 36 + req.size)) return Err::out_of_range;
  return Unit{};
}

inline Err status_to_err(uint32_t code) {
  switch (code) {
    case rpc::kStatusAuth: return Err::auth;
    case rpc::kStatusReplay: return Err::replay;
    case rpc::kStatusBadArgs: return Err::out_of_range;
    default: return Err::rpc_failure;
  }
}

// Issue the transfer command and pull its status back off the RX queue.
inline Outcome<uint32_t> transfer_rpc(Machine& m, Session& s, rpc::RpcChannel& ch, uint32_t function,
                                      const TransferRequest& req) {
  rpc::RpcMessage msg;
  msg.function = function;
  append_le64(msg.params, req.cpr_addr);
  append_le64(msg.params, req.staging_addr);
  append_le64(msg.params, req.size);
  auto seq = rpc::send_command(m, s, ch, msg);
  if (!seq.ok()) return seq.error();
  auto svc = rpc::gsp_service(m, s, ch);
  if (!svc.ok()) return svc.error();
  auto status = rpc::recv_status(m, s, ch);
  if (!status.ok()) return status.error();
  auto parsed = rpc::parse_status(status.value());
  if (!parsed.ok()) return parsed.error();
  return parsed.value().code;
}

}  // namespace detail

inline Outcome<std::pair<Bytes, TimingSample>> read_cpr(Machine& m, Session& s, rpc::RpcChannel& ch,
                                                        const TransferRequest& req, Rng& rng,
                                                        const TimingModel& model,
                                                        bool constant_time = false,
                                                        const TamperHook& between = {}) {
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  if (req.direction != Direction::read_cpr) return Err::out_of_range;
  if (auto c = detail::check_request(m, req); !c.ok()) return c.error();

  TimingSample sample{"read", req.size, sample_latency(model, req.size, rng, constant_time)};

  rpc::RpcMessage msg;
  msg.function = rpc::kCmdMemRead;
  append_le64(msg.params, req.cpr_addr);
  append_le64(msg.params, req.staging_addr);
  append_le64(msg.params, req.size);
  auto seq = rpc::send_command(m, s, ch, msg);
  if (!seq.ok()) return seq.error();
  auto svc = rpc::gsp_service(m, s, ch);
  if (!svc.ok()) return svc.error();
  if (between) between(m);  // host window between GSP staging write and CVM read
  auto status = rpc::recv_status(m, s, ch);
  if (!status.ok()) return status.error();
  auto parsed = rpc::parse_status(status.value());
  if (!parsed.ok()) return parsed.error();
  if (parsed.value().code != rpc::kStatusOk) return detail::status_to_err(parsed.value().code);

  Bytes raw = m.mem_read(req.staging_addr, 36 + req.size);
  auto blob = SealedBlob::deserialize(raw);
  if (!blob.ok()) return Err::auth;
  auto plain = open(s.dma_gsp_cpu.rx, s.keys(), blob.value(), blob.value().aad);
  if (!plain.ok()) {
    if (plain.error() == Err::auth &&
        blob.value().iv_counter() == s.dma_gsp_cpu.rx.recv_last_accepted + 1)
      s.dma_gsp_cpu.rx.recv_last_accepted += 1;  // tampered-in-transit blob burns its IV
    return plain.error();
  }
  m.trace.emit("cvm_driver", "dma_read",
               {{"size", req.size}, {"micros", sample.micros}, {"sealed", true}});
  return std::make_pair(std::move(plain).value(), sample);
}

inline Outcome<TimingSample> write_cpr(Machine& m, Session& s, rpc::RpcChannel& ch,
                                       const TransferRequest& req, ByteView data, Rng& rng,
                                       const TimingModel& model, bool constant_time = false,
                                       const TamperHook& between = {}) {
  if (!s.check_fresh(m).ok()) return Err::session_stale;
  if (req.direction != Direction::write_cpr) return Err::out_of_range;
  if (data.size() != req.size) throw std::invalid_argument("size mismatch");
  if (auto c = detail::check_request(m, req); !c.ok()) return c.error();

  TimingSample sample{"write", req.size, sample_latency(model, req.size, rng, constant_time)};

  auto blob = seal(s.dma_cpu_gsp.tx, s.keys(), data, {});
  if (!blob.ok()) return blob.error();
  m.mem_write(req.staging_addr, blob.value().serialize());
  m.trace.emit("cvm_driver", "dma_stage_in", {{"bytes", req.size}, {"sealed", true}},
               Visibility::host_visible);
  if (between) between(m);  // host window between CVM staging write and GSP read

  auto code = detail::transfer_rpc(m, s, ch, rpc::kCmdMemWrite, req);
  if (!code.ok()) return code.error();
  if (code.value() != rpc::kStatusOk) return detail::status_to_err(code.value());
  m.trace.emit("cvm_driver", "dma_write",
               {{"size", req.size}, {"micros", sample.micros}, {"sealed", true}});
  return sample;
}

inline std::string timing_csv(const std::vector<TimingSample>& samples) {
  std::string out = "op,size,micros\n";
  char buf[64];
  for (const auto& smp : samples) {
    snprintf(buf, sizeof buf, "%s,%llu,%.3f\n", smp.op.c_str(),
             (unsigned long long)smp.size, smp.micros);
    out += buf;
  }
  return out;
}

inline std::vector<TimingSample> parse_timing_csv(const std::string& text) {
  std::vector<TimingSample> out;
  size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw ConfigError("bad csv row: " + line);
    TimingSample smp;
    smp.op = line.substr(0, c1);
    smp.size = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
    smp.micros = std::stod(line.substr(c2 + 1));
    out.push_back(std::move(smp));
  }
  return out;
}

}  // namespace gpucc::dma
