// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Offline trace analysis: aggregates a run's JSONL trace into a leak-budget
// table (plaintext vs sealed bytes per surface), attack-outcome counts, and
// timing statistics.

#include <map>
#include <sstream>

#include "gpucc/trace.hpp"

namespace gpucc::report {

struct ParseError : ConfigError {
  size_t line;
  explicit ParseError(size_t line_no)
      : ConfigError("trace parse error at line " + std::to_string(line_no)), line(line_no) {}
};

struct SurfaceBytes {
  uint64_t plaintext = 0;
  uint64_t sealed = 0;
};

struct Summary {
  uint64_t events = 0;
  std::map<std::string, SurfaceBytes> surfaces;          // per leak surface
  std::map<std::string, std::map<std::string, uint64_t>> attacks;  // class -> outcome -> n
  std::map<uint64_t, std::pair<uint64_t, double>> timing;          // size -> (count, mean us)
  std::map<std::string, uint64_t> verdicts;
  std::vector<std::string> leak_surfaces_plaintext;
  uint64_t scan_hits = 0;
  bool has_scan = false;
  double infer_accuracy = -1.0;
  double timing_accuracy = -1.0;
};

inline std::vector<Json> parse_jsonl(const std::string& text) {
  std::vector<Json> out;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(line_no);
    out.push_back(std::move(j));
  }
  return out;
}

inline Summary summarize(const std::vector<Json>& events) {
  Summary s;
  s.events = events.size();
  auto add_bytes = [&](const std::string& surface, uint64_t n, bool sealed) {
    if (sealed)
      s.surfaces[surface].sealed += n;
    else
      s.surfaces[surface].plaintext += n;
  };

  std::map<uint64_t, std::pair<uint64_t, double>> timing_acc;
  for (const Json& ev : events) {
    const std::string name = ev.value("event", "");
    const Json& meta = ev.contains("meta") ? ev.at("meta") : Json::object();

    if (name == "rpc_send" || name == "rpc_enqueue_status") {
      bool sealed_header = meta.value("sealed_header", false);
      add_bytes("rpc_elem_header", meta.value("header_bytes", uint64_t(0)), sealed_header);
      add_bytes("rpc_payload", meta.value("payload_bytes", uint64_t(0)), true);
    } else if (name == "dma_stage_in" || name == "dma_stage_out") {
      add_bytes("dma_staging", meta.value("bytes", uint64_t(0)), true);
    } else if (name == "sec2_push") {
      add_bytes("sec2_pushbuffer", meta.value("bytes", uint64_t(0)), meta.value("sealed", false));
    } else if (name == "uvm_push_stage") {
      add_bytes("uvm_pushbuffer", meta.value("bytes", uint64_t(0)), true);
    } else if (name == "run_push_stage") {
      add_bytes("wlc_run_push", 1, true);
    } else if (name == "semaphore_update") {
      add_bytes("semaphores", 8, meta.value("sealed", false));
    } else if (name == "fault_raise") {
      add_bytes("fault_packets", 64, true);
    } else if (name == "attack_replay") {
      s.attacks[meta.value("class", std::string("?"))][meta.value("outcome", std::string("?"))] += 1;
    } else if (name == "attack_scan") {
      s.has_scan = true;
      s.scan_hits = meta.value("hits", uint64_t(0));
    } else if (name == "attack_infer") {
      s.infer_accuracy = meta.value("accuracy", -1.0);
    } else if (name == "attack_timing") {
      s.timing_accuracy = meta.value("accuracy", -1.0);
    } else if (name == "attest_verdict") {
      s.verdicts[meta.value("result", std::string("?"))] += 1;
    } else if (name == "leak_check") {
      if (meta.value("plaintext", false))
        s.leak_surfaces_plaintext.push_back(meta.value("surface", std::string("?")));
    } else if (name == "dma_read" || name == "dma_write") {
      uint64_t size = meta.value("size", uint64_t(0));
      auto& [count, mean] = timing_acc[size];
      double us = meta.value("micros", 0.0);
      mean = (mean * double(count) + us) / double(count + 1);
      count += 1;
    }
  }
  s.timing = std::move(timing_acc);
  return s;
}

inline std::string render_text(const Summary& s) {
  std::ostringstream out;
  out << "events: " << s.events << "\n";
  if (!s.surfaces.empty()) {
    out << "\nleak budget (bytes seen on the untrusted interconnect)\n";
    out << "  surface                plaintext      sealed\n";
    for (const auto& [name, b] : s.surfaces) {
      char buf[96];
      snprintf(buf, sizeof buf, "  %-22s %9llu  %10llu\n", name.c_str(),
               (unsigned long long)b.plaintext, (unsigned long long)b.sealed);
      out << buf;
    }
  }
  if (!s.leak_surfaces_plaintext.empty()) {
    out << "\nhost-legible plaintext surfaces:\n";
    for (const auto& name : s.leak_surfaces_plaintext) out << "  - " << name << "\n";
  }
  if (!s.attacks.empty()) {
    out << "\nattack outcomes\n";
    for (const auto& [cls, outcomes] : s.attacks) {
      out << "  " << cls << ":";
      for (const auto& [outcome, n] : outcomes) out << " " << outcome << "=" << n;
      out << "\n";
    }
  }
  if (!s.timing.empty()) {
    out << "\ntransfer timing (size: count, mean us)\n";
    for (const auto& [size, cm] : s.timing) {
      char buf[64];
      snprintf(buf, sizeof buf, "  %6llu: %6llu  %8.2f\n", (unsigned long long)size,
               (unsigned long long)cm.first, cm.second);
      out << buf;
    }
  }
  if (s.has_scan) out << "\nscan hits: " << s.scan_hits << "\n";
  if (s.infer_accuracy >= 0) out << "inference accuracy: " << s.infer_accuracy << "\n";
  if (s.timing_accuracy >= 0) out << "timing classifier accuracy: " << s.timing_accuracy << "\n";
  if (!s.verdicts.empty()) {
    out << "attestation verdicts:";
    for (const auto& [v, n] : s.verdicts) out << " " << v << "=" << n;
    out << "\n";
  }
  return out.str();
}

}  // namespace gpucc::report
