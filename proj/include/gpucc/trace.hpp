// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "gpucc/common.hpp"

namespace gpucc {

using Json = nlohmann::json;

enum class Visibility : uint8_t { host_visible, private_side };

struct TraceEvent {
  uint64_t t = 0;
  std::string actor;
  std::string name;
  Json meta;  // object; key order is canonical (lexicographic) on dump
  Visibility visibility = Visibility::private_side;

  Json to_json() const {
    Json j;
    j["t"] = t;
    j["actor"] = actor;
    j["event"] = name;
    j["visibility"] = visibility == Visibility::host_visible ? "host_visible" : "private";
    j["meta"] = meta.is_null() ? Json::object() : meta;
    return j;
  }
};

// Append-only event log with a logical clock. One per machine.
class Trace {
 public:
  Trace() {
    if (const char* lvl = std::getenv("GPUCC_SIM_TRACE_LEVEL")) echo_level_ = std::atoi(lvl);
  }

  uint64_t emit(std::string actor, std::string name, Json meta = Json::object(),
                Visibility vis = Visibility::private_side) {
    TraceEvent ev{next_t_++, std::move(actor), std::move(name), std::move(meta), vis};
    if (echo_level_ >= 2 || (echo_level_ == 1 && ev.visibility == Visibility::host_visible))
      std::cerr << "[trace] " << ev.to_json().dump() << "\n";
    events_.push_back(std::move(ev));
    return events_.back().t;
  }

  const std::vector<TraceEvent>& events() const { return events_; }
  size_t size() const { return events_.size(); }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& ev : events_) {
      out += ev.to_json().dump();
      out += '\n';
    }
    return out;
  }

  void write_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write trace file: " + path);
    f << to_jsonl();
  }

 private:
  std::vector<TraceEvent> events_;
  uint64_t next_t_ = 0;
  int echo_level_ = 0;
};

}  // namespace gpucc
