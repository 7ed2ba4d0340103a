// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// BAR0 register space model. Each 4-byte word is classified as value / zeros /
// error by a data-driven manifest; a handful of words carry semantic roles
// (fault PUT cursors, doorbell). The shipped default manifests encode exact
// category counts whose percentages, truncated to two decimals, are
// 0.02 / 99.78 / 0.19 in CC mode and 7.94 / 80.25 elsewhere.

#include <json.hpp>

#include <fstream>
#include <map>
#include <vector>

#include "gpucc/common.hpp"
#include "gpucc/rng.hpp"

namespace gpucc {

constexpr size_t kBar0Words = 0x400000;          // 16 MiB of 4-byte words
constexpr uint64_t kBar0Size = kBar0Words * 4;

enum class Bar0Class : uint8_t { zeros = 0, value = 1, error = 2 };

enum class Bar0Role : uint8_t { none = 0, fault_put_replayable, fault_put_nonreplayable, doorbell };

constexpr uint64_t kFaultPutReplayableOffset = 0x00810000;
constexpr uint64_t kFaultPutNonReplayableOffset = 0x00810004;
constexpr uint64_t kDoorbellOffset = 0x00820000;

inline const char* to_string(Bar0Role r) {
  switch (r) {
    case Bar0Role::none: return "none";
    case Bar0Role::fault_put_replayable: return "fault_put_replayable";
    case Bar0Role::fault_put_nonreplayable: return "fault_put_nonreplayable";
    case Bar0Role::doorbell: return "doorbell";
  }
  return "none";
}

struct Bar0Manifest {
  struct Entry {
    uint32_t start_word;
    uint32_t count;
    Bar0Class cls;
  };
  struct RoleEntry {
    uint64_t offset;  // byte offset
    Bar0Role role;
  };

  std::string mode;  // "cc" or "noncc"
  std::vector<Entry> entries;
  std::vector<RoleEntry> roles;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = mode;
    j["total_words"] = kBar0Words;
    auto cls_name = [](Bar0Class c) {
      return c == Bar0Class::value ? "value" : c == Bar0Class::error ? "error" : "zeros";
    };
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries)
      j["entries"].push_back({{"start_word", e.start_word}, {"count", e.count}, {"class", cls_name(e.cls)}});
    j["roles"] = nlohmann::json::array();
    for (const auto& r : roles) j["roles"].push_back({{"offset", r.offset}, {"role", to_string(r.role)}});
    return j;
  }

  static Bar0Manifest from_json(const nlohmann::json& j) {
    Bar0Manifest m;
    m.mode = j.at("mode").get<std::string>();
    for (const auto& e : j.at("entries")) {
      std::string cls = e.at("class").get<std::string>();
      Bar0Class c = cls == "value" ? Bar0Class::value
                    : cls == "error" ? Bar0Class::error
                                     : Bar0Class::zeros;
      m.entries.push_back({e.at("start_word").get<uint32_t>(), e.at("count").get<uint32_t>(), c});
    }
    for (const auto& r : j.at("roles")) {
      std::string name = r.at("role").get<std::string>();
      Bar0Role role = name == "fault_put_replayable"      ? Bar0Role::fault_put_replayable
                      : name == "fault_put_nonreplayable" ? Bar0Role::fault_put_nonreplayable
                      : name == "doorbell"                ? Bar0Role::doorbell
                                                          : Bar0Role::none;
      m.roles.push_back({r.at("offset").get<uint64_t>(), role});
    }
    return m;
  }

  static Bar0Manifest load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read manifest: " + path);
    nlohmann::json j;
    f >> j;
    return from_json(j);
  }
};

// Expanded word-class table, built from a manifest.
class Bar0Map {
 public:
  Bar0Map() : cls_(kBar0Words, uint8_t(Bar0Class::zeros)) {}

  static Bar0Map from_manifest(const Bar0Manifest& m) {
    Bar0Map map;
    for (const auto& e : m.entries) {
      if (uint64_t(e.start_word) + e.count > kBar0Words) throw ConfigError("manifest entry out of range");
      std::fill_n(map.cls_.begin() + e.start_word, e.count, uint8_t(e.cls));
    }
    for (const auto& r : m.roles) {
      if (r.offset % 4 || r.offset >= kBar0Size) throw ConfigError("manifest role offset invalid");
      map.cls_[r.offset / 4] = uint8_t(Bar0Class::value);
      map.roles_[uint32_t(r.offset / 4)] = r.role;
    }
    return map;
  }

  Bar0Class classify(uint32_t word_index) const { return Bar0Class(cls_[word_index]); }

  Bar0Role role(uint32_t word_index) const {
    auto it = roles_.find(word_index);
    return it == roles_.end() ? Bar0Role::none : it->second;
  }

  struct Counts {
    uint64_t values = 0, zeros = 0, errors = 0;
  };
  Counts counts() const {
    Counts c;
    for (uint8_t b : cls_) {
      switch (Bar0Class(b)) {
        case Bar0Class::value: ++c.values; break;
        case Bar0Class::zeros: ++c.zeros; break;
        case Bar0Class::error: ++c.errors; break;
      }
    }
    return c;
  }

 private:
  std::vector<uint8_t> cls_;
  std::map<uint32_t, Bar0Role> roles_;
};

// Deterministic register content for plain value-class words. Never zero and
// never 0xbadxxxxx so the audit classification stays unambiguous.
inline uint32_t bar0_word_content(uint32_t word_index) {
  uint32_t v = uint32_t(mix64(0xba50ba50ULL + word_index));
  if (v == 0) v = 1;
  if ((v >> 20) == 0xbad) v ^= 0x80000000u;
  return v;
}

inline uint32_t bar0_error_word(uint32_t word_index) { return 0xbad00000u | (word_index & 0xFFFFFu); }

namespace detail {

inline std::vector<Bar0Manifest::RoleEntry> default_roles() {
  return {{kFaultPutReplayableOffset, Bar0Role::fault_put_replayable},
          {kFaultPutNonReplayableOffset, Bar0Role::fault_put_nonreplayable},
          {kDoorbellOffset, Bar0Role::doorbell}};
}

inline std::vector<Bar0Manifest::Entry> coalesce(const std::vector<uint8_t>& cls) {
  std::vector<Bar0Manifest::Entry> out;
  size_t i = 0;
  while (i < cls.size()) {
    if (Bar0Class(cls[i]) == Bar0Class::zeros) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < cls.size() && cls[j] == cls[i]) ++j;
    out.push_back({uint32_t(i), uint32_t(j - i), Bar0Class(cls[i])});
    i = j;
  }
  return out;
}

}  // namespace detail

// Default CC-mode map: 1042 value words (including the three role registers),
// 7970 error words in spread runs, everything else hidden as zeros.
inline Bar0Manifest default_cc_manifest() {
  std::vector<uint8_t> cls(kBar0Words, uint8_t(Bar0Class::zeros));
  auto roles = detail::default_roles();
  for (const auto& r : roles) cls[r.offset / 4] = uint8_t(Bar0Class::value);

  constexpr uint32_t kErrorRuns = 10, kErrorRunLen = 797;  // 7970 total
  for (uint32_t k = 0; k < kErrorRuns; ++k) {
    uint32_t base = 0x40000 + k * 0x60000;
    for (uint32_t w = base; w < base + kErrorRunLen; ++w) cls[w] = uint8_t(Bar0Class::error);
  }

  constexpr uint32_t kPlainValues = 1039;  // + 3 roles = 1042
  uint32_t placed = 0;
  for (uint32_t i = 0; placed < kPlainValues; ++i) {
    uint32_t w = (i * 4027u + 257u) % kBar0Words;
    while (cls[w] != uint8_t(Bar0Class::zeros)) w = (w + 1) % kBar0Words;
    cls[w] = uint8_t(Bar0Class::value);
    ++placed;
  }

  Bar0Manifest m;
  m.mode = "cc";
  m.roles = roles;
  m.entries = detail::coalesce(cls);
  return m;
}

// Default non-CC map: 333028 value words, 3365929 error words, rest zeros.
inline Bar0Manifest default_noncc_manifest() {
  std::vector<uint8_t> cls(kBar0Words, uint8_t(Bar0Class::zeros));
  auto roles = detail::default_roles();
  for (const auto& r : roles) cls[r.offset / 4] = uint8_t(Bar0Class::value);

  uint32_t placed = 0;
  for (uint32_t w = 0; placed < 333025; ++w) {
    if (cls[w] == uint8_t(Bar0Class::zeros)) {
      cls[w] = uint8_t(Bar0Class::value);
      ++placed;
    }
  }
  placed = 0;
  for (uint32_t w = 0x80000; placed < 3365929; ++w) {
    if (cls[w] == uint8_t(Bar0Class::zeros)) {
      cls[w] = uint8_t(Bar0Class::error);
      ++placed;
    }
  }

  Bar0Manifest m;
  m.mode = "noncc";
  m.roles = roles;
  m.entries = detail::coalesce(cls);
  return m;
}

}  // namespace gpucc
