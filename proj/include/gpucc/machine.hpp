// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The simulated machine: CVM private memory, the shared staging buffer, GPU
// memory split into CPR and unprotected vidmem, and the BAR0 register space.
// All cross-boundary data flows through these byte stores, so the host view
// really is what an adversary on the host would read.

#include <optional>

#include "gpucc/bar0.hpp"
#include "gpucc/common.hpp"
#include "gpucc/trace.hpp"

namespace gpucc {

enum class RegionClass : uint8_t { cvm_private, shared, cpr, vidmem };

inline const char* to_string(RegionClass c) {
  switch (c) {
    case RegionClass::cvm_private: return "cvm_private";
    case RegionClass::shared: return "shared_staging";
    case RegionClass::cpr: return "cpr";
    case RegionClass::vidmem: return "vidmem";
  }
  return "?";
}

struct Region {
  uint64_t base = 0;
  uint64_t size = 0;
  RegionClass cls = RegionClass::shared;
  Bytes content;

  bool contains(uint64_t addr, uint64_t len) const {
    return addr >= base && len <= size && addr - base <= size - len;
  }
  uint64_t end() const { return base + size; }
};

struct AccessResult {
  enum class Kind : uint8_t { value, zeros, error, fault, opaque } kind = Kind::fault;
  uint32_t word = 0;  // BAR0 reads
  Bytes bytes;        // memory reads

  static AccessResult value_word(uint32_t w) { return {Kind::value, w, {}}; }
  static AccessResult zeros() { return {Kind::zeros, 0, {}}; }
  static AccessResult error_word(uint32_t w) { return {Kind::error, w, {}}; }
  static AccessResult fault() { return {Kind::fault, 0, {}}; }
  static AccessResult value_bytes(Bytes b) { return {Kind::value, 0, std::move(b)}; }
  static AccessResult opaque(Bytes b) { return {Kind::opaque, 0, std::move(b)}; }
};

enum class Actor : uint8_t { host, cvm };

enum class BootState : uint8_t { cold, fsp_booted, gsp_booted, sec2_booted, failed };
enum class BootStage : uint8_t { fsp, gsp_fmc, gsp_rm, sec2 };

inline const char* to_string(BootStage s) {
  switch (s) {
    case BootStage::fsp: return "fsp";
    case BootStage::gsp_fmc: return "gsp_fmc";
    case BootStage::gsp_rm: return "gsp_rm";
    case BootStage::sec2: return "sec2";
  }
  return "?";
}

inline const char* to_string(BootState s) {
  switch (s) {
    case BootState::cold: return "cold";
    case BootState::fsp_booted: return "fsp_booted";
    case BootState::gsp_booted: return "gsp_booted";
    case BootState::sec2_booted: return "sec2_booted";
    case BootState::failed: return "failed";
  }
  return "?";
}

struct MachineConfig {
  uint64_t cvm_private_size = 48ull << 20;
  uint64_t staging_size = 16ull << 20;
  uint64_t gpu_mem_size = 64ull << 20;
  double cpr_fraction = 0.9;

  // 0 = auto layout: cvm at 0, staging right after, GPU aperture at 4 GiB.
  uint64_t cvm_base = 0;
  uint64_t staging_base = 0;
  uint64_t gpu_base = 0;

  std::string bar0_manifest_cc = "builtin";     // or a manifest file path
  std::string bar0_manifest_noncc = "builtin";

  uint32_t fault_ring_capacity = 16;
  uint32_t gpfifo_capacity = 32;

  uint64_t provision_seed = 7;                  // device identity material
  uint64_t measurement_salt = 1;                // config measurement slots
  std::string driver_version = "550.54.15";
  std::string vbios_version = "96.00.61.00.01";
};

struct StagingAllocation {
  uint64_t addr;
  uint64_t size;
  std::string label;
};

// GSP-side fault delivery state; the PUT cursors are mirrored into BAR0.
struct GspFaultState {
  bool registered = false;
  uint64_t replayable_addr = 0, non_replayable_addr = 0;
  uint32_t replayable_cap = 0, non_replayable_cap = 0;
  uint32_t replayable_put = 0, non_replayable_put = 0;
};

class Machine {
 public:
  MachineConfig config;
  Region cvm_private, shared_staging, cpr, vidmem;
  Bar0Map bar0_cc, bar0_noncc;

  bool cc_mode_active = false;
  bool cc_mode_pending = false;
  BootState boot_state = BootState::cold;
  std::optional<BootStage> failed_stage;
  std::vector<Bytes> boot_measurements;  // 48-byte hashes, boot order
  uint64_t epoch = 0;
  bool bus_visible = true;
  bool attestation_ready = false;

  GspFaultState gsp_faults;
  uint64_t doorbell_count = 0;
  bool uvm_sec2_channel_exists = false;

  Trace trace;

  // ---- trusted accessors (simulation internals, not the host view) ----

  Region& region_at(uint64_t addr, uint64_t len) {
    for (Region* r : regions())
      if (r->contains(addr, len)) return *r;
    throw std::out_of_range("address outside all regions");
  }

  Bytes mem_read(uint64_t addr, uint64_t len) {
    Region& r = region_at(addr, len);
    return Bytes(r.content.begin() + (addr - r.base), r.content.begin() + (addr - r.base) + len);
  }

  void mem_write(uint64_t addr, ByteView data) {
    Region& r = region_at(addr, data.size());
    std::copy(data.begin(), data.end(), r.content.begin() + (addr - r.base));
  }

  void mem_fill(uint64_t addr, uint64_t len, uint8_t value) {
    Region& r = region_at(addr, len);
    std::fill_n(r.content.begin() + (addr - r.base), len, value);
  }

  // ---- host (adversary) view ----

  Outcome<AccessResult> host_read(uint64_t addr, uint64_t len) {
    Region* r = find_region(addr, len);
    if (!r) return Err::out_of_range;
    switch (r->cls) {
      case RegionClass::shared:
      case RegionClass::vidmem:
        return AccessResult::value_bytes(
            Bytes(r->content.begin() + (addr - r->base), r->content.begin() + (addr - r->base) + len));
      case RegionClass::cpr:
        if (cc_mode_active) return AccessResult::fault();
        return AccessResult::value_bytes(
            Bytes(r->content.begin() + (addr - r->base), r->content.begin() + (addr - r->base) + len));
      case RegionClass::cvm_private:
        return AccessResult::opaque(private_view(addr, len));
    }
    return Err::out_of_range;
  }

  enum class WriteOutcome : uint8_t { ok, fault };

  Outcome<WriteOutcome> host_write(uint64_t addr, ByteView data) {
    Region* r = find_region(addr, data.size());
    if (!r) return Err::out_of_range;
    switch (r->cls) {
      case RegionClass::shared:
      case RegionClass::vidmem:
        std::copy(data.begin(), data.end(), r->content.begin() + (addr - r->base));
        return WriteOutcome::ok;
      case RegionClass::cpr:
        if (cc_mode_active) return WriteOutcome::fault;
        std::copy(data.begin(), data.end(), r->content.begin() + (addr - r->base));
        return WriteOutcome::ok;
      case RegionClass::cvm_private:
        return WriteOutcome::fault;
    }
    return Err::out_of_range;
  }

  // Keyed PRF view of CVM private memory: what the host sees through CPU
  // memory encryption. Depends on address and epoch only, never on content.
  Bytes private_view(uint64_t addr, uint64_t len) const {
    Bytes out(len);
    uint64_t key = mix64(0xc0ffee ^ (epoch * 0x9e3779b97f4a7c15ULL));
    for (uint64_t i = 0; i < len; ++i) {
      uint64_t a = addr + i;
      uint64_t word = mix64(key ^ (a & ~7ULL));
      out[i] = uint8_t(word >> (8 * (a & 7)));
    }
    return out;
  }

  // ---- BAR0 ----

  Outcome<AccessResult> bar0_read(uint64_t offset, Actor) {
    if (offset % 4) return Err::unaligned;
    if (offset >= kBar0Size) return Err::out_of_range;
    return bar0_read_word(uint32_t(offset / 4));
  }

  AccessResult bar0_read_word(uint32_t word_index) {
    const Bar0Map& map = cc_mode_active ? bar0_cc : bar0_noncc;
    switch (map.classify(word_index)) {
      case Bar0Class::zeros:
        return AccessResult::zeros();
      case Bar0Class::error:
        return AccessResult::error_word(bar0_error_word(word_index));
      case Bar0Class::value:
        switch (map.role(word_index)) {
          case Bar0Role::fault_put_replayable:
            return AccessResult::value_word(0x40000000u | gsp_faults.replayable_put);
          case Bar0Role::fault_put_nonreplayable:
            return AccessResult::value_word(0x40000000u | gsp_faults.non_replayable_put);
          case Bar0Role::doorbell:
            return AccessResult::value_word(0x40000000u | uint32_t(doorbell_count & 0xFFFFF));
          case Bar0Role::none:
            return AccessResult::value_word(bar0_word_content(word_index));
        }
    }
    return AccessResult::zeros();
  }

  // ---- mode latching ----

  void set_cc_mode(bool enable) {
    cc_mode_pending = enable;
    trace.emit("device_root", "set_cc_mode", {{"pending", enable}, {"active", cc_mode_active}});
  }

  // ---- allocators (driver-managed staging, GSP-managed CPR) ----

  uint64_t staging_alloc(const std::string& label, uint64_t size, uint64_t align = kPageSize) {
    uint64_t addr = align_up(staging_brk_, align);
    if (addr + size > shared_staging.end()) throw ConfigError("staging exhausted: " + label);
    staging_brk_ = addr + size;
    staging_allocs_.push_back({addr, size, label});
    return addr;
  }

  uint64_t cpr_alloc(const std::string& label, uint64_t size, uint64_t align = kPageSize) {
    uint64_t addr = align_up(cpr_brk_, align);
    if (addr + size > cpr.end()) throw ConfigError("cpr exhausted: " + label);
    cpr_brk_ = addr + size;
    cpr_allocs_.push_back({addr, size, label});
    return addr;
  }

  const std::vector<StagingAllocation>& staging_allocations() const { return staging_allocs_; }

  bool staging_available(uint64_t size) const {
    return align_up(staging_brk_, kPageSize) + size <= shared_staging.end();
  }

  void reset_allocators() {
    staging_brk_ = shared_staging.base;
    cpr_brk_ = cpr.base;
    staging_allocs_.clear();
    cpr_allocs_.clear();
  }

  // ---- dumps ----

  Bytes host_view_of(const Region& r) const {
    switch (r.cls) {
      case RegionClass::shared:
      case RegionClass::vidmem:
        return r.content;
      case RegionClass::cvm_private:
        return private_view(r.base, r.size);
      case RegionClass::cpr:
        if (cc_mode_active) throw ConfigError("cpr is not host visible in CC mode");
        return r.content;
    }
    return {};
  }

  // The system-memory image an attacker on the host can capture: the CVM's
  // encrypted private pages followed by the shared staging buffer.
  Bytes dump_system_memory() const {
    if (shared_staging.base != cvm_private.end())
      throw ConfigError("system dump requires contiguous cvm/staging layout");
    Bytes out = private_view(cvm_private.base, cvm_private.size);
    append_bytes(out, shared_staging.content);
    return out;
  }

  std::vector<Region*> regions() {
    return {&cvm_private, &shared_staging, &cpr, &vidmem};
  }

 private:
  friend Machine build_machine(const MachineConfig&);

  Region* find_region(uint64_t addr, uint64_t len) {
    for (Region* r : regions())
      if (r->contains(addr, len)) return r;
    return nullptr;
  }

  static uint64_t align_up(uint64_t v, uint64_t a) { return (v + a - 1) / a * a; }

  uint64_t staging_brk_ = 0;
  uint64_t cpr_brk_ = 0;
  std::vector<StagingAllocation> staging_allocs_;
  std::vector<StagingAllocation> cpr_allocs_;
};

inline Machine build_machine(const MachineConfig& config) {
  if (config.cvm_private_size == 0 || config.staging_size == 0 || config.gpu_mem_size == 0)
    throw ConfigError("region sizes must be positive");
  if (!(config.cpr_fraction > 0.0 && config.cpr_fraction < 1.0))
    throw ConfigError("cpr_fraction must be in (0,1)");
  for (uint64_t s : {config.cvm_private_size, config.staging_size, config.gpu_mem_size})
    if (s % kPageSize) throw ConfigError("region sizes must be page aligned");

  Machine m;
  m.config = config;

  uint64_t cvm_base = config.cvm_base;
  uint64_t staging_base = config.staging_base ? config.staging_base : cvm_base + config.cvm_private_size;
  uint64_t gpu_base = config.gpu_base ? config.gpu_base : (1ull << 32);
  for (uint64_t b : {cvm_base, staging_base, gpu_base})
    if (b % kPageSize) throw ConfigError("region bases must be page aligned");

  // CPR gets at least cpr_fraction of GPU memory; round up to a page.
  uint64_t cpr_size =
      Machine::align_up(uint64_t(double(config.gpu_mem_size) * config.cpr_fraction), kPageSize);
  uint64_t vidmem_size = config.gpu_mem_size - cpr_size;
  if (vidmem_size == 0) throw ConfigError("cpr_fraction leaves no unprotected vidmem");

  m.cvm_private = {cvm_base, config.cvm_private_size, RegionClass::cvm_private, Bytes(config.cvm_private_size)};
  m.shared_staging = {staging_base, config.staging_size, RegionClass::shared, Bytes(config.staging_size)};
  m.cpr = {gpu_base, cpr_size, RegionClass::cpr, Bytes(cpr_size)};
  m.vidmem = {gpu_base + cpr_size, vidmem_size, RegionClass::vidmem, Bytes(vidmem_size)};

  // Reject overlapping layouts.
  std::vector<Region*> rs = m.regions();
  for (size_t i = 0; i < rs.size(); ++i)
    for (size_t j = i + 1; j < rs.size(); ++j)
      if (rs[i]->base < rs[j]->end() && rs[j]->base < rs[i]->end())
        throw ConfigError("regions overlap");

  auto load = [](const std::string& spec, bool cc) {
    if (spec == "builtin") return Bar0Map::from_manifest(cc ? default_cc_manifest() : default_noncc_manifest());
    return Bar0Map::from_manifest(Bar0Manifest::load_file(spec));
  };
  m.bar0_cc = load(config.bar0_manifest_cc, true);
  m.bar0_noncc = load(config.bar0_manifest_noncc, false);

  m.reset_allocators();
  m.trace.emit("sim", "machine_build",
               {{"cvm_size", config.cvm_private_size},
                {"staging_size", config.staging_size},
                {"cpr_size", cpr_size},
                {"vidmem_size", vidmem_size},
                {"bar0_words", kBar0Words}});
  return m;
}

}  // namespace gpucc
