// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Secure boot chain: EROT (when present) and the FSP BootROM both authenticate
// the FSP image, then each booted stage authenticates the next. A failed stage
// stops the chain; measurements are recorded per successfully launched stage.

#include "gpucc/crypto.hpp"
#include "gpucc/machine.hpp"
#include "gpucc/rng.hpp"

namespace gpucc {

struct FirmwareBundle {
  Bytes fsp, gsp_fmc, gsp_rm, sec2;
  Bytes sig_fsp, sig_gsp_fmc, sig_gsp_rm, sig_sec2;
  Bytes vendor_public_key;
  bool erot_present = false;
  // EROT verifies its own copy of the FSP signature; defaults to sig_fsp.
  std::optional<Bytes> erot_fsp_signature;

  const Bytes& image(BootStage s) const {
    switch (s) {
      case BootStage::fsp: return fsp;
      case BootStage::gsp_fmc: return gsp_fmc;
      case BootStage::gsp_rm: return gsp_rm;
      case BootStage::sec2: return sec2;
    }
    throw std::logic_error("bad stage");
  }
  const Bytes& signature(BootStage s) const {
    switch (s) {
      case BootStage::fsp: return sig_fsp;
      case BootStage::gsp_fmc: return sig_gsp_fmc;
      case BootStage::gsp_rm: return sig_gsp_rm;
      case BootStage::sec2: return sig_sec2;
    }
    throw std::logic_error("bad stage");
  }
};

struct BootReport {
  bool ok = false;
  BootState state = BootState::cold;
  std::optional<BootStage> failed;
  std::vector<Bytes> measurements;
};

inline FirmwareBundle make_test_bundle(uint64_t seed) {
  Rng rng(seed ^ 0xb007b007ULL);
  Bytes vendor_seed = rng.bytes(32);
  auto vendor = crypto::ed25519_keypair(vendor_seed);

  FirmwareBundle b;
  auto make_image = [&](const char* name) {
    Bytes img = to_bytes(name);
    append_bytes(img, rng.bytes(1024));
    return img;
  };
  b.fsp = make_image("fsp-image/");
  b.gsp_fmc = make_image("gsp-fmc-image/");
  b.gsp_rm = make_image("gsp-rm-image/");
  b.sec2 = make_image("sec2-image/");
  b.sig_fsp = crypto::ed25519_sign(vendor_seed, b.fsp);
  b.sig_gsp_fmc = crypto::ed25519_sign(vendor_seed, b.gsp_fmc);
  b.sig_gsp_rm = crypto::ed25519_sign(vendor_seed, b.gsp_rm);
  b.sig_sec2 = crypto::ed25519_sign(vendor_seed, b.sec2);
  b.vendor_public_key = vendor.public_key;
  b.erot_present = true;
  return b;
}

inline BootReport secure_boot(Machine& m, const FirmwareBundle& bundle) {
  if (m.boot_state != BootState::cold) throw ConfigError("secure_boot requires a cold machine");

  BootReport report;
  m.boot_measurements.clear();
  m.failed_stage.reset();

  auto verify_stage = [&](BootStage s) {
    bool ok = crypto::ed25519_verify(bundle.vendor_public_key, bundle.image(s), bundle.signature(s));
    if (s == BootStage::fsp && bundle.erot_present) {
      const Bytes& erot_sig = bundle.erot_fsp_signature ? *bundle.erot_fsp_signature : bundle.sig_fsp;
      bool erot_ok = crypto::ed25519_verify(bundle.vendor_public_key, bundle.fsp, erot_sig);
      m.trace.emit("erot", "boot_stage_verify", {{"stage", "fsp"}, {"ok", erot_ok}});
      ok = ok && erot_ok;
    }
    return ok;
  };

  const BootStage stages[] = {BootStage::fsp, BootStage::gsp_fmc, BootStage::gsp_rm, BootStage::sec2};
  for (BootStage s : stages) {
    bool ok = verify_stage(s);
    m.trace.emit("device_root", "boot_stage", {{"stage", to_string(s)}, {"ok", ok}});
    if (!ok) {
      m.boot_state = BootState::failed;
      m.failed_stage = s;
      report.ok = false;
      report.state = m.boot_state;
      report.failed = s;
      report.measurements = m.boot_measurements;
      m.trace.emit("device_root", "boot_failed", {{"stage", to_string(s)}});
      return report;
    }
    m.boot_measurements.push_back(crypto::sha384(bundle.image(s)));
    switch (s) {
      case BootStage::fsp: m.boot_state = BootState::fsp_booted; break;
      case BootStage::gsp_fmc: break;  // gsp fully up after gsp_rm
      case BootStage::gsp_rm: m.boot_state = BootState::gsp_booted; break;
      case BootStage::sec2: m.boot_state = BootState::sec2_booted; break;
    }
  }

  // GPU reset point: the pending CC-mode selection latches, prior session
  // keys die with the epoch.
  m.cc_mode_active = m.cc_mode_pending;
  m.epoch += 1;
  m.bus_visible = true;

  report.ok = true;
  report.state = m.boot_state;
  report.measurements = m.boot_measurements;
  m.trace.emit("device_root", "boot_done",
               {{"state", to_string(m.boot_state)},
                {"cc_mode_active", m.cc_mode_active},
                {"epoch", m.epoch},
                {"measurements", m.boot_measurements.size()}});
  return report;
}

inline bool booted(const Machine& m) { return m.boot_state == BootState::sec2_booted; }

}  // namespace gpucc
