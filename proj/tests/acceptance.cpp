// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one check per shipped guarantee, each printed as a
// PASS/FAIL line. Thresholds and tolerances are pinned here, not configured.

#include <chrono>
#include <cstdio>
#include <set>

#include "gpucc/report.hpp"
#include "gpucc/scenario.hpp"

using namespace gpucc;

namespace {

int g_failures = 0;

void report_line(int index, const char* name, bool ok, const std::string& detail) {
  printf("%s  criterion %2d  %-18s %s\n", ok ? "PASS" : "FAIL", index, name, detail.c_str());
  if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

scenario::Scenario load_scenario(const std::string& name) {
  return scenario::Scenario::load_file(std::string(GPUCC_SCENARIO_DIR) + "/" + name + ".json");
}

// 1. Key hierarchy: exactly 44 keys with the exact name expansion, < 1 s.
void criterion_1() {
  auto t0 = std::chrono::steady_clock::now();
  Bytes r1(32, 0x01), r2(32, 0x02);
  MasterSecret master = establish_session(r1, r2);
  KeyTable table = derive_all_keys(master);

  std::set<std::string> names;
  for (KeyId id : all_key_ids()) names.insert(id.name());

  std::set<std::string> expected;
  for (const char* base : {"gsp_cpu_locked_rpc", "cpu_gsp_locked_rpc", "gsp_cpu_dma", "cpu_gsp_dma",
                           "gsp_cpu_replayable_fault", "gsp_cpu_non_replayable_fault"})
    expected.insert(base);
  for (const std::string priv : {"user", "kernel", "scrubber"}) {
    expected.insert("cpu_sec2_data_" + priv);
    expected.insert("cpu_sec2_hmac_" + priv);
  }
  for (int x = 0; x < 8; ++x)
    for (const std::string dir : {"h2d", "d2h"})
      for (const std::string priv : {"user", "kernel"})
        expected.insert("lce" + std::to_string(x) + "_" + dir + "_" + priv);

  std::set<std::string> values;
  for (KeyId id : all_key_ids()) values.insert(to_hex(table.key(id)));

  double secs = seconds_since(t0);
  bool ok = table.size() == 44 && names == expected && expected.size() == 44 &&
            values.size() == 44 && secs < 1.0;
  char detail[128];
  snprintf(detail, sizeof detail, "44 keys, 6 gsp + 6 sec2 + 32 ce, %.3fs", secs);
  report_line(1, "key-hierarchy", ok, detail);
}

// 2. RPC layout: 129 entries (1+1+63+1+63), self-referential first entry,
//    host-legible element header fields, verified by dump + re-parse.
void criterion_2() {
  Machine m = build_machine(MachineConfig{});
  m.set_cc_mode(true);
  bool ok = secure_boot(m, make_test_bundle(12)).ok;
  Rng rng(12);
  Bytes r1 = rng.bytes(32), r2 = rng.bytes(32);
  Session s = Session::establish(m, r1, r2);
  auto cho = rpc::init_rpc_infrastructure(m, s);
  ok = ok && cho.ok();
  auto& ch = const_cast<rpc::RpcChannel&>(cho.value());
  ok = ok && rpc::send_command(m, s, ch, {rpc::kCmdNop, Bytes(100, 0x5c)}).ok();

  // Dump the staging region through the host view and re-parse.
  Bytes staging = m.host_view_of(m.shared_staging);
  auto at = [&](uint64_t addr) { return staging.data() + (addr - m.shared_staging.base); };
  uint64_t table_addr = ch.infra.table_addr;
  ok = ok && get_le64(at(table_addr)) == table_addr;

  std::set<uint64_t> pages;
  for (size_t i = 0; i < 129; ++i) pages.insert(get_le64(at(table_addr + 8 * i)));
  ok = ok && pages.size() == 129;
  uint64_t tx_header = get_le64(at(table_addr + 8));
  uint64_t rx_header = get_le64(at(table_addr + 8 * 65));
  ok = ok && tx_header == ch.infra.tx_header() && rx_header == ch.infra.rx_header();

  // Element header fields parse from the dump: authTagBuffer, aadBuffer,
  // checkSum, seqNum, elemCount.
  uint64_t elem0 = get_le64(at(table_addr + 16));
  auto header = rpc::ElementHeader::parse(ByteView(at(elem0), rpc::kElemHeaderSize));
  ok = ok && header.seq == 0 && header.elem_count == 1;
  bool tag_nonzero = false;
  for (uint8_t b : header.auth_tag) tag_nonzero = tag_nonzero || b != 0;
  ok = ok && tag_nonzero && header.checksum != 0;
  ok = ok && get_le32(header.aad.data()) == header.seq &&
       get_le32(header.aad.data() + 4) == header.elem_count;

  report_line(2, "rpc-layout", ok, "129 entries = 1+1+63+1+63, headers legible from dump");
}

// 3. Scan attack: exactly one hit on the 64 MiB paper-e2e system dump, < 1 s.
void criterion_3(scenario::Runner& e2e) {
  Bytes dump = e2e.machine().dump_system_memory();
  bool ok = dump.size() == 64ull << 20;
  auto t0 = std::chrono::steady_clock::now();
  auto hits = adversary::scan_for_address_table(dump, e2e.machine().cvm_private.base);
  double secs = seconds_since(t0);
  ok = ok && hits.size() == 1 && hits[0].page_addr == e2e.rpc_channel().infra.table_addr &&
       secs < 1.0;
  char detail[128];
  snprintf(detail, sizeof detail, "64 MiB dump, %zu hit(s), %.3fs", hits.size(), secs);
  report_line(3, "scan-attack", ok, detail);
}

// 4. BAR0 audit: exact manifest counts and the published fractions, < 5 s.
void criterion_4() {
  Machine m = build_machine(MachineConfig{});
  auto t0 = std::chrono::steady_clock::now();
  m.cc_mode_active = true;
  auto cc = adversary::audit_bar0(m);
  m.cc_mode_active = false;
  auto noncc = adversary::audit_bar0(m);
  double secs = seconds_since(t0);

  bool ok = cc.values == 1042 && cc.zeros == 4185292 && cc.errors == 7970 &&
            cc.pct_trunc(cc.zeros) == 99.78 && cc.pct_trunc(cc.errors) == 0.19 &&
            noncc.pct_trunc(noncc.values) == 7.94 && noncc.pct_trunc(noncc.errors) == 80.25 &&
            cc.values + cc.zeros + cc.errors == 0x400000 && secs < 5.0;
  char detail[160];
  snprintf(detail, sizeof detail,
           "cc: %llu values / %.2f%% zeros / %.2f%% errors; non-cc: %.2f%% / %.2f%%; %.2fs",
           (unsigned long long)cc.values, cc.pct_trunc(cc.zeros), cc.pct_trunc(cc.errors),
           noncc.pct_trunc(noncc.values), noncc.pct_trunc(noncc.errors), secs);
  report_line(4, "bar0-audit", ok, detail);
}

// 5. Replay suite: 1000 randomized replay/tamper attempts per AEAD channel
//    class, exactly zero accepted.
void criterion_5() {
  scenario::Runner runner(load_scenario("replay-suite"));
  int code = runner.run();
  const char* classes[] = {"rpc", "dma", "wlc_run_push", "uvm_ce_push", "semaphore", "fault_packet"};
  uint64_t accepted = 0, trials = 0;
  bool ok = code == 0;
  for (const char* cls : classes) {
    auto it = runner.attacks().find(cls);
    if (it == runner.attacks().end()) {
      ok = false;
      continue;
    }
    ok = ok && it->second.trials == 1000;
    trials += it->second.trials;
    accepted += it->second.accepted;
  }
  ok = ok && accepted == 0;
  char detail[128];
  snprintf(detail, sizeof detail, "%llu trials across 6 classes, %llu accepted",
           (unsigned long long)trials, (unsigned long long)accepted);
  report_line(5, "replay-suite", ok, detail);
}

// 6. UVM alternation over 100 launches: strict decrypt -> run -> lcic order,
//    GPPUT delta exactly 2 per cycle, zero canary bytes in staging.
void criterion_6(scenario::Runner& e2e) {
  const auto& events = e2e.machine().trace.events();
  int cycles = 0;
  bool order_ok = true;
  std::map<uint32_t, uint64_t> last_gpput;
  bool delta_ok = true;
  int phase = 0;  // 0 expect decrypt, 1 expect run, 2 expect lcic
  for (const auto& ev : events) {
    if (ev.name != "wlc_decrypt" && ev.name != "wlc_run" && ev.name != "lcic_advance") continue;
    const char* expect = phase == 0 ? "wlc_decrypt" : phase == 1 ? "wlc_run" : "lcic_advance";
    if (ev.name != expect) order_ok = false;
    if (ev.name == "lcic_advance") {
      ++cycles;
      uint32_t wlc = ev.meta.value("wlc", 0u);
      uint64_t gpput = ev.meta.value("gpput", uint64_t(0));
      auto it = last_gpput.find(wlc);
      if (it != last_gpput.end() && gpput - it->second != 2) delta_ok = false;
      if (it == last_gpput.end() && gpput != 2) delta_ok = false;
      last_gpput[wlc] = gpput;
      // Pairing: WLC i is only ever advanced by its own LCIC partner.
      if (ev.meta.value("lcic", 0u) != wlc + 0x100) order_ok = false;
    }
    phase = (phase + 1) % 3;
  }

  uint64_t canary_hits = UINT64_MAX;
  for (const auto& ev : events)
    if (ev.name == "canary_sweep") canary_hits = ev.meta.value("hits", uint64_t(1));

  bool ok = cycles == 100 && order_ok && delta_ok && last_gpput.size() == 16 && canary_hits == 0;
  char detail[128];
  snprintf(detail, sizeof detail, "%d cycles on %zu channels, canary hits=%llu", cycles,
           last_gpput.size(), (unsigned long long)canary_hits);
  report_line(6, "uvm-alternation", ok, detail);
}

// 7. Timing channel: classifier accuracy >= 0.90 stock and <= 0.55 with
//    constant-time DMA, 1000 samples per class, pinned seed.
void criterion_7() {
  scenario::Runner runner(load_scenario("timing-channel"));
  int code = runner.run();
  double stock = -1, mitigated = -1;
  for (const auto& ev : runner.machine().trace.events())
    if (ev.name == "attack_timing") {
      if (stock < 0)
        stock = ev.meta.value("accuracy", -1.0);
      else
        mitigated = ev.meta.value("accuracy", -1.0);
    }
  bool ok = code == 0 && stock >= 0.90 && mitigated >= 0 && mitigated <= 0.55;
  char detail[128];
  snprintf(detail, sizeof detail, "accuracy %.3f stock (>=0.90), %.3f constant-time (<=0.55)",
           stock, mitigated);
  report_line(7, "timing-channel", ok, detail);
}

// 8. Scrubber: 1000 single-bit tampered pushes all rejected with pages
//    intact; untampered scrubs zero exactly the requested pages; soft reset
//    wipes before visibility and invalidates cipher state.
void criterion_8() {
  scenario::Runner runner(load_scenario("scrub-tamper"));
  int code = runner.run();
  auto it = runner.attacks().find("scrub_tamper");
  // Every trial must end with zero tampered methods executed: either an HMAC
  // rejection or a detected whole-push suppression (DoS class).
  bool tally_ok = it != runner.attacks().end() && it->second.trials == 1000 &&
                  it->second.accepted == 0 &&
                  it->second.rejected_auth + it->second.detected_other == 1000;

  // Reset ordering from the trace: every wipe precedes the visibility event.
  uint64_t wipe_max = 0, visible_t = 0;
  for (const auto& ev : runner.machine().trace.events()) {
    if (ev.name == "wipe") wipe_max = std::max(wipe_max, ev.t);
    if (ev.name == "reset" && ev.meta.value("phase", "") == "visible" && visible_t == 0)
      visible_t = ev.t;
  }
  bool order_ok = visible_t != 0 && wipe_max != 0 && wipe_max < visible_t;

  bool ok = code == 0 && tally_ok && order_ok;
  char detail[128];
  snprintf(detail, sizeof detail,
           "0/1000 tampered pushes executed (%llu auth, %llu suppressed), wipe-before-visible %s",
           it == runner.attacks().end() ? 0ull : (unsigned long long)it->second.rejected_auth,
           it == runner.attacks().end() ? 0ull : (unsigned long long)it->second.detected_other,
           order_ok ? "held" : "violated");
  report_line(8, "scrubber", ok, detail);
}

// 9. Attestation matrix: each negative fixture yields exactly its reason,
//    pass only on the clean fixture, root substitution property holds.
void criterion_9() {
  scenario::Runner runner(load_scenario("attest-negative-matrix"));
  int code = runner.run();
  int cases = 0, case_ok = 0;
  for (const auto& ev : runner.machine().trace.events())
    if (ev.name == "attest_case") {
      ++cases;
      case_ok += ev.meta.value("ok", false) ? 1 : 0;
    }
  // Clean + 9 negatives + the garbage-in-evidence-root property.
  bool ok = code == 0 && cases == 11 && case_ok == 11;
  char detail[96];
  snprintf(detail, sizeof detail, "%d/%d fixtures matched their expected verdict", case_ok, cases);
  report_line(9, "attest-matrix", ok, detail);
}

// 10. Leak budget: host-visible plaintext is exactly the enumerated surfaces
//     (canary sweep clean), and encrypt_rpc_metadata removes the RPC header
//     surface, dropping inference accuracy to chance + 5%.
void criterion_10(scenario::Runner& e2e) {
  std::set<std::string> plaintext, sealed_surfaces;
  uint64_t canary_hits = UINT64_MAX;
  for (const auto& ev : e2e.machine().trace.events()) {
    if (ev.name == "leak_check") {
      if (ev.meta.value("plaintext", false))
        plaintext.insert(ev.meta.value("surface", "?"));
      else
        sealed_surfaces.insert(ev.meta.value("surface", "?"));
    }
    if (ev.name == "canary_sweep") canary_hits = ev.meta.value("hits", uint64_t(1));
  }
  const std::set<std::string> expected = {"rpc_addr_table", "rpc_queue_header", "rpc_elem_header",
                                          "sec2_gpfifo_gpput", "scrubber_pushbuffer",
                                          "scrubber_tag_buffer", "fault_put_register"};
  bool surfaces_ok = plaintext == expected && sealed_surfaces.count("wlc_control_block") == 1;

  // Mitigated phase of rpc-scan-attack: header surface gone, inference at chance.
  scenario::Runner scan(load_scenario("rpc-scan-attack"));
  int code = scan.run();
  double plain_acc = -1, mitigated_acc = -1;
  bool mitigated_header_plaintext = false;
  bool in_mitigated_phase = false;
  for (const auto& ev : scan.machine().trace.events()) {
    if (ev.name == "set_mitigation" && ev.meta.value("encrypt_rpc_metadata", false))
      in_mitigated_phase = true;
    if (ev.name == "attack_infer") {
      if (!in_mitigated_phase)
        plain_acc = ev.meta.value("accuracy", -1.0);
      else
        mitigated_acc = ev.meta.value("accuracy", -1.0);
    }
    if (in_mitigated_phase && ev.name == "leak_check" &&
        ev.meta.value("surface", "") == "rpc_elem_header" && ev.meta.value("plaintext", false))
      mitigated_header_plaintext = true;
  }
  bool mitigation_ok = code == 0 && plain_acc >= 0.95 && mitigated_acc >= 0.0 &&
                       mitigated_acc <= 0.55 && !mitigated_header_plaintext;

  bool ok = canary_hits == 0 && surfaces_ok && mitigation_ok;
  char detail[160];
  snprintf(detail, sizeof detail,
           "canary hits=%llu, %zu plaintext surfaces, inference %.2f -> %.2f under mitigation",
           (unsigned long long)canary_hits, plaintext.size(), plain_acc, mitigated_acc);
  report_line(10, "leak-budget", ok, detail);
}

// 11. Determinism: two runs of every bundled scenario with identical seeds
//     produce byte-identical traces.
void criterion_11() {
  const char* names[] = {"paper-e2e",     "rpc-scan-attack",        "timing-channel",
                         "replay-suite",  "attest-negative-matrix", "scrub-tamper",
                         "fault-tamper"};
  int identical = 0, total = 0;
  bool all_ok = true;
  for (const char* name : names) {
    ++total;
    scenario::Runner a(load_scenario(name));
    scenario::Runner b(load_scenario(name));
    int ca = a.run();
    int cb = b.run();
    bool same = ca == 0 && cb == 0 && a.trace_jsonl() == b.trace_jsonl();
    if (same)
      ++identical;
    else
      all_ok = false;
  }
  char detail[96];
  snprintf(detail, sizeof detail, "%d/%d scenarios byte-identical across seeded re-runs",
           identical, total);
  report_line(11, "determinism", all_ok, detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();

  // paper-e2e backs criteria 3, 6 and 10.
  scenario::Runner e2e(load_scenario("paper-e2e"));
  int e2e_code = e2e.run();
  if (e2e_code != 0) {
    report_line(3, "scan-attack", false, "paper-e2e run failed");
    report_line(6, "uvm-alternation", false, "paper-e2e run failed");
  } else {
    criterion_3(e2e);
  }
  criterion_4();
  criterion_5();
  if (e2e_code == 0) criterion_6(e2e);
  criterion_7();
  criterion_8();
  criterion_9();
  if (e2e_code == 0)
    criterion_10(e2e);
  else
    report_line(10, "leak-budget", false, "paper-e2e run failed");
  criterion_11();

  printf("%s: %d criteria failed\n", g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
         g_failures);
  return g_failures == 0 ? 0 : 1;
}
