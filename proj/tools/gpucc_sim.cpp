// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
//
// gpucc-sim: scenario runner, attestation verifier, attack toolbox, and
// fixture generator for the GPU confidential-computing trust-boundary
// emulator.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "gpucc/report.hpp"
#include "gpucc/scenario.hpp"

namespace fs = std::filesystem;
using namespace gpucc;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Bytes read_file_bytes(const std::string& path) {
  std::string text = read_file(path);
  return Bytes(text.begin(), text.end());
}

int cmd_run(const std::string& scenario_path, uint64_t seed_override, bool has_seed,
            const std::string& out_dir) {
  scenario::Scenario sc = scenario::Scenario::load_file(scenario_path);
  if (has_seed) {
    sc.seed = seed_override;
    sc.raw["seed"] = seed_override;
  }
  scenario::Runner runner(std::move(sc), out_dir);
  int code = runner.run();
  std::cout << runner.report().dump(2) << "\n";
  return code;
}

int cmd_report(const std::string& trace_path) {
  try {
    auto events = report::parse_jsonl(read_file(trace_path));
    auto summary = report::summarize(events);
    std::cout << report::render_text(summary);
    return 0;
  } catch (const report::ParseError& e) {
    std::cerr << "parse-error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_attest(const std::string& evidence_dir, const std::string& rim_store_dir,
               const std::string& trust_anchor, const std::string& rim_trust_anchor,
               const std::string& nonce_hex, const std::string& ocsp_path,
               const std::string& out_path) {
  attest::Services services;
  services.local_root = attest::Certificate::from_json(attest::fixtures::load_json_file(trust_anchor));
  services.local_rim_root =
      attest::Certificate::from_json(attest::fixtures::load_json_file(rim_trust_anchor));
  services.rims = attest::RimStore::from_dir(rim_store_dir);
  if (!ocsp_path.empty())
    services.ocsp = attest::OcspClient::from_json(attest::fixtures::load_json_file(ocsp_path));
  attest::Evidence evidence = attest::fixtures::load_evidence_dir(evidence_dir);
  Bytes nonce = from_hex(nonce_hex);

  attest::Verdict verdict = attest::verify_evidence(evidence, services, nonce, nullptr);
  std::string text = verdict.to_json().dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) std::ofstream(out_path) << text;
  return verdict.pass ? 0 : 1;
}

int cmd_scan_table(const std::string& dump_path, const std::string& base_hex) {
  Bytes dump = read_file_bytes(dump_path);
  uint64_t base = std::stoull(base_hex, nullptr, 16);
  auto hits = adversary::scan_for_address_table(dump, base);
  Json j;
  j["dump"] = dump_path;
  j["base"] = base;
  j["hits"] = Json::array();
  for (const auto& h : hits) j["hits"].push_back(h.page_addr);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_attack_timing(const std::string& csv_path) {
  auto samples = dma::parse_timing_csv(read_file(csv_path));
  auto c = adversary::classify_timing(samples);
  Json j;
  if (c.ok()) {
    j["threshold"] = c.value().threshold;
    j["accuracy"] = c.value().accuracy;
  } else {
    j["error"] = to_string(c.error());
  }
  std::cout << j.dump(2) << "\n";
  return c.ok() ? 0 : 1;
}

int cmd_attack_replay(const std::string& trace_path, size_t index) {
  auto events = report::parse_jsonl(read_file(trace_path));
  const Json* config = nullptr;
  for (const auto& ev : events)
    if (ev.value("event", "") == "run_config") {
      config = &ev;
      break;
    }
  if (!config) throw ConfigError("trace does not carry an embedded scenario");
  scenario::Scenario sc = scenario::Scenario::from_json(config->at("meta").at("scenario"));
  scenario::Runner runner(std::move(sc));
  if (int code = runner.run(); code != 0) {
    std::cerr << "scenario re-run failed with code " << code << "\n";
    return 2;
  }
  std::cout << runner.replay_capture(index).dump(2) << "\n";
  return 0;
}

int cmd_bar0_audit(const std::string& manifest_path, bool cc_mode) {
  MachineConfig config;
  if (!manifest_path.empty()) {
    if (cc_mode)
      config.bar0_manifest_cc = manifest_path;
    else
      config.bar0_manifest_noncc = manifest_path;
  }
  Machine m = build_machine(config);
  m.cc_mode_active = cc_mode;  // audit runs against the selected policy directly
  auto stats = adversary::audit_bar0(m);
  std::cout << stats.to_json().dump(2) << "\n";
  return 0;
}

int cmd_fixtures_keys(const std::string& master_hex, const std::string& out_path) {
  MasterSecret master;
  Bytes bytes = from_hex(master_hex);
  if (bytes.size() != 32) throw ConfigError("master must be 32 bytes of hex");
  std::copy(bytes.begin(), bytes.end(), master.secret.begin());
  KeyTable table = derive_all_keys(master);
  Json j;
  for (KeyId id : all_key_ids()) j[id.name()] = to_hex(table.key(id));
  std::string text = j.dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    std::ofstream(out_path) << text;
  return 0;
}

int cmd_fixtures_manifest(const std::string& mode, const std::string& out_path) {
  Bar0Manifest manifest = mode == "cc" ? default_cc_manifest() : default_noncc_manifest();
  std::string text = manifest.to_json().dump() + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    std::ofstream(out_path) << text;
  return 0;
}

int cmd_fixtures_attest(uint64_t seed, const std::string& out_dir) {
  MachineConfig config;
  config.provision_seed = seed;
  Machine m = build_machine(config);
  m.set_cc_mode(true);
  if (!secure_boot(m, make_test_bundle(seed)).ok) throw ConfigError("fixture boot failed");
  Rng rng(seed ^ 0xa77e57ULL);
  Bytes nonce = rng.bytes(32);
  auto bundle = attest::fixtures::make_clean(m, nonce);
  attest::fixtures::write_bundle(bundle, out_dir);
  std::cout << "wrote clean attestation fixtures to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPU confidential-computing trust-boundary emulator"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute a scenario");
  std::string scenario_path, out_dir;
  uint64_t seed = 0;
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out", out_dir, "artifact output directory");

  // report
  auto* rep = app.add_subcommand("report", "summarize a trace file");
  std::string trace_path;
  rep->add_option("--trace", trace_path, "trace JSONL file")->required();

  // attest
  auto* att = app.add_subcommand("attest", "run the attestation verifier on an evidence bundle");
  std::string evidence_dir, rim_store_dir, trust_anchor, rim_trust_anchor, nonce_hex, ocsp_path,
      verdict_out;
  att->add_option("--evidence", evidence_dir, "directory with chain.json and report.json")->required();
  att->add_option("--rim-store", rim_store_dir, "directory of rim_<target>_<id>.json files")->required();
  att->add_option("--trust-anchor", trust_anchor, "local root certificate JSON")->required();
  att->add_option("--rim-trust-anchor", rim_trust_anchor, "local RIM root certificate JSON")->required();
  att->add_option("--nonce", nonce_hex, "expected nonce (hex)")->required();
  att->add_option("--ocsp", ocsp_path, "OCSP status map JSON");
  att->add_option("--out", verdict_out, "verdict output file");

  // attack
  auto* attack = app.add_subcommand("attack", "adversary toolbox");
  attack->require_subcommand(1);
  auto* scan = attack->add_subcommand("scan-table", "scan a memory dump for the RPC address table");
  std::string dump_path, base_hex = "0";
  scan->add_option("--dump", dump_path, "raw memory dump")->required();
  scan->add_option("--base", base_hex, "dump base address (hex)")->required();
  auto* timing = attack->add_subcommand("timing", "threshold classifier over a timing CSV");
  std::string csv_path;
  timing->add_option("--csv", csv_path, "op,size,micros CSV")->required();
  auto* replay = attack->add_subcommand("replay", "replay a captured blob from a trace");
  std::string replay_trace;
  size_t replay_index = 0;
  replay->add_option("--trace", replay_trace, "trace JSONL with embedded scenario")->required();
  replay->add_option("--index", replay_index, "capture index")->required();

  // bar0
  auto* bar0 = app.add_subcommand("bar0", "BAR0 register tools");
  bar0->require_subcommand(1);
  auto* audit = bar0->add_subcommand("audit", "classify every BAR0 word");
  std::string manifest_path;
  bool audit_noncc = false;
  audit->add_option("--manifest", manifest_path, "register-map manifest JSON (default: builtin)");
  audit->add_flag("--non-cc", audit_noncc, "audit the non-CC policy");

  // fixtures
  auto* fixtures = app.add_subcommand("fixtures", "regenerate golden fixtures");
  fixtures->require_subcommand(1);
  auto* keys = fixtures->add_subcommand("keys", "golden key table for a fixed master secret");
  std::string master_hex = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";
  std::string keys_out;
  keys->add_option("--master", master_hex, "master secret (hex, 32 bytes)");
  keys->add_option("--out", keys_out, "output file (default: stdout)");
  auto* manifest = fixtures->add_subcommand("bar0-manifest", "default register-map manifest");
  std::string manifest_mode = "cc", manifest_out;
  manifest->add_option("--mode", manifest_mode, "cc or noncc")->check(CLI::IsMember({"cc", "noncc"}));
  manifest->add_option("--out", manifest_out, "output file (default: stdout)");
  auto* attest_fix = fixtures->add_subcommand("attest", "clean attestation evidence bundle");
  uint64_t fixture_seed = 7;
  std::string attest_out = "attest-fixtures";
  attest_fix->add_option("--seed", fixture_seed, "provisioning seed");
  attest_fix->add_option("--out", attest_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario_path, seed, seed_opt->count() > 0, out_dir);
    if (*rep) return cmd_report(trace_path);
    if (*att)
      return cmd_attest(evidence_dir, rim_store_dir, trust_anchor, rim_trust_anchor, nonce_hex,
                        ocsp_path, verdict_out);
    if (*scan) return cmd_scan_table(dump_path, base_hex);
    if (*timing) return cmd_attack_timing(csv_path);
    if (*replay) return cmd_attack_replay(replay_trace, replay_index);
    if (*audit) return cmd_bar0_audit(manifest_path, !audit_noncc);
    if (*keys) return cmd_fixtures_keys(master_hex, keys_out);
    if (*manifest) return cmd_fixtures_manifest(manifest_mode, manifest_out);
    if (*attest_fix) return cmd_fixtures_attest(fixture_seed, attest_out);
  } catch (const ConfigError& e) {
    std::cerr << "config-error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
