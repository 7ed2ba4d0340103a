// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Scenario runner: loads a JSON scenario (machine config, mitigations, timing
// model, typed step list), drives the modules end to end, and emits the run
// artifacts (trace JSONL, region dumps, timing CSV, report JSON). Runs are a
// pure function of (scenario, seed): every byte of output is deterministic.

#include <filesystem>
#include <fstream>

#include "gpucc/adversary.hpp"
#include "gpucc/attest/fixtures.hpp"
#include "gpucc/fault.hpp"
#include "gpucc/uvm.hpp"

namespace gpucc::scenario {

struct Mitigations {
  bool encrypt_rpc_metadata = false;
  bool constant_time_dma = false;
  bool encrypt_scrubber_pushes = false;
};

struct Scenario {
  std::string name = "unnamed";
  uint64_t seed = 1;
  MachineConfig machine;
  Mitigations mitigations;
  dma::TimingModel timing;
  Json steps = Json::array();
  Json raw;  // the full scenario document, embedded in the trace header

  static Scenario from_json(const Json& j) {
    Scenario sc;
    sc.raw = j;
    sc.name = j.value("name", "unnamed");
    sc.seed = j.value("seed", uint64_t(1));
    if (j.contains("machine")) {
      const Json& m = j.at("machine");
      if (m.contains("cvm_private_mib")) sc.machine.cvm_private_size = m.at("cvm_private_mib").get<uint64_t>() << 20;
      if (m.contains("staging_mib")) sc.machine.staging_size = m.at("staging_mib").get<uint64_t>() << 20;
      if (m.contains("gpu_mib")) sc.machine.gpu_mem_size = m.at("gpu_mib").get<uint64_t>() << 20;
      if (m.contains("cpr_fraction")) sc.machine.cpr_fraction = m.at("cpr_fraction").get<double>();
      if (m.contains("fault_ring_capacity")) sc.machine.fault_ring_capacity = m.at("fault_ring_capacity").get<uint32_t>();
      if (m.contains("gpfifo_capacity")) sc.machine.gpfifo_capacity = m.at("gpfifo_capacity").get<uint32_t>();
      if (m.contains("provision_seed")) sc.machine.provision_seed = m.at("provision_seed").get<uint64_t>();
      if (m.contains("bar0_manifest_cc")) sc.machine.bar0_manifest_cc = m.at("bar0_manifest_cc").get<std::string>();
      if (m.contains("bar0_manifest_noncc")) sc.machine.bar0_manifest_noncc = m.at("bar0_manifest_noncc").get<std::string>();
    }
    if (j.contains("mitigations")) {
      const Json& g = j.at("mitigations");
      sc.mitigations.encrypt_rpc_metadata = g.value("encrypt_rpc_metadata", false);
      sc.mitigations.constant_time_dma = g.value("constant_time_dma", false);
      sc.mitigations.encrypt_scrubber_pushes = g.value("encrypt_scrubber_pushes", false);
    }
    if (j.contains("timing")) {
      const Json& t = j.at("timing");
      sc.timing.base_fast = t.value("base_fast", sc.timing.base_fast);
      sc.timing.base_slow = t.value("base_slow", sc.timing.base_slow);
      sc.timing.p_slow = t.value("p_slow", sc.timing.p_slow);
      sc.timing.per_byte = t.value("per_byte", sc.timing.per_byte);
      sc.timing.noise_sigma = t.value("noise_sigma", sc.timing.noise_sigma);
    }
    if (j.contains("steps")) sc.steps = j.at("steps");
    return sc;
  }

  static Scenario load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read scenario: " + path);
    Json j;
    f >> j;
    return from_json(j);
  }
};

// Known canary payloads; the sweep hunts for these in every host-visible view.
inline Bytes canary_bytes(const std::string& tag) { return to_bytes("CANARY<" + tag + ">7f3a9c51"); }

struct Capture {
  std::string cls;  // rpc_element | dma_wire | semaphore
  uint64_t addr = 0;
  Bytes bytes;
  uint32_t channel = 0;
};

struct AttackTally {
  uint64_t trials = 0;
  uint64_t accepted = 0;
  uint64_t rejected_auth = 0;
  uint64_t rejected_replay = 0;
  uint64_t detected_other = 0;
};

class Runner {
 public:
  Runner(Scenario sc, std::string out_dir = {})
      : sc_(std::move(sc)), out_dir_(std::move(out_dir)), rng_(sc_.seed), machine_(build_machine(sc_.machine)) {
    machine_.trace.emit("sim", "run_config", {{"scenario", sc_.raw}, {"seed", sc_.seed}});
  }

  // Returns 0 when every step and check passed, 1 on a step failure,
  // 2 on a configuration error.
  int run() {
    int exit_code = 0;
    try {
      for (size_t i = 0; i < sc_.steps.size(); ++i) {
        const Json& step = sc_.steps[i];
        std::string op = step.at("op").get<std::string>();
        bool ok = dispatch(op, step);
        step_results_.push_back({{"index", i}, {"op", op}, {"ok", ok}});
        if (!ok) {
          machine_.trace.emit("sim", "step_failed", {{"index", i}, {"op", op}});
          exit_code = 1;
          break;
        }
      }
    } catch (const ConfigError& e) {
      step_results_.push_back({{"error", e.what()}});
      exit_code = 2;
    }
    write_artifacts();
    return exit_code;
  }

  Json report() const {
    Json j;
    j["scenario"] = sc_.name;
    j["seed"] = sc_.seed;
    j["steps"] = step_results_;
    j["attacks"] = Json::object();
    for (const auto& [cls, tally] : attacks_)
      j["attacks"][cls] = {{"trials", tally.trials},
                           {"accepted", tally.accepted},
                           {"rejected_auth", tally.rejected_auth},
                           {"rejected_replay", tally.rejected_replay},
                           {"detected_other", tally.detected_other}};
    return j;
  }

  Machine& machine() { return machine_; }
  Session& session() { return *session_; }
  rpc::RpcChannel& rpc_channel() { return *rpc_; }
  const std::vector<dma::TimingSample>& samples() const { return samples_; }
  const std::map<std::string, AttackTally>& attacks() const { return attacks_; }
  const std::vector<Capture>& captures() const { return captures_; }
  uvm::UvmContext& uvm_context() { return *uvm_; }
  std::string trace_jsonl() const { return machine_.trace.to_jsonl(); }

  // Exposed for the CLI replay command: re-inject a recorded capture and run
  // the matching consumer.
  Json replay_capture(size_t index) {
    if (index >= captures_.size()) throw ConfigError("capture index out of range");
    const Capture& cap = captures_[index];
    adversary::AttackOutcome outcome = replay_one(cap);
    Json j;
    j["index"] = index;
    j["class"] = cap.cls;
    j["outcome"] = adversary::to_string(outcome);
    machine_.trace.emit("adversary", "attack_replay",
                        {{"class", cap.cls}, {"outcome", adversary::to_string(outcome)}},
                        Visibility::host_visible);
    return j;
  }

 private:
  // ---- step dispatch ----

  bool dispatch(const std::string& op, const Json& a) {
    if (op == "set_cc_mode") { machine_.set_cc_mode(a.value("enable", true)); return true; }
    if (op == "boot") return step_boot();
    if (op == "establish") return step_establish();
    if (op == "get_kmb") return step_get_kmb(a);
    if (op == "rpc_init") return step_rpc_init();
    if (op == "rpc_roundtrip") return step_rpc_roundtrip(a);
    if (op == "snapshot_staging") return step_snapshot();
    if (op == "dma_mix") return step_dma_mix(a);
    if (op == "dma_timing_batch") return step_dma_timing_batch(a);
    if (op == "clear_samples") { samples_.clear(); return true; }
    if (op == "write_timing_csv") return step_write_csv(a);
    if (op == "classify_timing") return step_classify_timing(a);
    if (op == "set_mitigation") return step_set_mitigation(a);
    if (op == "uvm_setup") return step_uvm_setup();
    if (op == "uvm_launch") return step_uvm_launch(a);
    if (op == "uvm_poll") return step_uvm_poll(a);
    if (op == "scrub") return step_scrub(a);
    if (op == "scrub_tamper_trials") return step_scrub_tamper(a);
    if (op == "sec2_sem_replay_demo") return step_sec2_sem_replay();
    if (op == "fault_register") return step_fault_register();
    if (op == "fault_raise") return step_fault_raise(a);
    if (op == "fault_handle") return step_fault_handle(a);
    if (op == "fault_tamper_trials") return step_fault_tamper(a);
    if (op == "fault_ring_full_demo") return step_fault_ring_full();
    if (op == "replay_trials") return step_replay_trials(a);
    if (op == "attest") return step_attest(a);
    if (op == "attest_matrix") return step_attest_matrix();
    if (op == "soft_reset") return step_soft_reset();
    if (op == "canary_sweep") return step_canary_sweep();
    if (op == "leak_surface_check") return step_leak_surface_check();
    if (op == "iv_uniqueness_check") return step_iv_uniqueness();
    if (op == "scan_table") return step_scan_table(a);
    if (op == "plant_decoy") return step_plant_decoy();
    if (op == "infer_rpc") return step_infer_rpc(a);
    if (op == "bar0_audit") return step_bar0_audit(a);
    if (op == "dump_regions") return step_dump_regions();
    throw ConfigError("unknown step op: " + op);
  }

  bool step_boot() {
    auto report = secure_boot(machine_, make_test_bundle(sc_.seed));
    return report.ok;
  }

  bool step_establish() {
    if (session_) old_iv_entries_.insert(old_iv_entries_.end(), session_->iv_log().entries.begin(),
                                         session_->iv_log().entries.end());
    Bytes r1 = rng_.bytes(32), r2 = rng_.bytes(32);
    session_.emplace(Session::establish(machine_, r1, r2));
    rpc_.reset();
    uvm_.reset();
    faults_.reset();
    scrubber_.reset();
    return true;
  }

  bool step_get_kmb(const Json& a) {
    std::string engine = a.value("engine", "sec2");
    Privilege priv = a.value("privilege", "user") == std::string("kernel") ? Privilege::kernel : Privilege::user;
    EngineRef ref = engine == "sec2" ? EngineRef::sec2() : EngineRef::lce(a.value("lce", 0));
    auto kmb = get_kmb(session_->keys(), ref, priv);
    if (!kmb.ok()) return false;
    machine_.trace.emit("cvm_driver", "get_kmb",
                        {{"engine", engine},
                         {"first", kmb.value().first.name()},
                         {"second", kmb.value().second.name()}});
    return true;
  }

  bool step_rpc_init() {
    auto ch = rpc::init_rpc_infrastructure(machine_, *session_, sc_.mitigations.encrypt_rpc_metadata);
    if (!ch.ok()) return false;
    rpc_.emplace(std::move(ch).value());
    // Fresh channel: inference context starts over.
    snapshots_.clear();
    truth_elem_classes_.clear();
    return true;
  }

  bool step_rpc_roundtrip(const Json& a) {
    uint32_t count = a.value("count", 1u);
    uint64_t params_size = a.value("params_size", uint64_t(16));
    bool canary = a.value("canary", false);
    bool multi_mix = a.value("multi_mix", false);  // alternate small/multi-element
    for (uint32_t i = 0; i < count; ++i) {
      uint64_t size = params_size;
      if (multi_mix && i % 2 == 1) size = rpc::kElemPayloadCapacity + 512;  // spans 2 elements
      rpc::RpcMessage msg;
      msg.function = rpc::kCmdNop;
      msg.params = rng_.bytes(size);
      if (canary && !msg.params.empty()) {
        Bytes c = canary_bytes("rpc");
        register_canary(c);
        if (msg.params.size() < c.size()) msg.params.resize(c.size());
        std::copy(c.begin(), c.end(), msg.params.begin());
      }
      auto seq = rpc::send_command(machine_, *session_, *rpc_, msg);
      if (!seq.ok()) return false;
      size_t inner = 8 + msg.params.size();
      truth_elem_classes_.push_back((inner + rpc::element_capacity(*rpc_) - 1) /
                                        rpc::element_capacity(*rpc_) >
                                    1);
      record_capture("rpc_element", rpc_->infra.tx_elem((rpc_->tx_write + 62) % 63), kPageSize, seq.value());
      auto svc = rpc::gsp_service(machine_, *session_, *rpc_);
      if (!svc.ok()) return false;
      auto st = rpc::recv_status(machine_, *session_, *rpc_);
      if (!st.ok()) return false;
    }
    return true;
  }

  bool step_snapshot() {
    snapshots_.push_back({machine_.shared_staging.base, machine_.shared_staging.content});
    machine_.trace.emit("adversary", "snapshot", {{"index", snapshots_.size() - 1}},
                        Visibility::host_visible);
    return true;
  }

  uint64_t dma_slot() {
    if (!dma_slot_addr_) dma_slot_addr_ = machine_.staging_alloc("dma_bounce", 8 * 1024);
    return *dma_slot_addr_;
  }

  bool step_dma_mix(const Json& a) {
    uint64_t reads = a.value("reads", uint64_t(8));
    uint64_t writes = a.value("writes", uint64_t(8));
    std::vector<uint64_t> sizes = a.value("sizes", std::vector<uint64_t>{8, 16, 32, 64, 128, 256, 4096});
    bool canary = a.value("canary", false);
    uint64_t cpr_addr = machine_.cpr_alloc("dma_mix_target", 8 * 1024);

    Bytes c = canary_bytes("dma");
    if (canary) register_canary(c);

    uint64_t total = reads + writes;
    uint64_t reads_left = reads, writes_left = writes;
    for (uint64_t i = 0; i < total; ++i) {
      bool do_read = reads_left > 0 && (writes_left == 0 || rng_.below(reads_left + writes_left) < reads_left);
      uint64_t size = sizes[rng_.below(sizes.size())];
      if (do_read) {
        --reads_left;
        dma::TransferRequest req{dma::Direction::read_cpr, cpr_addr, dma_slot(), size};
        auto r = dma::read_cpr(machine_, *session_, *rpc_, req, rng_, sc_.timing,
                               sc_.mitigations.constant_time_dma);
        if (!r.ok()) return false;
        samples_.push_back(r.value().second);
      } else {
        --writes_left;
        Bytes data = rng_.bytes(size);
        if (canary && size >= c.size()) std::copy(c.begin(), c.end(), data.begin());
        dma::TransferRequest req{dma::Direction::write_cpr, cpr_addr, dma_slot(), size};
        auto r = dma::write_cpr(machine_, *session_, *rpc_, req, data, rng_, sc_.timing,
                                sc_.mitigations.constant_time_dma);
        if (!r.ok()) return false;
        samples_.push_back(r.value());
        record_capture("dma_wire", dma_slot(), 36 + size, uint32_t(size));
        // Plaintext must land in the CPR and nowhere on the way.
        if (machine_.mem_read(cpr_addr, size) != data) return false;
      }
    }
    machine_.trace.emit("cvm_driver", "dma_mix_done", {{"reads", reads}, {"writes", writes}});
    return true;
  }

  bool step_dma_timing_batch(const Json& a) {
    uint64_t per_class = a.value("per_class", uint64_t(1000));
    std::vector<uint64_t> small = a.value("small_sizes", std::vector<uint64_t>{8, 16, 32, 64, 128, 256});
    uint64_t large = a.value("large_size", uint64_t(4096));
    // Timing-model sampling only; the transfer machinery is exercised by
    // dma_mix and the latency model owns the channel's shape.
    for (uint64_t i = 0; i < per_class; ++i) {
      uint64_t size = small[rng_.below(small.size())];
      samples_.push_back({"write", size,
                          dma::sample_latency(sc_.timing, size, rng_, sc_.mitigations.constant_time_dma)});
    }
    for (uint64_t i = 0; i < per_class; ++i)
      samples_.push_back({"write", large,
                          dma::sample_latency(sc_.timing, large, rng_, sc_.mitigations.constant_time_dma)});
    machine_.trace.emit("cvm_driver", "dma_timing_batch", {{"per_class", per_class}});
    return true;
  }

  bool step_write_csv(const Json& a) {
    csv_files_[a.value("file", std::string("timing.csv"))] = dma::timing_csv(samples_);
    return true;
  }

  bool step_classify_timing(const Json& a) {
    auto c = adversary::classify_timing(samples_);
    if (!c.ok()) return false;
    machine_.trace.emit("adversary", "attack_timing",
                        {{"threshold", c.value().threshold}, {"accuracy", c.value().accuracy}},
                        Visibility::host_visible);
    last_timing_accuracy_ = c.value().accuracy;
    if (a.contains("expect_min") && c.value().accuracy < a.at("expect_min").get<double>()) return false;
    if (a.contains("expect_max") && c.value().accuracy > a.at("expect_max").get<double>()) return false;
    return true;
  }

  bool step_set_mitigation(const Json& a) {
    if (a.contains("encrypt_rpc_metadata")) sc_.mitigations.encrypt_rpc_metadata = a.at("encrypt_rpc_metadata").get<bool>();
    if (a.contains("constant_time_dma")) sc_.mitigations.constant_time_dma = a.at("constant_time_dma").get<bool>();
    if (a.contains("encrypt_scrubber_pushes")) sc_.mitigations.encrypt_scrubber_pushes = a.at("encrypt_scrubber_pushes").get<bool>();
    machine_.trace.emit("sim", "set_mitigation", a);
    return true;
  }

  bool step_uvm_setup() {
    auto ch = uvm::create_sec2_channel(machine_, *session_);
    if (!ch.ok()) return false;
    uvm_.emplace();
    uvm_->sec2_channel = std::move(ch).value();
    auto bs = uvm::bootstrap_wlc_lcic(machine_, *session_, *uvm_);
    return bs.ok();
  }

  bool step_uvm_launch(const Json& a) {
    uint32_t count = a.value("count", 1u);
    bool canary = a.value("canary", false);
    uint64_t target = machine_.cpr_alloc("uvm_launch_target", 64 * 1024);
    Bytes c = canary_bytes("uvm");
    if (canary) register_canary(c);
    for (uint32_t i = 0; i < count; ++i) {
      uint32_t wlc = i % uvm::kWlcCount;
      std::vector<sec2::Method> methods;
      methods.push_back({sec2::Opcode::memset_secure, {target + (i % 16) * 4096, 4096, 0x50 + i % 8}});
      if (canary) {
        // Embed the canary bytes as method args: they must never appear in staging.
        Bytes padded = c;
        padded.resize(((padded.size() + 7) / 8) * 8, 0);
        std::vector<uint64_t> args{uvm::kSetupUpload, target + 60 * 1024, padded.size()};
        for (size_t off = 0; off < padded.size(); off += 8) args.push_back(get_le64(padded.data() + off));
        methods.push_back({sec2::Opcode::setup_channel_state, std::move(args)});
      }
      auto on_blocked = [this](Machine& mm, uint64_t addr) {
        if (faults_ && rpc_)
          (void)fault::raise_fault(mm, *session_, *rpc_, *faults_,
                                   {fault::Kind::non_replayable, addr, 0x300, fault::AccessType::write, 1});
      };
      auto tok = uvm::launch_uvm_push(machine_, *session_, *uvm_, wlc, methods, on_blocked);
      if (!tok.ok()) return false;
      record_capture("semaphore", uvm_->wlc[wlc].semaphore_addr, kSealedSemSlotSize, wlc);
    }
    return true;
  }

  bool step_uvm_poll(const Json& a) {
    uint32_t wlc = a.value("wlc", 0u);
    auto v = poll_semaphore(machine_, *session_, uvm_->wlc[wlc]);
    if (!v.ok()) return false;
    if (a.contains("expect") && v.value() != a.at("expect").get<uint64_t>()) return false;
    return true;
  }

  bool step_scrub(const Json& a) {
    if (!scrubber_) {
      auto ch = sec2::create_swl_scrubber_channel(machine_, *session_);
      if (!ch.ok()) return false;
      scrubber_.emplace(std::move(ch).value());
    }
    std::vector<uint64_t> pages = a.value("pages", std::vector<uint64_t>{4, 5, 6});
    for (uint64_t p : pages) machine_.mem_fill(machine_.cpr.base + p * kPageSize, kPageSize, 0xFF);
    auto r = sec2::submit_scrub(machine_, *session_, *scrubber_, {pages},
                                sc_.mitigations.encrypt_scrubber_pushes);
    if (!r.ok()) return false;
    for (uint64_t p : pages) {
      Bytes content = machine_.mem_read(machine_.cpr.base + p * kPageSize, kPageSize);
      if (std::count(content.begin(), content.end(), 0) != ptrdiff_t(kPageSize)) return false;
    }
    return true;
  }

  bool step_scrub_tamper(const Json& a) {
    if (!scrubber_) {
      auto ch = sec2::create_swl_scrubber_channel(machine_, *session_);
      if (!ch.ok()) return false;
      scrubber_.emplace(std::move(ch).value());
    }
    uint64_t trials = a.value("trials", uint64_t(1000));
    AttackTally& tally = attacks_["scrub_tamper"];
    for (uint64_t t = 0; t < trials; ++t) {
      uint64_t page = 8 + t % 8;
      machine_.mem_fill(machine_.cpr.base + page * kPageSize, kPageSize, 0xEE);
      auto tamper_hook = [&](Machine& mm) {
        // Flip one random bit in the signed surface: pushbuffer or tag buffer.
        bool hit_tags = rng_.chance(0.3);
        uint64_t put = read_gpput(mm, *scrubber_);
        GpFifoEntry entry = read_gpfifo_entry(mm, *scrubber_, put - 1);
        uint64_t base = hit_tags ? scrubber_->scrub_tag_addr : entry.pushbuffer_addr;
        uint64_t span = hit_tags ? 32 : entry.length;
        (void)adversary::tamper(mm, {base, rng_.below(span * 8), std::nullopt});
      };
      uint64_t sem_before = scrubber_->sem_expected;
      auto r = sec2::submit_scrub(machine_, *session_, *scrubber_, {{page}},
                                  sc_.mitigations.encrypt_scrubber_pushes, tamper_hook);
      tally.trials += 1;
      Bytes content = machine_.mem_read(machine_.cpr.base + page * kPageSize, kPageSize);
      bool page_untouched = size_t(std::count(content.begin(), content.end(), 0xEE)) == kPageSize;
      std::string outcome;
      if (r.ok() && r.value() == sem_before + 1 && !page_untouched) {
        // The tampered push actually executed: a real forgery.
        tally.accepted += 1;
        outcome = "accepted";
      } else if (r.ok()) {
        // Truncating the count prefix suppresses the push wholesale; nothing
        // executed and the driver sees missing progress. DoS class.
        if (!page_untouched) return false;
        scrubber_->sem_expected = sem_before;
        tally.detected_other += 1;
        outcome = "rejected_dos";
      } else if (r.error() == Err::auth) {
        tally.rejected_auth += 1;
        outcome = "rejected_auth";
        // Verified rejection means the page is untouched.
        if (!page_untouched) return false;
      } else {
        tally.detected_other += 1;
        outcome = "rejected_other";
      }
      machine_.trace.emit("adversary", "attack_replay",
                          {{"class", "scrub_tamper"}, {"outcome", outcome}},
                          Visibility::host_visible);
    }
    return tally.accepted == 0;
  }

  bool step_sec2_sem_replay() {
    // The scrubber semaphore is plaintext: replaying an old value is accepted
    // by the memory, a DoS-class finding rather than a break.
    if (!scrubber_) return false;
    Bytes old_sem = machine_.mem_read(scrubber_->semaphore_addr, 8);
    auto r = sec2::submit_scrub(machine_, *session_, *scrubber_, {{30}},
                                sc_.mitigations.encrypt_scrubber_pushes);
    if (!r.ok()) return false;
    auto w = machine_.host_write(scrubber_->semaphore_addr, old_sem);
    bool accepted = w.ok() && w.value() == Machine::WriteOutcome::ok;
    uint64_t observed = get_le64(machine_.mem_read(scrubber_->semaphore_addr, 8).data());
    machine_.trace.emit("adversary", "attack_replay",
                        {{"class", "sec2_plain_semaphore"},
                         {"outcome", accepted ? "accepted" : "rejected_auth"},
                         {"observed", observed},
                         {"dos_only", true}},
                        Visibility::host_visible);
    machine_.trace.emit("cvm_driver", "attack_classified",
                        {{"kind", "dos"}, {"surface", "scrubber_semaphore"}, {"observed", observed}});
    AttackTally& tally = attacks_["sec2_plain_semaphore"];
    tally.trials += 1;
    tally.accepted += accepted ? 1 : 0;
    return accepted && observed != r.value();
  }

  bool step_fault_register() {
    auto fc = fault::register_shadow_buffers(machine_, *session_, *rpc_);
    if (!fc.ok()) return false;
    faults_.emplace(std::move(fc).value());
    return true;
  }

  bool step_fault_raise(const Json& a) {
    fault::FaultPacket p;
    p.kind = a.value("kind", std::string("replayable")) == "replayable" ? fault::Kind::replayable
                                                                        : fault::Kind::non_replayable;
    p.fault_addr = a.value("addr", uint64_t(0xdead000));
    p.engine_id = a.value("engine_id", uint16_t(7));
    p.access_type = fault::AccessType::write;
    return fault::raise_fault(machine_, *session_, *rpc_, *faults_, p).ok();
  }

  bool step_fault_handle(const Json& a) {
    // Drain the RPC event notifications first, then the shadow buffers.
    for (;;) {
      auto st = rpc::recv_status(machine_, *session_, *rpc_);
      if (!st.ok()) break;
    }
    auto packets = fault::handle_faults(machine_, *session_, *faults_);
    if (!packets.ok()) return false;
    if (a.contains("expect_count") && packets.value().size() != a.at("expect_count").get<size_t>())
      return false;
    return true;
  }

  bool step_fault_ring_full() {
    uint32_t cap = machine_.config.fault_ring_capacity;
    for (uint32_t i = 0; i + 1 < cap; ++i) {
      auto r = fault::raise_fault(machine_, *session_, *rpc_, *faults_,
                                  {fault::Kind::replayable, 0x1000 + i, 1, fault::AccessType::read, 1});
      if (!r.ok()) return false;
    }
    auto overflow = fault::raise_fault(machine_, *session_, *rpc_, *faults_,
                                       {fault::Kind::replayable, 0xffff, 1, fault::AccessType::read, 1});
    bool ok = !overflow.ok() && overflow.error() == Err::ring_full;
    for (;;) {
      auto st = rpc::recv_status(machine_, *session_, *rpc_);
      if (!st.ok()) break;
    }
    auto drained = fault::handle_faults(machine_, *session_, *faults_);
    return ok && drained.ok() && drained.value().size() == cap - 1;
  }

  bool step_fault_tamper(const Json& a) {
    uint64_t trials = a.value("trials", uint64_t(1000));
    AttackTally& tally = attacks_["fault"];
    for (uint64_t t = 0; t < trials; ++t) {
      fault::Kind kind = rng_.chance(0.5) ? fault::Kind::replayable : fault::Kind::non_replayable;
      auto r = fault::raise_fault(machine_, *session_, *rpc_, *faults_,
                                  {kind, 0xbeef000 + t, uint16_t(t % 16), fault::AccessType::write, 1});
      if (!r.ok()) return false;
      for (;;) {
        auto st = rpc::recv_status(machine_, *session_, *rpc_);
        if (!st.ok()) break;
      }
      fault::ShadowBuffer& buf = kind == fault::Kind::replayable ? faults_->replayable
                                                                 : faults_->non_replayable;
      uint64_t slot_addr = buf.ring_addr + uint64_t(buf.get % buf.capacity) * fault::kSlotSize;
      Bytes original = machine_.mem_read(slot_addr, fault::kSlotSize);
      uint32_t mode = uint32_t(rng_.below(3));
      if (mode == 0) {
        (void)adversary::tamper(machine_, {slot_addr, 0, std::nullopt});  // flip valid byte bit
      } else if (mode == 1) {
        (void)adversary::tamper(machine_, {slot_addr + 4 + 28, rng_.below(64 * 8), std::nullopt});
      } else if (last_fault_slot_.size() == fault::kSlotSize) {
        (void)machine_.host_write(slot_addr, last_fault_slot_);  // replay an old packet
      } else {
        (void)adversary::tamper(machine_, {slot_addr + 4 + 28, 1, std::nullopt});
        mode = 1;
      }
      auto handled = fault::handle_faults(machine_, *session_, *faults_);
      tally.trials += 1;
      std::string outcome;
      if (handled.ok()) {
        tally.accepted += 1;
        outcome = "accepted";
      } else if (handled.error() == Err::replay) {
        tally.rejected_replay += 1;
        outcome = "rejected_replay";
      } else {
        tally.rejected_auth += 1;
        outcome = "rejected_auth";
      }
      machine_.trace.emit("adversary", "attack_replay", {{"class", "fault"}, {"outcome", outcome}},
                          Visibility::host_visible);
      // Restore the genuine slot and drain so the ring stays usable.
      machine_.mem_write(slot_addr, original);
      auto drained = fault::handle_faults(machine_, *session_, *faults_);
      if (!drained.ok() || drained.value().size() != 1) return false;
      last_fault_slot_ = original;
    }
    return tally.accepted == 0;
  }

  // ---- randomized replay/tamper trials per AEAD channel class ----

  bool step_replay_trials(const Json& a) {
    std::string cls = a.at("class").get<std::string>();
    uint64_t trials = a.value("trials", uint64_t(1000));
    AttackTally& tally = attacks_[cls];
    for (uint64_t t = 0; t < trials; ++t) {
      adversary::AttackOutcome outcome;
      if (cls == "rpc") outcome = replay_trial_rpc();
      else if (cls == "dma") outcome = replay_trial_dma();
      else if (cls == "wlc_run_push") outcome = replay_trial_wlc(t, true);
      else if (cls == "uvm_ce_push") outcome = replay_trial_wlc(t, false);
      else if (cls == "semaphore") outcome = replay_trial_semaphore(t);
      else if (cls == "fault_packet") outcome = replay_trial_fault(t);
      else throw ConfigError("unknown replay class: " + cls);
      tally.trials += 1;
      switch (outcome) {
        case adversary::AttackOutcome::accepted: tally.accepted += 1; break;
        case adversary::AttackOutcome::rejected_auth: tally.rejected_auth += 1; break;
        case adversary::AttackOutcome::rejected_replay: tally.rejected_replay += 1; break;
      }
      machine_.trace.emit("adversary", "attack_replay",
                          {{"class", cls}, {"outcome", adversary::to_string(outcome)}},
                          Visibility::host_visible);
    }
    return tally.accepted == 0;
  }

  adversary::AttackOutcome replay_trial_rpc() {
    // Send a command, then attack the staged element before the GSP serves it.
    rpc::RpcMessage msg;
    msg.function = rpc::kCmdNop;
    msg.params = rng_.bytes(24);
    auto seq = rpc::send_command(machine_, *session_, *rpc_, msg);
    if (!seq.ok()) throw ConfigError("rpc send failed in replay trial");
    uint32_t slot = (rpc_->tx_write + 62) % 63;
    uint64_t elem_addr = rpc_->infra.tx_elem(slot);
    Bytes fresh = machine_.mem_read(elem_addr, kPageSize);
    Bytes page = fresh;

    uint32_t mode = uint32_t(rng_.below(3));
    if (mode == 0 && !last_rpc_element_.empty()) {
      (void)machine_.host_write(elem_addr, last_rpc_element_);  // verbatim replay of an old element
    } else if (mode == 1) {
      flip_bit_and_fix_crc(page, 44 * 8 + rng_.below(512));  // payload bit, checksum repaired
      (void)machine_.host_write(elem_addr, page);
    } else {
      flip_bit_and_fix_crc(page, rng_.below(16 * 8));  // auth tag bit
      (void)machine_.host_write(elem_addr, page);
    }
    last_rpc_element_ = fresh;

    auto svc = rpc::gsp_service(machine_, *session_, *rpc_);
    adversary::AttackOutcome outcome = adversary::AttackOutcome::rejected_auth;
    if (svc.ok() && !svc.value().empty()) {
      const std::string& r = svc.value().back().result;
      outcome = r == "ok"       ? adversary::AttackOutcome::accepted
                : r == "replay" ? adversary::AttackOutcome::rejected_replay
                                : adversary::AttackOutcome::rejected_auth;
    }
    for (;;) {
      auto st = rpc::recv_status(machine_, *session_, *rpc_);
      if (!st.ok()) break;
    }
    resync_rpc_after_attack();
    return outcome;
  }

  adversary::AttackOutcome replay_trial_dma() {
    uint64_t size = 64;
    Bytes data = rng_.bytes(size);
    uint32_t mode = uint32_t(rng_.below(2));
    dma::TamperHook hook = [&](Machine& mm) {
      Bytes staged = mm.mem_read(dma_slot(), 36 + size);
      if (mode == 0 && last_dma_wire_.size() == 36 + size) {
        (void)mm.host_write(dma_slot(), last_dma_wire_);
      } else {
        mode = 1;
        (void)adversary::tamper(mm, {dma_slot() + rng_.below(36 + size), rng_.below(8), std::nullopt});
      }
      last_dma_wire_ = staged;
    };
    dma::TransferRequest req{dma::Direction::write_cpr, machine_.cpr.base + 0x40000, dma_slot(), size};
    auto r = dma::write_cpr(machine_, *session_, *rpc_, req, data, rng_, sc_.timing,
                            sc_.mitigations.constant_time_dma, hook);
    last_dma_wire_ = machine_.mem_read(dma_slot(), 36 + size);
    if (r.ok()) return adversary::AttackOutcome::accepted;
    // Burn bookkeeping keeps the channel usable next trial.
    if (r.error() == Err::replay) {
      session_->dma_cpu_gsp.rx.recv_last_accepted = session_->dma_cpu_gsp.tx.send_counter - 1;
      return adversary::AttackOutcome::rejected_replay;
    }
    session_->dma_cpu_gsp.rx.recv_last_accepted = session_->dma_cpu_gsp.tx.send_counter - 1;
    return adversary::AttackOutcome::rejected_auth;
  }

  adversary::AttackOutcome replay_trial_wlc(uint64_t t, bool attack_run_push) {
    uint32_t wlc = uint32_t(t % uvm::kWlcCount);
    uvm::WlcSlots& sl = uvm_->slots[wlc];
    uint64_t target_slot = attack_run_push ? sl.run_seal_staging : sl.uvm_seal_staging;
    uint32_t mode = uint32_t(rng_.below(2));
    Bytes& stash = attack_run_push ? last_run_wire_[wlc] : last_uvm_wire_[wlc];
    uint64_t slot_len = attack_run_push ? uvm::kRunSlotSize : uint64_t(128);
    uvm::LaunchHooks hooks;
    hooks.after_stage = [&](Machine& mm) {
      Bytes staged = mm.mem_read(target_slot, slot_len);
      if (mode == 0 && !stash.empty()) {
        (void)mm.host_write(target_slot, stash);
      } else {
        (void)adversary::tamper(mm, {target_slot + rng_.below(48), rng_.below(8), std::nullopt});
      }
      stash = staged;
    };
    std::vector<sec2::Method> methods{
        {sec2::Opcode::memset_secure, {machine_.cpr.base + 0x50000, 256, uint64_t(t & 0xFF)}}};
    auto tok = uvm::launch_uvm_push(machine_, *session_, *uvm_, wlc, methods, {}, hooks);
    if (tok.ok()) return adversary::AttackOutcome::accepted;
    return tok.error() == Err::replay ? adversary::AttackOutcome::rejected_replay
                                      : adversary::AttackOutcome::rejected_auth;
  }

  adversary::AttackOutcome replay_trial_semaphore(uint64_t t) {
    uint32_t wlc = uint32_t(t % uvm::kWlcCount);
    Channel& ch = uvm_->wlc[wlc];
    // Launch, poll legitimately (the driver has seen the fresh value), then
    // attack the slot and poll again.
    std::vector<sec2::Method> methods{
        {sec2::Opcode::memset_secure, {machine_.cpr.base + 0x60000, 64, uint64_t(t & 0xFF)}}};
    auto tok = uvm::launch_uvm_push(machine_, *session_, *uvm_, wlc, methods);
    if (!tok.ok()) throw ConfigError("launch failed in semaphore trial");
    if (!poll_semaphore(machine_, *session_, ch).ok())
      throw ConfigError("legit poll failed in semaphore trial");
    Bytes fresh = machine_.mem_read(ch.semaphore_addr, kSealedSemSlotSize);
    uint32_t mode = uint32_t(rng_.below(2));
    Bytes& stash = last_sem_wire_[wlc];
    if (mode == 0 && !stash.empty()) {
      (void)machine_.host_write(ch.semaphore_addr, stash);
    } else {
      (void)adversary::tamper(machine_, {ch.semaphore_addr + rng_.below(48), rng_.below(8), std::nullopt});
    }
    auto v = poll_semaphore(machine_, *session_, ch);
    machine_.mem_write(ch.semaphore_addr, fresh);
    stash = fresh;
    if (v.ok()) return adversary::AttackOutcome::accepted;
    return v.error() == Err::replay ? adversary::AttackOutcome::rejected_replay
                                    : adversary::AttackOutcome::rejected_auth;
  }

  adversary::AttackOutcome replay_trial_fault(uint64_t t) {
    fault::Kind kind = rng_.chance(0.5) ? fault::Kind::replayable : fault::Kind::non_replayable;
    auto r = fault::raise_fault(machine_, *session_, *rpc_, *faults_,
                                {kind, 0xabc000 + t, uint16_t(t % 8), fault::AccessType::read, 1});
    if (!r.ok()) throw ConfigError("raise failed in fault trial");
    for (;;) {
      auto st = rpc::recv_status(machine_, *session_, *rpc_);
      if (!st.ok()) break;
    }
    fault::ShadowBuffer& buf = kind == fault::Kind::replayable ? faults_->replayable
                                                               : faults_->non_replayable;
    uint64_t slot_addr = buf.ring_addr + uint64_t(buf.get % buf.capacity) * fault::kSlotSize;
    Bytes original = machine_.mem_read(slot_addr, fault::kSlotSize);
    uint32_t mode = uint32_t(rng_.below(3));
    if (mode == 0 && last_fault_slot_.size() == fault::kSlotSize) {
      (void)machine_.host_write(slot_addr, last_fault_slot_);
    } else if (mode == 1) {
      (void)adversary::tamper(machine_, {slot_addr, 0, std::nullopt});  // valid flag (AAD)
    } else {
      (void)adversary::tamper(machine_, {slot_addr + 4 + 32, rng_.below(64 * 8), std::nullopt});
    }
    auto handled = fault::handle_faults(machine_, *session_, *faults_);
    adversary::AttackOutcome outcome =
        handled.ok() ? adversary::AttackOutcome::accepted
        : handled.error() == Err::replay ? adversary::AttackOutcome::rejected_replay
                                         : adversary::AttackOutcome::rejected_auth;
    machine_.mem_write(slot_addr, original);
    auto drained = fault::handle_faults(machine_, *session_, *faults_);
    if (!drained.ok()) throw ConfigError("fault drain failed");
    last_fault_slot_ = original;
    return outcome;
  }

  void resync_rpc_after_attack() {
    session_->rpc_cpu_gsp.rx.recv_last_accepted = session_->rpc_cpu_gsp.tx.send_counter - 1;
    session_->rpc_gsp_cpu.rx.recv_last_accepted = session_->rpc_gsp_cpu.tx.send_counter - 1;
  }

  bool step_attest(const Json& a) {
    attest::fixtures::Bundle clean = attest::fixtures::make_clean(machine_, attest_nonce());
    auto verdict = attest::attest(machine_, clean.services, clean.nonce, true);
    std::string expect = a.value("expect", std::string("pass"));
    if (expect == "pass") return verdict.pass && machine_.attestation_ready;
    if (verdict.pass || verdict.reasons.empty()) return false;
    return std::string(attest::to_string(verdict.reasons[0])) == expect;
  }

  bool step_attest_matrix() {
    auto cases = attest::fixtures::negative_matrix(machine_, attest_nonce());
    bool all_ok = true;
    for (auto& c : cases) {
      auto v = attest::verify_evidence(c.bundle.evidence, c.bundle.services, c.bundle.nonce,
                                       &machine_.trace);
      bool ok;
      if (!c.expected) {
        ok = v.pass;
      } else {
        ok = !v.pass && v.reasons.size() == 1 && v.reasons[0] == *c.expected;
      }
      machine_.trace.emit("cvm_verifier", "attest_case",
                          {{"name", c.name},
                           {"ok", ok},
                           {"verdict", v.to_json()}});
      all_ok = all_ok && ok;
    }
    // Root-substitution property: garbage in-evidence root, same verdict.
    auto clean = attest::fixtures::make_clean(machine_, attest_nonce());
    clean.evidence.chain.certs[4].public_key = rng_.bytes(32);
    clean.evidence.chain.certs[4].signature = rng_.bytes(64);
    auto v = attest::verify_evidence(clean.evidence, clean.services, clean.nonce, &machine_.trace);
    machine_.trace.emit("cvm_verifier", "attest_case",
                        {{"name", "garbage_in_evidence_root"}, {"ok", v.pass}, {"verdict", v.to_json()}});
    return all_ok && v.pass;
  }

  bool step_soft_reset() {
    sec2::soft_reset(machine_);
    rpc_.reset();
    uvm_.reset();
    faults_.reset();
    scrubber_.reset();
    return true;
  }

  bool step_canary_sweep() {
    uint64_t hits = 0;
    auto sweep = [&](ByteView view) {
      for (const auto& c : canaries_) hits += count_subsequence(view, c);
    };
    sweep(machine_.shared_staging.content);
    sweep(machine_.vidmem.content);
    Bytes private_view = machine_.private_view(machine_.cvm_private.base, machine_.cvm_private.size);
    sweep(private_view);
    machine_.trace.emit("adversary", "canary_sweep",
                        {{"canaries", canaries_.size()}, {"hits", hits}}, Visibility::host_visible);
    return hits == 0;
  }

  bool step_leak_surface_check() {
    if (!rpc_) return false;
    const rpc::RpcInfra& infra = rpc_->infra;
    bool ok = true;
    auto host_bytes = [&](uint64_t addr, uint64_t len) {
      auto r = machine_.host_read(addr, len);
      if (!r.ok() || r.value().kind != AccessResult::Kind::value) throw ConfigError("host read failed");
      return r.value().bytes;
    };

    // Address table is always legible and self-referential.
    Bytes table = host_bytes(infra.table_addr, kPageSize);
    ok = ok && get_le64(table.data()) == infra.table_addr;
    machine_.trace.emit("adversary", "leak_check",
                        {{"surface", "rpc_addr_table"}, {"plaintext", true}}, Visibility::host_visible);

    // Queue headers and element headers: legible cursors iff metadata is not sealed.
    Bytes header = host_bytes(infra.tx_header(), 8);
    bool cursors_legible = get_le32(header.data()) < 63 && get_le32(header.data() + 4) < 63;
    machine_.trace.emit("adversary", "leak_check",
                        {{"surface", "rpc_queue_header"}, {"plaintext", cursors_legible}},
                        Visibility::host_visible);
    ok = ok && cursors_legible == !rpc_->encrypt_metadata;

    if (!truth_elem_classes_.empty()) {
      Bytes elem = host_bytes(infra.tx_elem(0), kPageSize);
      uint32_t elem_count = get_le32(elem.data() + 40);
      bool header_legible = elem_count >= 1 && elem_count < 63;
      machine_.trace.emit("adversary", "leak_check",
                          {{"surface", "rpc_elem_header"}, {"plaintext", header_legible}},
                          Visibility::host_visible);
      ok = ok && header_legible == !rpc_->encrypt_metadata;
    }

    if (uvm_) {
      // SEC2 channel control state is plaintext in staging.
      Bytes gpput = host_bytes(uvm_->sec2_channel.cb_addr, 8);
      bool legible = get_le64(gpput.data()) <= 4096;
      machine_.trace.emit("adversary", "leak_check",
                          {{"surface", "sec2_gpfifo_gpput"}, {"plaintext", legible}},
                          Visibility::host_visible);
      ok = ok && legible;
      // WLC control state is not host readable at all.
      auto cprr = machine_.host_read(uvm_->wlc[0].cb_addr, 8);
      bool faulted = cprr.ok() && cprr.value().kind == AccessResult::Kind::fault;
      machine_.trace.emit("adversary", "leak_check",
                          {{"surface", "wlc_control_block"}, {"plaintext", false}, {"faulted", faulted}},
                          Visibility::host_visible);
      ok = ok && faulted;
    }
    if (scrubber_) {
      Bytes push = host_bytes(scrubber_->pushbuf_addr, 8);
      uint32_t method_count = get_le32(push.data());
      bool legible = method_count >= 1 && method_count < 4096;
      machine_.trace.emit("adversary", "leak_check",
                          {{"surface", "scrubber_pushbuffer"},
                           {"plaintext", legible}},
                          Visibility::host_visible);
      ok = ok && legible == !sc_.mitigations.encrypt_scrubber_pushes;
      Bytes tag = host_bytes(scrubber_->scrub_tag_addr, 32);
      bool nonzero = std::count(tag.begin(), tag.end(), 0) != 32;
      machine_.trace.emit("adversary", "leak_check",
                          {{"surface", "scrubber_tag_buffer"}, {"plaintext", nonzero}},
                          Visibility::host_visible);
      ok = ok && nonzero;
    }
    if (faults_) {
      auto put = machine_.bar0_read(kFaultPutReplayableOffset, Actor::host);
      bool visible = put.ok() && put.value().kind == AccessResult::Kind::value;
      machine_.trace.emit("adversary", "leak_check",
                          {{"surface", "fault_put_register"}, {"plaintext", visible}},
                          Visibility::host_visible);
      ok = ok && visible;
    }
    return ok;
  }

  bool step_iv_uniqueness() {
    std::vector<IvLog::Entry> all = old_iv_entries_;
    if (session_)
      all.insert(all.end(), session_->iv_log().entries.begin(), session_->iv_log().entries.end());
    std::sort(all.begin(), all.end(), [](const IvLog::Entry& a, const IvLog::Entry& b) {
      return std::tie(a.key_index, a.salt, a.counter) < std::tie(b.key_index, b.salt, b.counter);
    });
    bool unique = std::adjacent_find(all.begin(), all.end()) == all.end();
    machine_.trace.emit("sim", "iv_uniqueness", {{"seals", all.size()}, {"unique", unique}});
    return unique;
  }

  bool step_scan_table(const Json& a) {
    Bytes dump = machine_.dump_system_memory();
    auto hits = adversary::scan_for_address_table(dump, machine_.cvm_private.base);
    machine_.trace.emit("adversary", "attack_scan", {{"hits", hits.size()}},
                        Visibility::host_visible);
    if (a.contains("expect_hits") && hits.size() != a.at("expect_hits").get<size_t>()) return false;
    if (a.value("expect_table", true) && rpc_) {
      bool found = false;
      for (const auto& h : hits) found = found || h.page_addr == rpc_->infra.table_addr;
      if (!found) return false;
    }
    return true;
  }

  bool step_plant_decoy() {
    uint64_t addr = machine_.staging_alloc("decoy_page", kPageSize);
    uint8_t le[8];
    put_le64(le, addr);
    (void)machine_.host_write(addr, ByteView(le, 8));
    machine_.trace.emit("adversary", "decoy_planted", {{"addr", addr}}, Visibility::host_visible);
    return true;
  }

  bool step_infer_rpc(const Json& a) {
    if (!rpc_ || snapshots_.empty()) return false;
    auto report = adversary::infer_rpc_activity(snapshots_, rpc_->infra.table_addr);
    // Accuracy of the elemCount-class inference against ground truth.
    size_t compared = std::max(truth_elem_classes_.size(), report.elements.size());
    size_t matches = 0;
    for (size_t i = 0; i < std::min(truth_elem_classes_.size(), report.elements.size()); ++i)
      if ((report.elements[i].elem_count > 1) == truth_elem_classes_[i]) ++matches;
    double accuracy = compared == 0 ? 0.0 : double(matches) / double(compared);
    machine_.trace.emit("adversary", "attack_infer",
                        {{"send_count", report.send_count},
                         {"recv_count", report.recv_count},
                         {"elements", report.elements.size()},
                         {"accuracy", accuracy}},
                        Visibility::host_visible);
    if (a.contains("expect_min") && accuracy < a.at("expect_min").get<double>()) return false;
    if (a.contains("expect_max") && accuracy > a.at("expect_max").get<double>()) return false;
    return true;
  }

  bool step_bar0_audit(const Json& a) {
    auto stats = adversary::audit_bar0(machine_);
    if (a.contains("expect_values") && stats.values != a.at("expect_values").get<uint64_t>()) return false;
    if (a.contains("expect_errors") && stats.errors != a.at("expect_errors").get<uint64_t>()) return false;
    if (a.contains("expect_zeros") && stats.zeros != a.at("expect_zeros").get<uint64_t>()) return false;
    return true;
  }

  bool step_dump_regions() {
    dumps_requested_ = true;
    return true;
  }

  // ---- helpers ----

  Bytes attest_nonce() {
    Bytes nonce = rng_.bytes(32);
    return nonce;
  }

  void register_canary(const Bytes& c) {
    for (const auto& existing : canaries_)
      if (existing == c) return;
    canaries_.push_back(c);
  }

  void record_capture(const std::string& cls, uint64_t addr, uint64_t len, uint32_t channel) {
    if (captures_.size() >= 256) return;
    captures_.push_back({cls, addr, machine_.mem_read(addr, len), channel});
  }

  adversary::AttackOutcome replay_one(const Capture& cap) {
    if (cap.cls == "rpc_element") {
      uint32_t slot = rpc_->tx_write;
      (void)machine_.host_write(rpc_->infra.tx_elem(slot), cap.bytes);
      uint8_t le[4];
      put_le32(le, (slot + 1) % 63);
      (void)machine_.host_write(rpc_->infra.tx_header() + 4, ByteView(le, 4));
      auto svc = rpc::gsp_service(machine_, *session_, *rpc_);
      if (svc.ok() && !svc.value().empty()) {
        const std::string& r = svc.value().back().result;
        if (r == "ok") return adversary::AttackOutcome::accepted;
        if (r == "replay") return adversary::AttackOutcome::rejected_replay;
      }
      return adversary::AttackOutcome::rejected_auth;
    }
    if (cap.cls == "dma_wire") {
      (void)machine_.host_write(cap.addr, cap.bytes);
      dma::TransferRequest req{dma::Direction::write_cpr, machine_.cpr.base, cap.addr,
                               cap.bytes.size() - 36};
      auto code = dma::detail::transfer_rpc(machine_, *session_, *rpc_, rpc::kCmdMemWrite, req);
      if (code.ok() && code.value() == rpc::kStatusOk) return adversary::AttackOutcome::accepted;
      if (code.ok() && code.value() == rpc::kStatusReplay) return adversary::AttackOutcome::rejected_replay;
      return adversary::AttackOutcome::rejected_auth;
    }
    if (cap.cls == "semaphore") {
      Channel& ch = uvm_->wlc[cap.channel];
      (void)machine_.host_write(cap.addr, cap.bytes);
      auto v = poll_semaphore(machine_, *session_, ch);
      if (v.ok()) return adversary::AttackOutcome::accepted;
      return v.error() == Err::replay ? adversary::AttackOutcome::rejected_replay
                                      : adversary::AttackOutcome::rejected_auth;
    }
    throw ConfigError("unknown capture class: " + cap.cls);
  }

  void flip_bit_and_fix_crc(Bytes& page, uint64_t bit) {
    page[bit / 8 % page.size()] ^= uint8_t(1u << (bit % 8));
    Bytes copy = page;
    put_le32(copy.data() + 32, 0);
    put_le32(page.data() + 32, rpc::compute_checksum(ByteView(copy.data(), kPageSize)));
  }

  void write_artifacts() {
    if (out_dir_.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(out_dir_);
    machine_.trace.write_file((fs::path(out_dir_) / "trace.jsonl").string());
    std::ofstream((fs::path(out_dir_) / "report.json")) << report().dump(2) << "\n";
    for (const auto& [name, text] : csv_files_) std::ofstream(fs::path(out_dir_) / name) << text;
    if (dumps_requested_) {
      auto write_bin = [&](const std::string& name, const Bytes& data) {
        std::ofstream f(fs::path(out_dir_) / name, std::ios::binary);
        f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
      };
      write_bin("dump_system.bin", machine_.dump_system_memory());
      write_bin("dump_shared_staging.bin", machine_.host_view_of(machine_.shared_staging));
      write_bin("dump_vidmem.bin", machine_.host_view_of(machine_.vidmem));
      write_bin("dump_cvm_private.bin", machine_.host_view_of(machine_.cvm_private));
    }
  }

  Scenario sc_;
  std::string out_dir_;
  Rng rng_;
  Machine machine_;
  std::optional<Session> session_;
  std::optional<rpc::RpcChannel> rpc_;
  std::optional<uvm::UvmContext> uvm_;
  std::optional<fault::FaultChannels> faults_;
  std::optional<Channel> scrubber_;
  std::optional<uint64_t> dma_slot_addr_;

  std::vector<dma::TimingSample> samples_;
  std::vector<adversary::StagingSnapshot> snapshots_;
  std::vector<Bytes> canaries_;
  std::vector<bool> truth_elem_classes_;
  std::vector<IvLog::Entry> old_iv_entries_;
  std::vector<Capture> captures_;
  std::map<std::string, AttackTally> attacks_;
  std::map<std::string, std::string> csv_files_;
  Json step_results_ = Json::array();
  double last_timing_accuracy_ = 0.0;
  bool dumps_requested_ = false;

  Bytes last_rpc_element_, last_dma_wire_, last_fault_slot_;
  std::map<uint32_t, Bytes> last_run_wire_, last_uvm_wire_, last_sem_wire_;
};

// Trace-event names that demonstrate each module operation; the coverage test
// asserts the union over all bundled scenarios contains every one.
inline const std::vector<std::string>& required_operation_events() {
  static const std::vector<std::string> events = {
      "machine_build",     "set_cc_mode",     "boot_done",        "session_establish",
      "get_kmb",           "rpc_init",        "rpc_send",         "rpc_service",
      "rpc_status",        "dma_read",        "dma_write",        "sec2_channel_create",
      "scrub_submit",      "scrub_verify",    "scrub_done",       "sec2_execute",
      "reset",             "uvm_bootstrap",   "wlc_decrypt",      "wlc_run",
      "lcic_advance",      "ce_exec",         "semaphore_update", "semaphore_poll",
      "fault_register",    "fault_raise",     "fault_handle",     "evidence_collect",
      "chain_verify",      "ocsp_query",      "report_verify",    "rim_fetch",
      "measurement_compare", "attest_verdict", "ready",           "attack_scan",
      "attack_replay",     "attack_infer",    "attack_timing",    "bar0_audit",
      "tamper",            "canary_sweep",    "doorbell",
  };
  return events;
}

}  // namespace gpucc::scenario
