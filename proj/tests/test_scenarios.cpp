// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "gpucc/report.hpp"
#include "gpucc/scenario.hpp"

using namespace gpucc;

namespace {

const std::vector<std::string>& bundled_scenarios() {
  static const std::vector<std::string> names = {
      "paper-e2e",     "rpc-scan-attack", "timing-channel",       "replay-suite",
      "attest-negative-matrix", "scrub-tamper", "fault-tamper",
  };
  return names;
}

scenario::Scenario load(const std::string& name) {
  return scenario::Scenario::load_file(std::string(GPUCC_SCENARIO_DIR) + "/" + name + ".json");
}

}  // namespace

TEST_CASE("scenario files parse and reference known ops") {
  for (const auto& name : bundled_scenarios()) {
    auto sc = load(name);
    CHECK(sc.name == name);
    CHECK(!sc.steps.empty());
  }
}

TEST_CASE("fast scenarios run clean end to end") {
  for (const auto& name : {"rpc-scan-attack", "timing-channel", "attest-negative-matrix"}) {
    scenario::Runner runner(load(name));
    INFO("scenario " << name);
    CHECK(runner.run() == 0);
  }
}

TEST_CASE("identical seeds give byte-identical traces") {
  for (const auto& name : {"rpc-scan-attack", "timing-channel"}) {
    scenario::Runner a(load(name));
    scenario::Runner b(load(name));
    REQUIRE(a.run() == 0);
    REQUIRE(b.run() == 0);
    INFO("scenario " << name);
    CHECK(crypto::sha256(to_bytes(a.trace_jsonl())) == crypto::sha256(to_bytes(b.trace_jsonl())));
  }

  // A different seed produces a different trace.
  auto sc = load("timing-channel");
  sc.seed = 9999;
  sc.raw["seed"] = 9999;
  scenario::Runner c(std::move(sc));
  scenario::Runner d(load("timing-channel"));
  REQUIRE(c.run() == 0);
  REQUIRE(d.run() == 0);
  CHECK(c.trace_jsonl() != d.trace_jsonl());
}

TEST_CASE("step failures surface in the exit code with the step index") {
  Json doc;
  doc["name"] = "failing";
  doc["seed"] = 5;
  doc["steps"] = Json::array({Json{{"op", "set_cc_mode"}, {"enable", true}},
                              Json{{"op", "boot"}},
                              Json{{"op", "establish"}},
                              Json{{"op", "infer_rpc"}}});  // no snapshots: fails
  scenario::Runner runner(scenario::Scenario::from_json(doc));
  CHECK(runner.run() == 1);
  auto report = runner.report();
  bool found = false;
  for (const auto& step : report.at("steps"))
    if (step.value("ok", true) == false) {
      found = true;
      CHECK(step.at("index").get<int>() == 3);
    }
  CHECK(found);
}

TEST_CASE("unknown step op is a config error") {
  Json doc;
  doc["name"] = "bad";
  doc["seed"] = 5;
  doc["steps"] = Json::array({Json{{"op", "warp_drive"}}});
  scenario::Runner runner(scenario::Scenario::from_json(doc));
  CHECK(runner.run() == 2);
}

TEST_CASE("trace report summarizes surfaces and attacks") {
  scenario::Runner runner(load("rpc-scan-attack"));
  REQUIRE(runner.run() == 0);

  auto events = report::parse_jsonl(runner.trace_jsonl());
  auto summary = report::summarize(events);
  CHECK(summary.events > 0);
  REQUIRE(summary.surfaces.count("rpc_elem_header") == 1);
  // Both phases ran: headers appear as plaintext (phase 1) and sealed (mitigated phase).
  CHECK(summary.surfaces.at("rpc_elem_header").plaintext > 0);
  CHECK(summary.surfaces.at("rpc_elem_header").sealed > 0);
  CHECK(summary.surfaces.at("rpc_payload").plaintext == 0);
  CHECK(summary.has_scan);

  std::string text = report::render_text(summary);
  CHECK(text.find("leak budget") != std::string::npos);

  SECTION("empty trace renders an empty summary") {
    auto empty = report::summarize({});
    CHECK(empty.events == 0);
    CHECK(report::render_text(empty) == "events: 0\n");
  }

  SECTION("corrupt JSONL names the line number") {
    std::string text2 = "{\"event\":\"ok\"}\nnot json\n";
    try {
      report::parse_jsonl(text2);
      FAIL("expected parse error");
    } catch (const report::ParseError& e) {
      CHECK(e.line == 2);
    }
  }
}

TEST_CASE("every module operation is reachable from the bundled scenarios") {
  std::set<std::string> seen;
  for (const auto& name : bundled_scenarios()) {
    auto sc = load(name);
    // Trim the heavy scenarios for coverage purposes: fewer trials, same ops.
    for (auto& step : sc.steps) {
      if (step.contains("trials")) step["trials"] = 3;
      if (step.value("op", "") == "dma_mix") {
        step["reads"] = 3;
        step["writes"] = 5;
      }
      if (step.value("op", "") == "uvm_launch") step["count"] = 4;
      if (step.value("op", "") == "dma_timing_batch") step["per_class"] = 60;
      if (step.value("op", "") == "classify_timing") {
        step.erase("expect_min");
        step.erase("expect_max");
      }
      if (step.value("op", "") == "uvm_poll") step.erase("expect");
    }
    scenario::Runner runner(std::move(sc));
    INFO("scenario " << name);
    CHECK(runner.run() == 0);
    for (const auto& ev : runner.machine().trace.events()) seen.insert(ev.name);
  }
  for (const auto& op_event : scenario::required_operation_events()) {
    INFO("operation event " << op_event);
    CHECK(seen.count(op_event) == 1);
  }
}

TEST_CASE("captured blobs replay through the CLI path and are rejected") {
  auto sc = load("paper-e2e");
  for (auto& step : sc.steps) {
    if (step.value("op", "") == "dma_mix") {
      step["reads"] = 2;
      step["writes"] = 4;
    }
    if (step.value("op", "") == "uvm_launch") step["count"] = 4;
    if (step.value("op", "") == "uvm_poll") step.erase("expect");
  }
  scenario::Runner runner(std::move(sc));
  REQUIRE(runner.run() == 0);
  REQUIRE(!runner.captures().empty());
  Json outcome = runner.replay_capture(0);
  CHECK(outcome.at("outcome").get<std::string>() != "accepted");
}
