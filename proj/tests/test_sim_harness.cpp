#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "iotad/sim.hpp"
#include "iotad/trace_ingest.hpp"
#include "test_helpers.hpp"

using namespace iotad;
using namespace iotad::sim;
using testutil::expect_error;
using testutil::ip;

namespace {

ScenarioConfig tiny_scenario(std::uint64_t seed = 7) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.duration_ticks = 200;
  cfg.tick_seconds = 0.1;
  cfg.controller_addr = ip("10.0.0.1");

  DeviceSpec motion;
  motion.id = "motion1";
  motion.type = "motion_sensor";
  motion.addr = ip("10.0.0.2");
  motion.initial_state = false;
  ReadingSchedule sched;
  sched.event = "motion_detected";
  sched.interval_ticks = 30;
  sched.phase_ticks = 5;
  sched.value.kind = ValueModel::Kind::kConstant;
  sched.value.constant = true;
  motion.schedules = {sched};
  cfg.devices.push_back(motion);

  DeviceSpec bulb;
  bulb.id = "bulb1";
  bulb.type = "smart_bulb";
  bulb.addr = ip("10.0.0.3");
  bulb.initial_state = false;
  cfg.devices.push_back(bulb);

  AutomationRule rule;
  rule.rule_id = "r1";
  rule.trigger_device = parse_selector("motion1");
  rule.trigger_event = "motion_detected";
  rule.action_device = parse_selector("bulb1");
  rule.action_event = "turn_on";
  cfg.rules = {rule};

  cfg.effects = {{"turn_on", true}, {"ghost_ev", std::string("ghosted")}};
  cfg.profiles = {{"default", TrafficProfile{}}};
  return cfg;
}

std::string serialize_output(const SimOutput& out) {
  std::ostringstream buf;
  for (const auto& rec : out.trace) buf << jsonl_line(rec) << '\n';
  for (const auto& ev : out.truth.events)
    buf << ev.index << '|' << ev.ts << '|' << ev.device << '|' << ev.event
        << '|' << ev.wire_anomalous << '|' << ev.suppressed << '\n';
  for (const auto& [dev, state] : out.truth.final_states)
    buf << dev << '=' << state_to_string(state) << '\n';
  return buf.str();
}

}  // namespace

TEST_CASE("identical configs produce byte-identical artifacts") {
  const auto cfg = tiny_scenario();
  const auto a = run_scenario(cfg);
  const auto b = run_scenario(cfg);
  CHECK(serialize_output(a) == serialize_output(b));
  CHECK(!a.trace.empty());

  // A different seed perturbs the wire jitter.
  auto other = cfg;
  other.seed = 8;
  const auto c = run_scenario(other);
  CHECK(serialize_output(a) != serialize_output(c));
}

TEST_CASE("a zero-device scenario produces empty artifacts") {
  ScenarioConfig cfg;
  cfg.seed = 1;
  cfg.duration_ticks = 100;
  cfg.controller_addr = ip("10.0.0.1");
  const auto out = run_scenario(cfg);
  CHECK(out.trace.empty());
  CHECK(out.truth.events.empty());
}

TEST_CASE("benign readings trigger their rule actions with recorded causes") {
  const auto out = run_scenario(tiny_scenario());
  std::size_t readings = 0, actions = 0;
  for (const auto& ev : out.truth.events) {
    if (ev.device == "motion1") {
      readings++;
      CHECK(ev.device_initiated);
      CHECK(!ev.cause.has_value());
    } else {
      actions++;
      CHECK(ev.device == "bulb1");
      REQUIRE(ev.cause.has_value());
      CHECK(out.truth.events[*ev.cause].device == "motion1");
    }
  }
  CHECK(readings > 0);
  CHECK(readings == actions);  // unconditioned rule fires every time
  CHECK(out.truth.final_states.at("bulb1") == DeviceState{true});
}

TEST_CASE("each injection kind perturbs the run as specified") {
  auto cfg = tiny_scenario();

  InjectionSpec ghost;
  ghost.kind = AnomalyKind::kGhostCommand;
  ghost.device = "bulb1";
  ghost.tick = 50;
  ghost.event = "ghost_ev";

  InjectionSpec failure;
  failure.kind = AnomalyKind::kCommandFailure;
  failure.device = "bulb1";
  failure.tick = 95;  // the action fired by the reading at tick 95

  InjectionSpec loss;
  loss.kind = AnomalyKind::kEventLoss;
  loss.device = "bulb1";
  loss.tick = 125;

  InjectionSpec delay;
  delay.kind = AnomalyKind::kDelayedUpdate;
  delay.device = "motion1";
  delay.tick = 155;
  delay.delay_ticks = 7;

  InjectionSpec bogus;
  bogus.kind = AnomalyKind::kFalseReading;
  bogus.device = "motion1";
  bogus.tick = 185;
  bogus.bogus_value = false;

  cfg.injections = {ghost, failure, loss, delay, bogus};
  const auto out = run_scenario(cfg);

  std::map<std::string, std::size_t> kinds;
  for (const auto& ev : out.truth.events)
    if (ev.kind) kinds[to_string(*ev.kind)]++;
  CHECK(kinds["GHOST_COMMAND"] == 1);
  CHECK(kinds["COMMAND_FAILURE"] == 1);
  CHECK(kinds["EVENT_LOSS"] == 1);
  CHECK(kinds["DELAYED_UPDATE"] == 1);
  CHECK(kinds["FALSE_READING"] == 1);
  CHECK(out.truth.injected_counts == kinds);

  for (const auto& ev : out.truth.events) {
    if (!ev.kind) continue;
    switch (*ev.kind) {
      case AnomalyKind::kGhostCommand:
        CHECK(ev.wire_anomalous);
        CHECK(!ev.cause.has_value());
        break;
      case AnomalyKind::kCommandFailure:
        CHECK(ev.wire_anomalous);
        CHECK(!ev.state_changed);
        break;
      case AnomalyKind::kEventLoss:
        CHECK(ev.suppressed);
        CHECK(ev.state_changed);
        break;
      case AnomalyKind::kDelayedUpdate:
        CHECK(!ev.wire_anomalous);
        CHECK(ev.tick == 155 + 7);
        break;
      case AnomalyKind::kFalseReading:
        CHECK(!ev.wire_anomalous);
        CHECK(state_equal(*ev.value, false));
        break;
      default:
        FAIL("unexpected kind");
    }
  }

  // The suppressed event produced no packets near its tick.
  for (const auto& rec : out.trace)
    CHECK(!(rec.ts >= 12.5 && rec.ts < 12.6 &&
            (rec.src_addr == ip("10.0.0.3") || rec.dst_addr == ip("10.0.0.3"))));
}

TEST_CASE("compromised interactions ride readings and propagate by rule") {
  auto cfg = tiny_scenario();
  // victim hosts a downstream rule so the anomaly propagates
  DeviceSpec victim;
  victim.id = "victim1";
  victim.type = "siren";
  victim.addr = ip("10.0.0.4");
  victim.initial_state = false;
  cfg.devices.push_back(victim);
  DeviceSpec downstream;
  downstream.id = "lock1";
  downstream.type = "lock";
  downstream.addr = ip("10.0.0.5");
  downstream.initial_state = std::string("locked");
  cfg.devices.push_back(downstream);

  AutomationRule cascade;
  cascade.rule_id = "rc";
  cascade.trigger_device = parse_selector("victim1");
  cascade.trigger_event = "activate";
  cascade.action_device = parse_selector("lock1");
  cascade.action_event = "unlock";
  cfg.rules.push_back(cascade);
  cfg.effects["activate"] = true;
  cfg.effects["unlock"] = std::string("unlocked");

  InjectionSpec rogue;
  rogue.kind = AnomalyKind::kCompromisedInteraction;
  rogue.device = "motion1";
  rogue.tick = 100;
  rogue.action_device = "victim1";
  rogue.action_event = "activate";
  cfg.injections = {rogue};

  const auto out = run_scenario(cfg);
  REQUIRE(out.truth.interaction_anomalies.size() == 1);
  const auto& anomaly = out.truth.interaction_anomalies[0];
  CHECK(anomaly.originator == "victim1");
  CHECK(anomaly.affected_events.size() == 2);  // rogue + cascaded unlock
  CHECK(anomaly.affected_devices ==
        std::vector<std::string>{"lock1", "victim1"});

  const auto& rogue_ev = out.truth.events[anomaly.rogue_event];
  CHECK(rogue_ev.device == "victim1");
  CHECK(!rogue_ev.wire_anomalous);  // wire-normal: caught by validation
  REQUIRE(rogue_ev.cause.has_value());
  CHECK(out.truth.events[*rogue_ev.cause].device == "motion1");

  // The belief oracle ignores the rogue subtree entirely.
  CHECK(state_equal(out.truth.final_states.at("victim1"), false));
  CHECK(state_equal(out.truth.final_states.at("lock1"),
                    std::string("locked")));
}

TEST_CASE("labeling joins bursts to ledger events within half a tick") {
  auto cfg = tiny_scenario();
  InjectionSpec ghost;
  ghost.kind = AnomalyKind::kGhostCommand;
  ghost.device = "bulb1";
  ghost.tick = 50;
  ghost.event = "ghost_ev";

  SUBCASE("an injection-free run labels every burst benign") {
    const auto out = run_scenario(cfg);
    const auto bursts =
        segment_bursts(out.trace, out.meta, kDefaultGapThreshold);
    const auto joined = label_dataset(bursts, out.truth, cfg.tick_seconds);
    CHECK(joined.dataset.rows.size() == bursts.size());
    for (const auto label : joined.dataset.labels)
      CHECK(label == Label::kBenign);
    CHECK(bursts.size() == out.truth.events.size());
  }

  SUBCASE("a single ghost yields exactly one anomalous row") {
    cfg.injections = {ghost};
    const auto out = run_scenario(cfg);
    const auto bursts =
        segment_bursts(out.trace, out.meta, kDefaultGapThreshold);
    const auto joined = label_dataset(bursts, out.truth, cfg.tick_seconds);
    std::size_t anomalous = 0;
    for (const auto label : joined.dataset.labels)
      anomalous += label == Label::kAnomalous;
    CHECK(anomalous == 1);

    // and signature pairs skip it
    const auto pairs = signature_training_pairs(bursts, joined, out.truth);
    CHECK(pairs.size() == bursts.size() - 1);
  }

  SUBCASE("equidistant ledger events are reported as ambiguous") {
    GroundTruth truth;
    LedgerEvent a, b;
    a.index = 0;
    a.ts = 1.0;  // exactly 0.25 below the burst start
    a.device = "bulb1";
    b.index = 1;
    b.ts = 1.5;  // exactly 0.25 above it
    b.device = "bulb1";
    truth.events = {a, b};

    Burst burst;
    burst.device_id = "bulb1";
    burst.start_ts = 1.25;
    burst.end_ts = 1.25;
    PacketRecord rec;
    rec.ts = 1.25;
    rec.length = 66;
    burst.records = {rec};

    expect_error(ErrorCode::kJoinAmbiguous,
                 [&] { label_dataset({burst}, truth, 1.0); });
  }

  SUBCASE("bursts with no ledger event fall back to ANOMALOUS") {
    const auto out = run_scenario(cfg);
    Burst stray;
    stray.device_id = "bulb1";
    stray.start_ts = 9999.0;
    stray.end_ts = 9999.0;
    PacketRecord rec;
    rec.ts = 9999.0;
    rec.length = 66;
    stray.records = {rec};
    const auto joined = label_dataset({stray}, out.truth, cfg.tick_seconds);
    CHECK(joined.dataset.labels[0] == Label::kAnomalous);
    CHECK(!joined.event_of_burst[0].has_value());
  }
}

TEST_CASE("scenario files round-trip through save and load") {
  auto cfg = tiny_scenario();
  InjectionSpec rogue;
  rogue.kind = AnomalyKind::kCompromisedInteraction;
  rogue.device = "motion1";
  rogue.tick = 100;
  rogue.action_device = "bulb1";
  rogue.action_event = "turn_on";
  cfg.injections = {rogue};

  const auto path = testutil::temp_path("scenario.json");
  save_scenario(path, cfg);
  const auto loaded = load_scenario(path);

  CHECK(loaded.seed == cfg.seed);
  CHECK(loaded.duration_ticks == cfg.duration_ticks);
  CHECK(loaded.devices.size() == cfg.devices.size());
  CHECK(loaded.rules.size() == cfg.rules.size());
  CHECK(loaded.injections.size() == 1);
  CHECK(loaded.injections[0].action_device == "bulb1");

  // Loaded configs replay to identical artifacts.
  CHECK(serialize_output(run_scenario(cfg)) ==
        serialize_output(run_scenario(loaded)));
}

TEST_CASE("config validation names the offending field") {
  auto cfg = tiny_scenario();
  cfg.devices[1].addr = cfg.devices[0].addr;
  const auto err =
      expect_error(ErrorCode::kInvalidConfig, [&] { validate_config(cfg); });
  CHECK(std::string(err.what()).find("devices[1].addr") != std::string::npos);

  auto bad_tick = tiny_scenario();
  bad_tick.injections.push_back(InjectionSpec{
      AnomalyKind::kEventLoss, "bulb1", 9999, "", 0, false, "", ""});
  expect_error(ErrorCode::kInvalidConfig, [&] { validate_config(bad_tick); });
}

TEST_CASE("truth files round-trip") {
  auto cfg = tiny_scenario();
  InjectionSpec rogue;
  rogue.kind = AnomalyKind::kCompromisedInteraction;
  rogue.device = "motion1";
  rogue.tick = 100;
  rogue.action_device = "bulb1";
  rogue.action_event = "turn_on";
  cfg.injections = {rogue};
  const auto out = run_scenario(cfg);

  const auto path = testutil::temp_path("truth.json");
  write_truth(path, out.truth);
  const auto loaded = read_truth(path);
  CHECK(loaded.events.size() == out.truth.events.size());
  CHECK(loaded.interaction_anomalies.size() ==
        out.truth.interaction_anomalies.size());
  CHECK(loaded.final_states.size() == out.truth.final_states.size());
  for (std::size_t i = 0; i < loaded.events.size(); ++i) {
    CHECK(loaded.events[i].device == out.truth.events[i].device);
    CHECK(loaded.events[i].ts == out.truth.events[i].ts);
    CHECK(loaded.events[i].wire_anomalous == out.truth.events[i].wire_anomalous);
  }
}

TEST_CASE("the S1 scenario meets its advertised shape") {
  const auto cfg = scenarios::s1();
  CHECK(cfg.devices.size() == 12);
  CHECK(cfg.seed == 42);

  const auto out = run_scenario(cfg);
  CHECK(out.truth.events.size() >= 10000);

  const double anomaly_share =
      double(out.truth.wire_anomalous_count) / double(out.truth.events.size());
  CHECK(anomaly_share == doctest::Approx(0.10).epsilon(0.05));

  std::set<std::string> event_types;
  for (const auto& ev : out.truth.events) event_types.insert(ev.event);
  CHECK(event_types.size() == 20);

  // Bookkeeping: ghost + failure injections equal the anomalous labels.
  CHECK(out.truth.injected_counts.at("GHOST_COMMAND") +
            out.truth.injected_counts.at("COMMAND_FAILURE") ==
        out.truth.wire_anomalous_count);
}

TEST_CASE("rollback scenarios give every compromised anomaly a cascade") {
  const auto cfg = scenarios::rollback_random(11, 4);
  const auto out = run_scenario(cfg);
  REQUIRE(out.truth.interaction_anomalies.size() == 4);
  for (const auto& anomaly : out.truth.interaction_anomalies) {
    CHECK(anomaly.affected_events.size() >= 2);  // propagation realism
    CHECK(anomaly.originator.rfind("victim", 0) == 0);
  }
  CHECK(out.truth.injected_counts.at("GHOST_COMMAND") == 6);
}
