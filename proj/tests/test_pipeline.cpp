#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "iotad/pipeline.hpp"
#include "iotad/trace_ingest.hpp"
#include "test_helpers.hpp"

using namespace iotad;
using namespace iotad::sim;
using testutil::ip;

namespace {

struct Trained {
  std::vector<EventSignature> signatures;
  std::unique_ptr<Model> model;
};

// Signatures and a kNN model from one scenario's own labeled run.
Trained train_on(const ScenarioConfig& cfg, const SimOutput& out) {
  const auto bursts = segment_bursts(out.trace, out.meta, kDefaultGapThreshold);
  const auto joined = label_dataset(bursts, out.truth, cfg.tick_seconds);
  Trained t;
  t.signatures =
      build_signatures(signature_training_pairs(bursts, joined, out.truth));
  t.model = train_model("knn", joined.dataset, cfg.seed);
  return t;
}

}  // namespace

TEST_CASE("benign cross-seed replay closes cleanly") {
  // Train on one seed of the family (with injections so both classes are
  // present), replay a sibling seed with none.
  const auto train_cfg = scenarios::benign_family(7, 4000, true);
  const auto train_out = run_scenario(train_cfg);
  const auto trained = train_on(train_cfg, train_out);

  const auto replay_cfg = scenarios::benign_family(9, 4000, false);
  const auto replay_out = run_scenario(replay_cfg);

  DeviceRegistry registry;
  const auto result =
      run_pipeline(replay_cfg, replay_out.trace, trained.signatures,
                   trained.model.get(), {}, &registry);

  CHECK(result.bursts_total == replay_out.truth.events.size());
  CHECK(result.no_match == 0);          // signature benign closure
  CHECK(result.discarded == 0);         // kNN has no false positives
  CHECK(result.interaction_anomalies == 0);
  CHECK(result.rollbacks.empty());
  CHECK(result.orphan_commands == 0);

  // Controller belief converges to the oracle states.
  for (const auto& [dev, state] : replay_out.truth.final_states)
    CHECK(state_equal(registry.get(dev).state, state));
}

TEST_CASE("every burst used for signatures matches its own signature") {
  const auto cfg = scenarios::benign_family(3, 2500, false);
  const auto out = run_scenario(cfg);
  const auto bursts = segment_bursts(out.trace, out.meta, kDefaultGapThreshold);
  const auto joined = label_dataset(bursts, out.truth, cfg.tick_seconds);
  const auto pairs = signature_training_pairs(bursts, joined, out.truth);
  const auto signatures = build_signatures(pairs);
  for (const auto& [burst, event_type] : pairs) {
    const auto match =
        match_signature(featurize(burst), signatures, burst.device_id);
    REQUIRE(match.has_value());
    CHECK(match->event_type == event_type);
  }
}

TEST_CASE("compromised interactions are detected, rolled back, and isolated") {
  const auto cfg = scenarios::rollback_random(21, 5);
  const auto out = run_scenario(cfg);
  const auto trained = train_on(cfg, out);

  DeviceRegistry registry;
  const auto result = run_pipeline(cfg, out.trace, trained.signatures,
                                   trained.model.get(), {}, &registry);

  CHECK(result.rollbacks.size() == out.truth.interaction_anomalies.size());

  // Every victim ends isolated; every other device stays active.
  std::set<std::string> expected_isolated;
  for (const auto& anomaly : out.truth.interaction_anomalies)
    expected_isolated.insert(anomaly.originator);
  for (const auto& id : registry.device_ids()) {
    const bool isolated =
        registry.get(id).status == DeviceStatus::kIsolated;
    CHECK(isolated == (expected_isolated.count(id) > 0));
  }

  // Post-rollback states equal the history-replay oracle.
  for (const auto& [dev, state] : out.truth.final_states)
    CHECK(state_equal(registry.get(dev).state, state));

  // Affected device sets match the ground truth per anomaly.
  REQUIRE(result.rollbacks.size() == out.truth.interaction_anomalies.size());
  for (std::size_t i = 0; i < result.rollbacks.size(); ++i) {
    std::set<std::string> got;
    for (const auto& [dev, outcome] : result.rollbacks[i].outcomes)
      got.insert(dev);
    const auto& expected = out.truth.interaction_anomalies[i].affected_devices;
    CHECK(got == std::set<std::string>(expected.begin(), expected.end()));
  }
}

TEST_CASE("isolated devices are logged but never re-attach to trees") {
  // A custom scenario where the victim receives a benign command after its
  // compromise: the pipeline must reject it rather than re-propagate.
  ScenarioConfig cfg;
  cfg.seed = 5;
  cfg.duration_ticks = 900;
  cfg.tick_seconds = 0.1;
  cfg.controller_addr = ip("10.2.0.1");

  DeviceSpec sensor;
  sensor.id = "sensor";
  sensor.type = "sensor";
  sensor.addr = ip("10.2.0.2");
  sensor.initial_state = 0.0;
  ReadingSchedule sched;
  sched.event = "reading";
  sched.interval_ticks = 40;
  sched.phase_ticks = 3;
  sched.value.kind = ValueModel::Kind::kUniform;
  sched.value.lo = 0;
  sched.value.hi = 100;
  sensor.schedules = {sched};
  cfg.devices.push_back(sensor);

  DeviceSpec victim;
  victim.id = "victim";
  victim.type = "victim";
  victim.addr = ip("10.2.0.3");
  victim.initial_state = false;
  cfg.devices.push_back(victim);

  // The sensor legitimately arms the victim on every reading.
  AutomationRule arm;
  arm.rule_id = "arm";
  arm.trigger_device = parse_selector("sensor");
  arm.trigger_event = "reading";
  arm.action_device = parse_selector("victim");
  arm.action_event = "arm";
  cfg.rules = {arm};
  cfg.effects = {{"arm", true}, {"rogue_arm", true}};
  cfg.profiles = {{"default", TrafficProfile{}}};

  InjectionSpec rogue;
  rogue.kind = AnomalyKind::kCompromisedInteraction;
  rogue.device = "sensor";
  rogue.tick = 403;  // rides the reading at tick 443
  rogue.action_device = "victim";
  rogue.action_event = "rogue_arm";  // unlicensed event type
  cfg.injections = {rogue};
  validate_config(cfg);

  const auto out = run_scenario(cfg);
  const auto trained = train_on(cfg, out);

  DeviceRegistry registry;
  const auto result = run_pipeline(cfg, out.trace, trained.signatures,
                                   trained.model.get(), {}, &registry);

  CHECK(result.rollbacks.size() == 1);
  CHECK(registry.get("victim").status == DeviceStatus::kIsolated);
  // Benign arms keep arriving after the rollback; each is rejected.
  CHECK(result.isolated_rejected > 0);

  // No victim event after the rollback carries a key.
  bool saw_rejected = false;
  double rollback_ts = 0.0;
  for (const auto& ev : result.events) {
    if (ev.device_id == "victim" && ev.key == kUnassignedKey &&
        !ev.discarded) {
      saw_rejected = true;
      CHECK(ev.ts > rollback_ts);
    }
    if (ev.event_type == "rogue_arm") rollback_ts = ev.ts;
  }
  CHECK(saw_rejected);
}

TEST_CASE("device logs replay the simulator chronology per device") {
  const auto cfg = scenarios::benign_family(13, 3000, false);
  const auto out = run_scenario(cfg);
  const auto trained = train_on(cfg, out);

  Controller controller(cfg, trained.signatures, trained.model.get(), {});
  controller.run(sort_stable_by_time(out.trace));

  std::map<std::string, std::vector<double>> expected;
  for (const auto& ev : out.truth.events)
    if (!ev.suppressed) expected[ev.device].push_back(ev.ts);

  for (const auto& [device, times] : expected) {
    const auto& entries = controller.device_log().entries(device);
    REQUIRE(entries.size() == times.size());
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(entries[i].ts == doctest::Approx(times[i]).epsilon(1e-9));
  }
}

TEST_CASE("ghost bursts are discarded before the tree stage") {
  auto cfg = scenarios::benign_family(17, 3000, true);
  const auto out = run_scenario(cfg);
  const auto trained = train_on(cfg, out);

  const auto result = run_pipeline(cfg, out.trace, trained.signatures,
                                   trained.model.get(), {});
  CHECK(result.discarded == out.truth.wire_anomalous_count);
  CHECK(result.interaction_anomalies == 0);
  CHECK(result.rollbacks.empty());

  // Discarded events are flagged in the detected-event stream.
  std::size_t flagged = 0;
  for (const auto& ev : result.events) flagged += ev.discarded;
  CHECK(flagged == result.discarded);
}
