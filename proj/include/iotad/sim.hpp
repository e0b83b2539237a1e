#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iotad/event_engine.hpp"
#include "iotad/interaction.hpp"
#include "iotad/models.hpp"
#include "iotad/packet.hpp"

namespace iotad::sim {

enum class AnomalyKind : std::uint8_t {
  kGhostCommand,
  kCommandFailure,
  kDelayedUpdate,
  kEventLoss,
  kFalseReading,
  kCompromisedInteraction,
};

const char* to_string(AnomalyKind kind);
std::optional<AnomalyKind> anomaly_kind_from_string(const std::string& s);

// How a reading value is drawn. Draws come from a counter-based substream of
// (scenario seed, device, reading index), so a replaying controller can
// reconstruct the exact values without payload access.
struct ValueModel {
  enum class Kind : std::uint8_t { kConstant, kUniform, kBernoulli };
  Kind kind = Kind::kConstant;
  DeviceState constant = true;
  double lo = 0.0, hi = 1.0;  // uniform
  double p_true = 0.5;        // bernoulli
};

DeviceState draw_value(const ValueModel& model, std::uint64_t scenario_seed,
                       const std::string& device_id, std::size_t reading_index);

struct ReadingSchedule {
  std::string event;
  // Periodic when interval_ticks > 0, else Bernoulli per tick.
  int interval_ticks = 0;
  int phase_ticks = 0;
  double probability = 0.0;
  int until_tick = -1;  // inclusive cutoff; -1 = whole run
  ValueModel value;
};

struct DeviceSpec {
  std::string id;
  std::string type;
  Ipv4Addr addr;
  DeviceState initial_state = false;
  std::vector<ReadingSchedule> schedules;
};

// Wire profile for one device type; lengths in bytes, gaps in seconds.
struct TrafficProfile {
  std::uint16_t device_port = 49152;
  std::uint16_t controller_port = 8883;
  double data_len = 180.0;
  double rsp_len = 120.0;
  double jitter = 0.02;     // relative, applied to data lengths and gaps
  double pkt_gap = 0.004;
};

struct InjectionSpec {
  AnomalyKind kind = AnomalyKind::kGhostCommand;
  std::string device;  // ghost/failure/loss/delay target, reading source for
                       // false readings and compromised interactions
  int tick = 0;
  std::string event;          // ghost action event
  int delay_ticks = 0;        // DELAYED_UPDATE
  DeviceState bogus_value;    // FALSE_READING
  std::string action_device;  // COMPROMISED_INTERACTION victim
  std::string action_event;   // the illegitimate action
};

struct ScenarioConfig {
  int schema = 1;
  std::uint64_t seed = 0;
  int duration_ticks = 0;
  double tick_seconds = 0.1;
  Ipv4Addr controller_addr;
  std::vector<DeviceSpec> devices;
  std::vector<AutomationRule> rules;
  std::map<std::string, DeviceState> effects;  // action event -> state
  std::map<std::string, TrafficProfile> profiles;  // by device type
  std::vector<InjectionSpec> injections;

  const TrafficProfile& profile_for(const std::string& device_type) const;
  const DeviceSpec* device(const std::string& id) const;
  TraceMeta trace_meta() const;
};

void validate_config(const ScenarioConfig& config);  // INVALID_CONFIG
ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const std::string& path, const ScenarioConfig& config);

struct LedgerEvent {
  std::size_t index = 0;
  int tick = 0;
  double ts = 0.0;
  std::string device;
  std::string event;
  std::optional<DeviceState> value;   // reading value / resulting state
  std::optional<std::size_t> cause;   // index of the causing event
  std::optional<AnomalyKind> kind;    // injection tag, if any
  bool wire_anomalous = false;        // packet-level label
  bool suppressed = false;            // EVENT_LOSS: state changed, no traffic
  bool device_initiated = false;      // report vs command exchange
  bool state_changed = true;
};

struct InteractionAnomalyTruth {
  std::size_t rogue_event = 0;                 // the unlicensed action
  std::vector<std::size_t> affected_events;    // rogue + downstream cascade
  std::vector<std::string> affected_devices;   // deduplicated
  std::string originator;                      // device to isolate
};

struct GroundTruth {
  std::vector<LedgerEvent> events;
  std::vector<InteractionAnomalyTruth> interaction_anomalies;
  // Controller-belief oracle: ledger replayed without anomalous subtrees,
  // wire-anomalous events, or suppressed events.
  std::map<std::string, DeviceState> final_states;
  std::map<std::string, std::size_t> injected_counts;  // by kind name
  std::size_t wire_anomalous_count = 0;
  std::size_t suppressed_count = 0;
};

struct SimOutput {
  std::vector<PacketRecord> trace;
  GroundTruth truth;
  TraceMeta meta;
};

// Fully deterministic given the config (including its seed): two runs
// produce byte-identical artifacts.
SimOutput run_scenario(const ScenarioConfig& config);

void write_ledger(const std::string& path, const GroundTruth& truth);
void write_truth(const std::string& path, const GroundTruth& truth);
GroundTruth read_truth(const std::string& path);

struct JoinedDataset {
  LabeledDataset dataset;
  // Ledger event index per burst, nullopt for unmatched bursts.
  std::vector<std::optional<std::size_t>> event_of_burst;
};

// Joins detected bursts to ledger events by (device, nearest event time
// within half a tick); unmatched bursts are labeled ANOMALOUS.
// JOIN_AMBIGUOUS if two events tie for one burst.
JoinedDataset label_dataset(const std::vector<Burst>& bursts,
                            const GroundTruth& truth, double tick_seconds);

// (burst, event_type) pairs for signature learning: benign matched bursts.
std::vector<std::pair<Burst, std::string>> signature_training_pairs(
    const std::vector<Burst>& bursts, const JoinedDataset& joined,
    const GroundTruth& truth);

namespace scenarios {

// 12 devices mirroring a small smart-home testbed, 20 event types,
// >= 10,000 events with 10% wire-visible injected anomalies at seed 42.
ScenarioConfig s1();

// Same device/rule family as s1 without injections (and a seed knob for
// cross-seed train/replay experiments).
ScenarioConfig benign_family(std::uint64_t seed, int duration_ticks = 6000,
                             bool with_injections = false);

// Randomized rollback scenario: sensors and actuators plus dedicated
// compromised-interaction victims with downstream cascades. Victims receive
// benign events only before the first injection tick, so the history-replay
// oracle stays exact under isolation.
ScenarioConfig rollback_random(std::uint64_t seed, int n_injections);

}  // namespace scenarios

}  // namespace iotad::sim
