#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iotad/event_engine.hpp"
#include "iotad/interaction.hpp"
#include "iotad/models.hpp"
#include "iotad/rollback.hpp"
#include "iotad/sim.hpp"

namespace iotad {

struct ControllerConfig {
  double gap_threshold = kDefaultGapThreshold;
  double quiescence_seconds = 5.0;  // tree finalization window
  double attach_window_seconds = 5.0;
};

// One detected event after the packet-level stage.
struct DetectedEvent {
  std::size_t burst_index = 0;
  std::string device_id;
  std::string event_type;  // matched type or ANOMALY_CANDIDATE
  double ts = 0.0;
  bool device_initiated = false;
  bool discarded = false;  // packet-level anomaly
  bool matched = false;
  std::string key = kUnassignedKey;
};

struct ControllerResult {
  std::size_t bursts_total = 0;
  std::size_t matched = 0;
  std::size_t no_match = 0;
  std::size_t discarded = 0;
  std::size_t trees_created = 0;
  std::size_t interactions_validated = 0;
  std::size_t interaction_anomalies = 0;
  std::size_t orphan_commands = 0;
  std::size_t isolated_rejected = 0;

  std::vector<DetectedEvent> events;
  std::vector<RollbackReport> rollbacks;
  std::vector<std::string> interaction_log;

  std::vector<double> inference_ms;      // model call per burst
  std::vector<double> validate_plan_ms;  // per non-root interaction
};

// The controller loop: ingest -> event matching -> packet-level detection ->
// tree building -> asynchronous validation -> rollback. Single-threaded
// owner of the registry and all trees.
class Controller {
 public:
  Controller(const sim::ScenarioConfig& scenario,
             std::vector<EventSignature> signatures, const Model* model,
             ControllerConfig config = {});

  // Processes a time-ordered packet stream to completion.
  ControllerResult run(const std::vector<PacketRecord>& records,
                       Actuator* actuator = nullptr);

  const DeviceRegistry& registry() const { return registry_; }
  DeviceRegistry& registry() { return registry_; }
  const DeviceLog& device_log() const { return device_log_; }
  const StateLogs& state_logs() const { return state_logs_; }
  const std::vector<std::unique_ptr<InteractionTree>>& trees() const {
    return trees_;
  }

 private:
  struct LiveNode {
    double ts = 0.0;
    std::uint64_t tree_uid = 0;
    EventKey key;
    std::string device_id;
    std::string event_type;
    bool device_initiated = false;
  };

  void finalize_due(double now, ControllerResult& result, Actuator& actuator);
  void finalize_tree(InteractionTree& tree, ControllerResult& result,
                     Actuator& actuator, double now);
  void process_burst(const Burst& burst, std::size_t burst_index,
                     ControllerResult& result, Actuator& actuator);
  Validation verdict(std::uint64_t tree_uid, const EventKey& key) const;
  std::optional<DeviceState> effect_for(const std::string& event_type) const;

  const sim::ScenarioConfig& scenario_;
  std::vector<EventSignature> signatures_;
  const Model* model_;
  ControllerConfig config_;

  DeviceRegistry registry_;
  DeviceLog device_log_;
  StateLogs state_logs_;
  std::vector<std::unique_ptr<InteractionTree>> trees_;
  std::vector<LiveNode> live_nodes_;
  std::map<std::string, std::size_t> reading_counter_;
  std::map<std::string, std::size_t> reading_schedule_cursor_;
};

// Convenience wrapper: segment, detect, build trees, roll back.
ControllerResult run_pipeline(const sim::ScenarioConfig& scenario,
                              const std::vector<PacketRecord>& records,
                              const std::vector<EventSignature>& signatures,
                              const Model* model, ControllerConfig config = {},
                              DeviceRegistry* final_registry = nullptr,
                              Actuator* actuator = nullptr);

}  // namespace iotad
