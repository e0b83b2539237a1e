#include "iotad/rollback.hpp"

#include <chrono>

#include <nlohmann/json.hpp>

#include "iotad/error.hpp"

namespace iotad {

const char* to_string(StateSource s) {
  switch (s) {
    case StateSource::kInitial: return "INITIAL";
    case StateSource::kEvent: return "EVENT";
    case StateSource::kRestore: return "RESTORE";
  }
  return "?";
}

StableStateEntry last_stable_state(const std::string& device_id,
                                   const StateLogs& logs,
                                   const DeviceRegistry& registry,
                                   const ExcludedSubtree& exclude,
                                   const VerdictFn& verdicts) {
  const DeviceRecord& record = registry.get(device_id);  // UNKNOWN_DEVICE

  auto it = logs.find(device_id);
  if (it != logs.end()) {
    const auto& log = it->second;
    for (auto entry = log.rbegin(); entry != log.rend(); ++entry) {
      if (entry->source == StateSource::kRestore) {
        return StableStateEntry{device_id, entry->state, StateSource::kRestore,
                                std::nullopt, entry->ts};
      }
      if (entry->source != StateSource::kEvent) continue;
      if (exclude.contains(entry->tree_uid, entry->key)) continue;
      if (verdicts(entry->tree_uid, entry->key) != Validation::kValid)
        continue;
      return StableStateEntry{device_id, entry->state, StateSource::kEvent,
                              entry->key, entry->ts};
    }
  }
  return StableStateEntry{device_id, record.initial_state,
                          StateSource::kInitial, std::nullopt, 0.0};
}

RollbackPlan plan_rollback(const InteractionTree& tree,
                           const EventKey& anomaly_key, const StateLogs& logs,
                           const DeviceRegistry& registry,
                           const VerdictFn& verdicts) {
  const TreeNode& anomaly = tree.node(anomaly_key);  // UNKNOWN_KEY
  if (anomaly.validation != Validation::kAnomalous)
    fail(ErrorCode::kNodeNotAnomalous,
         "node " + anomaly_key.str() + " has verdict " +
             to_string(anomaly.validation));

  const auto affected = affected_set(tree, anomaly_key);

  ExcludedSubtree exclude;
  exclude.tree_uid = tree.uid();
  for (const auto& [key, _] : affected) exclude.ys.insert(key.y);

  RollbackPlan plan;
  plan.tree_uid = tree.uid();
  plan.anomaly_key = anomaly_key;
  plan.isolate = anomaly.device_id;

  std::set<std::string> seen;
  for (const auto& [key, device_id] : affected) {
    if (!seen.insert(device_id).second) continue;
    plan.entries.push_back(
        last_stable_state(device_id, logs, registry, exclude, verdicts));
  }
  return plan;
}

std::optional<std::string> RecordingActuator::set_state(
    const std::string& device_id, const DeviceState& state) {
  commands_.emplace_back(device_id, state);
  return std::nullopt;
}

RollbackReport execute_rollback(const RollbackPlan& plan, Actuator& actuator,
                                DeviceRegistry& registry, StateLogs* logs,
                                double now_ts) {
  if (plan.entries.empty())
    fail(ErrorCode::kInvalidPlan, "rollback plan has no entries");
  if (plan.isolate.empty())
    fail(ErrorCode::kInvalidPlan, "rollback plan names no device to isolate");

  const auto t0 = std::chrono::steady_clock::now();
  RollbackReport report;
  report.anomaly_key = plan.anomaly_key;
  report.isolate = plan.isolate;

  for (const auto& entry : plan.entries) {
    const auto failure = actuator.set_state(entry.device_id, entry.state);
    if (failure) {
      report.outcomes.emplace_back(entry.device_id, RestoreOutcome::kFailed);
      continue;
    }
    registry.set_state(entry.device_id, entry.state);
    if (logs) {
      (*logs)[entry.device_id].push_back(StateLogEntry{
          StateSource::kRestore, plan.tree_uid, plan.anomaly_key, now_ts,
          entry.state});
    }
    report.outcomes.emplace_back(entry.device_id, RestoreOutcome::kRestored);
  }

  registry.isolate(plan.isolate);

  const auto t1 = std::chrono::steady_clock::now();
  report.elapsed_ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count();
  return report;
}

std::string rollback_report_json(const RollbackReport& report) {
  nlohmann::ordered_json obj;
  obj["anomaly_key"] = report.anomaly_key.str();
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& [device, outcome] : report.outcomes) {
    entries.push_back(
        {{"device", device},
         {"outcome",
          outcome == RestoreOutcome::kRestored ? "RESTORED" : "FAILED"}});
  }
  obj["entries"] = entries;
  obj["isolate"] = report.isolate;
  obj["elapsed_ms"] = report.elapsed_ms;
  return obj.dump();
}

}  // namespace iotad
