#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotad/interaction.hpp"

namespace iotad {

enum class StateSource : std::uint8_t { kInitial, kEvent, kRestore };
const char* to_string(StateSource s);

// One state change in a device's history. kEvent entries reference the tree
// node that produced the state; kRestore entries re-assert a stable value
// after a rollback so later rollbacks never resurrect a rolled-back state.
struct StateLogEntry {
  StateSource source = StateSource::kEvent;
  std::uint64_t tree_uid = 0;
  EventKey key;
  double ts = 0.0;
  DeviceState state;
};

using StateLogs = std::map<std::string, std::vector<StateLogEntry>>;

struct StableStateEntry {
  std::string device_id;
  DeviceState state;
  StateSource source = StateSource::kInitial;
  std::optional<EventKey> source_key;
  double ts = 0.0;
};

// Keys excluded from the stable-state scan: the affected subtree of one tree.
struct ExcludedSubtree {
  std::uint64_t tree_uid = 0;
  std::set<int> ys;

  bool contains(std::uint64_t uid, const EventKey& key) const {
    return uid == tree_uid && ys.count(key.y) > 0;
  }
};

// Verdict lookup across all trees of the run (keys alone do not identify a
// tree; the controller owns the mapping).
using VerdictFn =
    std::function<Validation(std::uint64_t tree_uid, const EventKey& key)>;

// Backward scan for the most recent VALID-verdict state outside the excluded
// subtree; falls back to the registration-time initial state. UNKNOWN_DEVICE.
StableStateEntry last_stable_state(const std::string& device_id,
                                   const StateLogs& logs,
                                   const DeviceRegistry& registry,
                                   const ExcludedSubtree& exclude,
                                   const VerdictFn& verdicts);

struct RollbackPlan {
  std::uint64_t tree_uid = 0;
  EventKey anomaly_key;
  std::vector<StableStateEntry> entries;  // deepest-affected first, one per device
  std::string isolate;                    // the anomaly originator
};

enum class RestoreOutcome : std::uint8_t { kRestored, kFailed };

struct RollbackReport {
  EventKey anomaly_key;
  std::vector<std::pair<std::string, RestoreOutcome>> outcomes;
  std::string isolate;
  double elapsed_ms = 0.0;

  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& [_, o] : outcomes)
      if (o == RestoreOutcome::kFailed) n++;
    return n;
  }
};

// Pluggable state-restore backend. The simulator supplies the in-process
// implementation; a logging stub records commands for replayed captures.
class Actuator {
 public:
  virtual ~Actuator() = default;
  // Returns nullopt on success, a failure reason otherwise.
  virtual std::optional<std::string> set_state(const std::string& device_id,
                                               const DeviceState& state) = 0;
};

// Always succeeds and keeps an ordered record of every command.
class RecordingActuator final : public Actuator {
 public:
  std::optional<std::string> set_state(const std::string& device_id,
                                       const DeviceState& state) override;
  const std::vector<std::pair<std::string, DeviceState>>& commands() const {
    return commands_;
  }

 private:
  std::vector<std::pair<std::string, DeviceState>> commands_;
};

// Entries = last stable state for every device in affected_set(tree, key),
// deepest first, one entry per device; exclude = the affected subtree;
// isolate = the anomaly node's device. NODE_NOT_ANOMALOUS.
RollbackPlan plan_rollback(const InteractionTree& tree,
                           const EventKey& anomaly_key, const StateLogs& logs,
                           const DeviceRegistry& registry,
                           const VerdictFn& verdicts);

// Runs the actuator per entry in order; per-entry failures never abort the
// remaining entries. Restored states update the registry (and append RESTORE
// entries when logs are supplied); the originator is isolated regardless.
RollbackReport execute_rollback(const RollbackPlan& plan, Actuator& actuator,
                                DeviceRegistry& registry,
                                StateLogs* logs = nullptr, double now_ts = 0.0);

std::string rollback_report_json(const RollbackReport& report);

}  // namespace iotad
