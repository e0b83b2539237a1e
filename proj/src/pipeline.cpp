#include "iotad/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

#include "iotad/error.hpp"
#include "iotad/trace_ingest.hpp"

namespace iotad {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

Controller::Controller(const sim::ScenarioConfig& scenario,
                       std::vector<EventSignature> signatures,
                       const Model* model, ControllerConfig config)
    : scenario_(scenario), signatures_(std::move(signatures)), model_(model),
      config_(config) {
  for (const auto& spec : scenario_.devices) {
    DeviceRecord record;
    record.device_id = spec.id;
    record.device_type = spec.type;
    record.addr = spec.addr;
    record.state = spec.initial_state;
    registry_.register_device(std::move(record));
  }
}

Validation Controller::verdict(std::uint64_t tree_uid,
                               const EventKey& key) const {
  if (tree_uid >= trees_.size()) return Validation::kPending;
  const auto& tree = *trees_[tree_uid];
  if (!tree.contains(key)) return Validation::kPending;
  return tree.node(key).validation;
}

std::optional<DeviceState> Controller::effect_for(
    const std::string& event_type) const {
  auto it = scenario_.effects.find(event_type);
  if (it == scenario_.effects.end()) return std::nullopt;
  return it->second;
}

void Controller::finalize_due(double now, ControllerResult& result,
                              Actuator& actuator) {
  for (auto& tree : trees_) {
    if (tree->finalized()) continue;
    if (now - tree->last_activity_ts() >= config_.quiescence_seconds)
      finalize_tree(*tree, result, actuator, now);
  }
}

void Controller::finalize_tree(InteractionTree& tree, ControllerResult& result,
                               Actuator& actuator, double now) {
  tree.finalize();

  const VerdictFn verdicts = [this](std::uint64_t uid, const EventKey& key) {
    return verdict(uid, key);
  };

  // Verdicts first (ascending y, so parents precede children), rollbacks
  // second: affected subtrees must be fully validated before planning.
  std::map<int, double> validate_ms;
  std::vector<EventKey> anomalous;
  for (auto& [key, node] : tree.nodes()) {
    const auto t0 = std::chrono::steady_clock::now();
    const Validation v =
        validate_interaction(tree, key, scenario_.rules, registry_);
    const double elapsed = ms_since(t0);
    if (node.parent) {
      result.interactions_validated++;
      validate_ms[key.y] = elapsed;
    }
    if (v == Validation::kAnomalous) anomalous.push_back(key);
  }

  std::set<int> rolled;
  for (const EventKey& key : anomalous) {
    result.interaction_anomalies++;
    if (rolled.count(key.y)) {
      // Already covered by an ancestor's rollback.
      if (auto it = validate_ms.find(key.y); it != validate_ms.end())
        result.validate_plan_ms.push_back(it->second);
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const RollbackPlan plan =
        plan_rollback(tree, key, state_logs_, registry_, verdicts);
    const double plan_elapsed = ms_since(t0);
    if (auto it = validate_ms.find(key.y); it != validate_ms.end())
      result.validate_plan_ms.push_back(it->second + plan_elapsed);

    result.rollbacks.push_back(
        execute_rollback(plan, actuator, registry_, &state_logs_, now));
    for (const auto& [k, _] : affected_set(tree, key)) rolled.insert(k.y);
  }

  result.interaction_log.push_back(interaction_log_lines(tree));

  // Nodes with plain VALID verdicts and no rollback need no more samples.
  for (const auto& [y, elapsed] : validate_ms) {
    const bool was_anomalous =
        std::any_of(anomalous.begin(), anomalous.end(),
                    [y = y](const EventKey& k) { return k.y == y; });
    if (!was_anomalous) result.validate_plan_ms.push_back(elapsed);
  }
}

void Controller::process_burst(const Burst& burst, std::size_t burst_index,
                               ControllerResult& result, Actuator& actuator) {
  (void)actuator;
  const FeatureVector fv = featurize(burst);
  const auto match = match_signature(fv, signatures_, burst.device_id);

  Label label = Label::kBenign;
  if (model_) {
    const auto t0 = std::chrono::steady_clock::now();
    label = model_->predict(fv);
    result.inference_ms.push_back(ms_since(t0));
  }

  DetectedEvent ev;
  ev.burst_index = burst_index;
  ev.device_id = burst.device_id;
  ev.event_type = match ? match->event_type : kAnomalyCandidate;
  ev.ts = burst.start_ts;
  ev.device_initiated = !burst.records.empty() &&
                        burst.records.front().direction ==
                            Direction::kDeviceToController;
  ev.matched = match.has_value();
  ev.discarded = label == Label::kAnomalous;

  if (match) result.matched++;
  else result.no_match++;

  if (ev.discarded) {
    result.discarded++;
  } else if (registry_.get(ev.device_id).status == DeviceStatus::kIsolated) {
    // Isolated devices stay quarantined: events are logged, never attached.
    result.isolated_rejected++;
  } else if (ev.device_initiated) {
    // A measurement/reading roots a new interaction tree.
    std::optional<DeviceState> value;
    const std::size_t k = reading_counter_[ev.device_id]++;
    if (const sim::DeviceSpec* spec = scenario_.device(ev.device_id)) {
      for (const auto& sched : spec->schedules) {
        if (sched.event == ev.event_type) {
          value = sim::draw_value(sched.value, scenario_.seed, ev.device_id, k);
          break;
        }
      }
    }

    const std::uint64_t uid = trees_.size();
    trees_.push_back(std::make_unique<InteractionTree>(
        new_tree(registry_, ev.device_id, ev.event_type, value, uid)));
    InteractionTree& tree = *trees_.back();
    tree.touch(ev.ts);
    result.trees_created++;
    ev.key = tree.root_key().str();
    live_nodes_.push_back({ev.ts, uid, tree.root_key(), ev.device_id,
                           ev.event_type, true});
    if (value) {
      registry_.set_state(ev.device_id, *value);
      state_logs_[ev.device_id].push_back(StateLogEntry{
          StateSource::kEvent, uid, tree.root_key(), ev.ts, *value});
    }
  } else {
    // A command executed on the device: attribute it to a live cause.
    const double cutoff = ev.ts - config_.attach_window_seconds;
    const DeviceRecord& target = registry_.get(ev.device_id);

    const LiveNode* parent = nullptr;
    const LiveNode* fallback = nullptr;
    for (auto it = live_nodes_.rbegin(); it != live_nodes_.rend(); ++it) {
      if (it->ts < cutoff) break;
      if (trees_[it->tree_uid]->finalized()) continue;
      if (!fallback && it->device_initiated) fallback = &*it;
      if (!parent) {
        const DeviceRecord* cause_rec =
            registry_.contains(it->device_id) ? &registry_.get(it->device_id)
                                              : nullptr;
        if (cause_rec) {
          for (const auto& rule : scenario_.rules) {
            if (rule.trigger_event != it->event_type) continue;
            if (rule.action_event != ev.event_type) continue;
            if (!rule.trigger_device.matches(*cause_rec)) continue;
            if (!rule.action_device.matches(target)) continue;
            parent = &*it;
            break;
          }
        }
      }
      if (parent) break;
    }
    if (!parent) parent = fallback;

    const std::optional<DeviceState> effect = effect_for(ev.event_type);
    if (!parent) {
      // No live cause in the window: the command starts no interaction.
      result.orphan_commands++;
    } else {
      InteractionTree& tree = *trees_[parent->tree_uid];
      const EventKey key =
          tree.attach_event(parent->key, ev.device_id, ev.event_type);
      tree.touch(ev.ts);
      tree.node(key).reading_value = effect;
      ev.key = key.str();
      live_nodes_.push_back(
          {ev.ts, parent->tree_uid, key, ev.device_id, ev.event_type, false});
      if (effect) {
        state_logs_[ev.device_id].push_back(StateLogEntry{
            StateSource::kEvent, parent->tree_uid, key, ev.ts, *effect});
      }
    }
    if (effect && !ev.discarded) registry_.set_state(ev.device_id, *effect);
  }

  device_log_.append(EventRecord{ev.device_id, ev.event_type, ev.ts,
                                 burst_index, ev.key});
  result.events.push_back(std::move(ev));
}

ControllerResult Controller::run(const std::vector<PacketRecord>& records,
                                 Actuator* actuator) {
  RecordingActuator default_actuator;
  Actuator& act = actuator ? *actuator : default_actuator;

  const auto bursts =
      segment_bursts(records, scenario_.trace_meta(), config_.gap_threshold);

  ControllerResult result;
  result.bursts_total = bursts.size();
  for (std::size_t i = 0; i < bursts.size(); ++i) {
    finalize_due(bursts[i].start_ts, result, act);
    process_burst(bursts[i], i, result, act);
  }
  finalize_due(std::numeric_limits<double>::infinity(), result, act);
  return result;
}

ControllerResult run_pipeline(const sim::ScenarioConfig& scenario,
                              const std::vector<PacketRecord>& records,
                              const std::vector<EventSignature>& signatures,
                              const Model* model, ControllerConfig config,
                              DeviceRegistry* final_registry,
                              Actuator* actuator) {
  Controller controller(scenario, signatures, model, config);
  ControllerResult result =
      controller.run(sort_stable_by_time(records), actuator);
  if (final_registry) *final_registry = controller.registry();
  return result;
}

}  // namespace iotad
