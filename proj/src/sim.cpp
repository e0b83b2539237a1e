#include "iotad/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iotad/error.hpp"
#include "iotad/rng.hpp"

namespace iotad::sim {

const char* to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kGhostCommand: return "GHOST_COMMAND";
    case AnomalyKind::kCommandFailure: return "COMMAND_FAILURE";
    case AnomalyKind::kDelayedUpdate: return "DELAYED_UPDATE";
    case AnomalyKind::kEventLoss: return "EVENT_LOSS";
    case AnomalyKind::kFalseReading: return "FALSE_READING";
    case AnomalyKind::kCompromisedInteraction: return "COMPROMISED_INTERACTION";
  }
  return "?";
}

std::optional<AnomalyKind> anomaly_kind_from_string(const std::string& s) {
  if (s == "GHOST_COMMAND") return AnomalyKind::kGhostCommand;
  if (s == "COMMAND_FAILURE") return AnomalyKind::kCommandFailure;
  if (s == "DELAYED_UPDATE") return AnomalyKind::kDelayedUpdate;
  if (s == "EVENT_LOSS") return AnomalyKind::kEventLoss;
  if (s == "FALSE_READING") return AnomalyKind::kFalseReading;
  if (s == "COMPROMISED_INTERACTION") return AnomalyKind::kCompromisedInteraction;
  return std::nullopt;
}

DeviceState draw_value(const ValueModel& model, std::uint64_t scenario_seed,
                       const std::string& device_id,
                       std::size_t reading_index) {
  switch (model.kind) {
    case ValueModel::Kind::kConstant:
      return model.constant;
    case ValueModel::Kind::kUniform: {
      SplitMix64 rng(mix_seed(mix_seed(scenario_seed, hash_str(device_id)),
                              reading_index));
      return model.lo + (model.hi - model.lo) * rng.next_double();
    }
    case ValueModel::Kind::kBernoulli: {
      SplitMix64 rng(mix_seed(mix_seed(scenario_seed, hash_str(device_id)),
                              reading_index));
      return rng.next_double() < model.p_true;
    }
  }
  return false;
}

const TrafficProfile& ScenarioConfig::profile_for(
    const std::string& device_type) const {
  auto it = profiles.find(device_type);
  if (it != profiles.end()) return it->second;
  it = profiles.find("default");
  if (it != profiles.end()) return it->second;
  static const TrafficProfile kFallback;
  return kFallback;
}

const DeviceSpec* ScenarioConfig::device(const std::string& id) const {
  for (const auto& d : devices)
    if (d.id == id) return &d;
  return nullptr;
}

TraceMeta ScenarioConfig::trace_meta() const {
  TraceMeta meta;
  meta.controller_addr = controller_addr;
  for (const auto& d : devices) meta.device_map[d.addr] = d.id;
  return meta;
}

// ---------------------------------------------------------------------------
// config validation and IO

void validate_config(const ScenarioConfig& config) {
  const auto bad = [](const std::string& path, const std::string& what) {
    fail(ErrorCode::kInvalidConfig, path + ": " + what);
  };
  if (config.schema != 1) bad("schema", "must be 1");
  if (config.tick_seconds <= 0.0) bad("tick_seconds", "must be positive");
  if (config.duration_ticks < 0) bad("duration_ticks", "must be >= 0");

  std::set<std::string> ids;
  std::set<std::uint32_t> addrs;
  for (std::size_t i = 0; i < config.devices.size(); ++i) {
    const auto& d = config.devices[i];
    const std::string path = "devices[" + std::to_string(i) + "]";
    if (d.id.empty()) bad(path + ".id", "empty");
    if (!ids.insert(d.id).second) bad(path + ".id", "duplicate '" + d.id + "'");
    if (!addrs.insert(d.addr.value).second)
      bad(path + ".addr", "duplicate " + iotad::to_string(d.addr));
    if (d.addr == config.controller_addr)
      bad(path + ".addr", "collides with the controller address");
    for (std::size_t s = 0; s < d.schedules.size(); ++s) {
      const auto& sched = d.schedules[s];
      const std::string spath = path + ".schedules[" + std::to_string(s) + "]";
      if (sched.event.empty()) bad(spath + ".event", "empty");
      if (sched.interval_ticks == 0 &&
          (sched.probability <= 0.0 || sched.probability > 1.0))
        bad(spath, "needs interval_ticks > 0 or probability in (0,1]");
      if (sched.interval_ticks < 0) bad(spath + ".interval_ticks", "negative");
    }
  }

  for (std::size_t i = 0; i < config.rules.size(); ++i) {
    const auto& rule = config.rules[i];
    const std::string path = "rules[" + std::to_string(i) + "]";
    check_rule(rule);
    if (!config.effects.count(rule.action_event))
      bad(path + ".action.event",
          "'" + rule.action_event + "' has no entry in effects");
  }

  for (std::size_t i = 0; i < config.injections.size(); ++i) {
    const auto& inj = config.injections[i];
    const std::string path = "injections[" + std::to_string(i) + "]";
    if (inj.tick < 0 || inj.tick >= std::max(config.duration_ticks, 1))
      bad(path + ".tick", "outside the run duration");
    if (!ids.count(inj.device)) bad(path + ".device", "unknown device");
    switch (inj.kind) {
      case AnomalyKind::kGhostCommand:
        if (inj.event.empty()) bad(path + ".event", "ghost needs an event");
        if (!config.effects.count(inj.event))
          bad(path + ".event", "no entry in effects");
        break;
      case AnomalyKind::kDelayedUpdate:
        if (inj.delay_ticks <= 0) bad(path + ".delay_ticks", "must be > 0");
        break;
      case AnomalyKind::kCompromisedInteraction:
        if (!ids.count(inj.action_device))
          bad(path + ".action_device", "unknown device");
        if (inj.action_event.empty() ||
            !config.effects.count(inj.action_event))
          bad(path + ".action_event", "no entry in effects");
        break;
      default:
        break;
    }
  }
}

namespace {

nlohmann::ordered_json state_to_json(const DeviceState& s) {
  if (const bool* b = std::get_if<bool>(&s)) return *b;
  if (const double* d = std::get_if<double>(&s)) return *d;
  return std::get<std::string>(s);
}

DeviceState state_from_json_value(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  fail(ErrorCode::kInvalidConfig, "state values must be bool/number/string");
}

nlohmann::ordered_json rule_to_json(const AutomationRule& rule) {
  nlohmann::ordered_json obj;
  obj["id"] = rule.rule_id;
  obj["trigger"] = {{"device", rule.trigger_device.str()},
                    {"event", rule.trigger_event}};
  if (rule.condition) {
    obj["condition"] = {{"field", rule.condition->field},
                        {"op", iotad::to_string(rule.condition->op)},
                        {"value", state_to_json(rule.condition->value)}};
  }
  obj["action"] = {{"device", rule.action_device.str()},
                   {"event", rule.action_event}};
  return obj;
}

}  // namespace

void save_scenario(const std::string& path, const ScenarioConfig& config) {
  nlohmann::ordered_json obj;
  obj["schema"] = config.schema;
  obj["seed"] = config.seed;
  obj["duration_ticks"] = config.duration_ticks;
  obj["tick_seconds"] = config.tick_seconds;
  obj["controller_addr"] = iotad::to_string(config.controller_addr);

  nlohmann::ordered_json devices = nlohmann::ordered_json::array();
  for (const auto& d : config.devices) {
    nlohmann::ordered_json dev;
    dev["id"] = d.id;
    dev["type"] = d.type;
    dev["addr"] = iotad::to_string(d.addr);
    dev["initial_state"] = state_to_json(d.initial_state);
    nlohmann::ordered_json schedules = nlohmann::ordered_json::array();
    for (const auto& s : d.schedules) {
      nlohmann::ordered_json sched;
      sched["event"] = s.event;
      if (s.interval_ticks > 0) {
        sched["interval_ticks"] = s.interval_ticks;
        sched["phase_ticks"] = s.phase_ticks;
      } else {
        sched["probability"] = s.probability;
      }
      if (s.until_tick >= 0) sched["until_tick"] = s.until_tick;
      nlohmann::ordered_json value;
      switch (s.value.kind) {
        case ValueModel::Kind::kConstant:
          value["kind"] = "constant";
          value["value"] = state_to_json(s.value.constant);
          break;
        case ValueModel::Kind::kUniform:
          value["kind"] = "uniform";
          value["lo"] = s.value.lo;
          value["hi"] = s.value.hi;
          break;
        case ValueModel::Kind::kBernoulli:
          value["kind"] = "bernoulli";
          value["p"] = s.value.p_true;
          break;
      }
      sched["value"] = value;
      schedules.push_back(sched);
    }
    dev["schedules"] = schedules;
    devices.push_back(dev);
  }
  obj["devices"] = devices;

  nlohmann::ordered_json rules = nlohmann::ordered_json::array();
  for (const auto& rule : config.rules) rules.push_back(rule_to_json(rule));
  obj["rules"] = rules;

  nlohmann::ordered_json effects;
  for (const auto& [event, state] : config.effects)
    effects[event] = state_to_json(state);
  obj["effects"] = effects;

  nlohmann::ordered_json profiles;
  for (const auto& [type, p] : config.profiles) {
    profiles[type] = {{"device_port", p.device_port},
                      {"controller_port", p.controller_port},
                      {"data_len", p.data_len},
                      {"rsp_len", p.rsp_len},
                      {"jitter", p.jitter},
                      {"pkt_gap", p.pkt_gap}};
  }
  obj["profiles"] = profiles;

  nlohmann::ordered_json injections = nlohmann::ordered_json::array();
  for (const auto& inj : config.injections) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(inj.kind);
    j["device"] = inj.device;
    j["tick"] = inj.tick;
    switch (inj.kind) {
      case AnomalyKind::kGhostCommand:
        j["event"] = inj.event;
        break;
      case AnomalyKind::kDelayedUpdate:
        j["delay_ticks"] = inj.delay_ticks;
        break;
      case AnomalyKind::kFalseReading:
        j["value"] = state_to_json(inj.bogus_value);
        break;
      case AnomalyKind::kCompromisedInteraction:
        j["action_device"] = inj.action_device;
        j["action_event"] = inj.action_event;
        break;
      default:
        break;
    }
    injections.push_back(j);
  }
  obj["injections"] = injections;

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  out << obj.dump(2) << '\n';
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig,
         "scenario is not valid JSON: " + std::string(e.what()));
  }

  ScenarioConfig config;
  try {
    config.schema = obj.at("schema").get<int>();
    config.seed = obj.at("seed").get<std::uint64_t>();
    config.duration_ticks = obj.at("duration_ticks").get<int>();
    config.tick_seconds = obj.at("tick_seconds").get<double>();
    auto ctrl = parse_ipv4(obj.at("controller_addr").get<std::string>());
    if (!ctrl) fail(ErrorCode::kInvalidConfig, "controller_addr: bad address");
    config.controller_addr = *ctrl;

    for (const auto& dev : obj.at("devices")) {
      DeviceSpec d;
      d.id = dev.at("id").get<std::string>();
      d.type = dev.at("type").get<std::string>();
      auto addr = parse_ipv4(dev.at("addr").get<std::string>());
      if (!addr)
        fail(ErrorCode::kInvalidConfig, "devices: bad address for " + d.id);
      d.addr = *addr;
      d.initial_state = state_from_json_value(dev.at("initial_state"));
      if (dev.contains("schedules")) {
        for (const auto& s : dev["schedules"]) {
          ReadingSchedule sched;
          sched.event = s.at("event").get<std::string>();
          sched.interval_ticks = s.value("interval_ticks", 0);
          sched.phase_ticks = s.value("phase_ticks", 0);
          sched.probability = s.value("probability", 0.0);
          sched.until_tick = s.value("until_tick", -1);
          const auto& v = s.at("value");
          const std::string kind = v.at("kind").get<std::string>();
          if (kind == "constant") {
            sched.value.kind = ValueModel::Kind::kConstant;
            sched.value.constant = state_from_json_value(v.at("value"));
          } else if (kind == "uniform") {
            sched.value.kind = ValueModel::Kind::kUniform;
            sched.value.lo = v.at("lo").get<double>();
            sched.value.hi = v.at("hi").get<double>();
          } else if (kind == "bernoulli") {
            sched.value.kind = ValueModel::Kind::kBernoulli;
            sched.value.p_true = v.at("p").get<double>();
          } else {
            fail(ErrorCode::kInvalidConfig, "unknown value kind '" + kind + "'");
          }
          d.schedules.push_back(std::move(sched));
        }
      }
      config.devices.push_back(std::move(d));
    }

    config.rules = rules_from_json_text(obj.at("rules").dump());

    if (obj.contains("effects")) {
      for (const auto& [event, state] : obj["effects"].items())
        config.effects[event] = state_from_json_value(state);
    }

    if (obj.contains("profiles")) {
      for (const auto& [type, p] : obj["profiles"].items()) {
        TrafficProfile profile;
        profile.device_port = p.value("device_port", 49152);
        profile.controller_port = p.value("controller_port", 8883);
        profile.data_len = p.value("data_len", 180.0);
        profile.rsp_len = p.value("rsp_len", 120.0);
        profile.jitter = p.value("jitter", 0.02);
        profile.pkt_gap = p.value("pkt_gap", 0.004);
        config.profiles[type] = profile;
      }
    }

    if (obj.contains("injections")) {
      for (const auto& j : obj["injections"]) {
        InjectionSpec inj;
        auto kind = anomaly_kind_from_string(j.at("kind").get<std::string>());
        if (!kind) fail(ErrorCode::kInvalidConfig, "unknown injection kind");
        inj.kind = *kind;
        inj.device = j.at("device").get<std::string>();
        inj.tick = j.at("tick").get<int>();
        inj.event = j.value("event", "");
        inj.delay_ticks = j.value("delay_ticks", 0);
        if (j.contains("value")) inj.bogus_value = state_from_json_value(j["value"]);
        inj.action_device = j.value("action_device", "");
        inj.action_event = j.value("action_event", "");
        config.injections.push_back(std::move(inj));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig,
         "scenario is missing fields: " + std::string(e.what()));
  }

  validate_config(config);
  return config;
}

// ---------------------------------------------------------------------------
// simulation

namespace {

struct PendingEvent {
  std::string device;
  std::string event;
  std::optional<DeviceState> value;  // readings: drawn (or bogus) value
  std::optional<std::size_t> cause;
  std::optional<AnomalyKind> kind;
  bool device_initiated = false;
  // Rogue command riding on this reading (compromised interaction).
  std::optional<InjectionSpec> rogue;
};

enum class ExchangeShape { kReport, kCommand, kGhost, kFailure };

struct WirePacket {
  bool outbound;  // device -> controller
  std::uint8_t flags;
  double length;
};

class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& config)
      : config_(config), meta_(config.trace_meta()) {
    for (const auto& d : config_.devices) states_[d.id] = d.initial_state;
    for (const auto& inj : config_.injections) {
      if (inj.kind == AnomalyKind::kGhostCommand) {
        ghosts_by_tick_[inj.tick].push_back(inj);
      } else {
        pending_[inj.device].push_back(inj);
      }
    }
    for (auto& [dev, list] : pending_) {
      std::stable_sort(list.begin(), list.end(),
                       [](const InjectionSpec& a, const InjectionSpec& b) {
                         return a.tick < b.tick;
                       });
    }
  }

  SimOutput run() {
    for (int tick = 0; tick < config_.duration_ticks; ++tick) run_tick(tick);
    SimOutput out;
    out.trace = std::move(trace_);
    out.meta = meta_;
    out.meta.record_count = out.trace.size();
    out.meta.time_span = out.trace.empty()
                             ? 0.0
                             : out.trace.back().ts - out.trace.front().ts;
    out.truth = std::move(truth_);
    finish_truth(out.truth);
    return out;
  }

 private:
  // Consumes the first unconsumed injection of `kind` for `device` whose
  // tick has arrived.
  std::optional<InjectionSpec> take_injection(const std::string& device,
                                              AnomalyKind kind, int tick) {
    auto it = pending_.find(device);
    if (it == pending_.end()) return std::nullopt;
    for (auto inj = it->second.begin(); inj != it->second.end(); ++inj) {
      if (inj->kind == kind && inj->tick <= tick) {
        InjectionSpec spec = *inj;
        it->second.erase(inj);
        return spec;
      }
    }
    return std::nullopt;
  }

  void run_tick(int tick) {
    std::deque<PendingEvent> queue;
    if (auto it = future_.find(tick); it != future_.end()) {
      for (auto& ev : it->second) queue.push_back(std::move(ev));
      future_.erase(it);
    }

    // Readings due this tick, in device declaration order.
    for (const auto& dev : config_.devices) {
      for (const auto& sched : dev.schedules) {
        if (!due(sched, dev.id, tick)) continue;
        const std::size_t k = reading_counter_[dev.id]++;
        PendingEvent ev;
        ev.device = dev.id;
        ev.event = sched.event;
        ev.value = draw_value(sched.value, config_.seed, dev.id, k);
        ev.device_initiated = true;
        if (auto inj =
                take_injection(dev.id, AnomalyKind::kFalseReading, tick)) {
          ev.value = inj->bogus_value;
          ev.kind = AnomalyKind::kFalseReading;
        }
        if (auto inj = take_injection(
                dev.id, AnomalyKind::kCompromisedInteraction, tick)) {
          ev.rogue = *inj;
        }
        queue.push_back(std::move(ev));
      }
    }

    if (auto it = ghosts_by_tick_.find(tick); it != ghosts_by_tick_.end()) {
      for (const auto& inj : it->second) {
        PendingEvent ev;
        ev.device = inj.device;
        ev.event = inj.event;
        ev.kind = AnomalyKind::kGhostCommand;
        queue.push_back(std::move(ev));
      }
    }

    std::size_t slot = 0;
    std::size_t processed = 0;
    while (!queue.empty()) {
      if (++processed > 10000)
        fail(ErrorCode::kInvalidConfig,
             "rule cascade exceeded 10000 events in one tick (cycle?)");
      PendingEvent ev = std::move(queue.front());
      queue.pop_front();

      // Delays reschedule the whole event (and therefore its cascade).
      if (!ev.kind) {
        if (auto inj = take_injection(ev.device, AnomalyKind::kDelayedUpdate,
                                      tick)) {
          ev.kind = AnomalyKind::kDelayedUpdate;
          future_[tick + inj->delay_ticks].push_back(std::move(ev));
          continue;
        }
      }

      process_event(std::move(ev), tick, slot++, queue);
    }
  }

  bool due(const ReadingSchedule& sched, const std::string& device_id,
           int tick) const {
    if (sched.until_tick >= 0 && tick > sched.until_tick) return false;
    if (sched.interval_ticks > 0) {
      const int offset = tick - sched.phase_ticks;
      return offset >= 0 && offset % sched.interval_ticks == 0;
    }
    // Bernoulli schedules consume one draw per tick.
    SplitMix64 rng(mix_seed(
        mix_seed(config_.seed, hash_str("sched:" + device_id + ":" + sched.event)),
        std::uint64_t(tick)));
    return rng.next_double() < sched.probability;
  }

  void process_event(PendingEvent ev, int tick, std::size_t slot,
                     std::deque<PendingEvent>& queue) {
    const std::size_t index = truth_.events.size();
    const double ts =
        double(tick) * config_.tick_seconds +
        double(slot) * config_.tick_seconds * 0.08;

    LedgerEvent entry;
    entry.index = index;
    entry.tick = tick;
    entry.ts = ts;
    entry.device = ev.device;
    entry.event = ev.event;
    entry.cause = ev.cause;
    entry.kind = ev.kind;
    entry.device_initiated = ev.device_initiated;

    const DeviceSpec* dev = config_.device(ev.device);
    const TrafficProfile& profile = config_.profile_for(dev ? dev->type : "");

    // Command failures: handshake only, no state change, no cascade.
    if (!ev.kind && !ev.device_initiated) {
      if (take_injection(ev.device, AnomalyKind::kCommandFailure, tick)) {
        entry.kind = AnomalyKind::kCommandFailure;
        entry.wire_anomalous = true;
        entry.state_changed = false;
        emit_exchange(*dev, profile, ts, ExchangeShape::kFailure, index);
        truth_.events.push_back(std::move(entry));
        return;
      }
    }

    // Event loss: the state changes without traffic and without the
    // controller ever seeing it; no rules fire.
    if (!ev.kind) {
      if (take_injection(ev.device, AnomalyKind::kEventLoss, tick)) {
        entry.kind = AnomalyKind::kEventLoss;
        entry.suppressed = true;
        apply_state(ev, entry);
        truth_.events.push_back(std::move(entry));
        return;
      }
    }

    apply_state(ev, entry);

    if (ev.kind == AnomalyKind::kGhostCommand) {
      // A malfunction's wire footprint deviates from the learned profile.
      entry.wire_anomalous = true;
      emit_exchange(*dev, profile, ts, ExchangeShape::kGhost, index);
      truth_.events.push_back(std::move(entry));
      return;  // discarded by the controller: nothing cascades
    }

    emit_exchange(*dev, profile, ts,
                  ev.device_initiated ? ExchangeShape::kReport
                                      : ExchangeShape::kCommand,
                  index);
    truth_.events.push_back(entry);

    // Rogue command riding on this reading (no licensing rule).
    if (ev.rogue) {
      PendingEvent rogue;
      rogue.device = ev.rogue->action_device;
      rogue.event = ev.rogue->action_event;
      rogue.cause = index;
      rogue.kind = AnomalyKind::kCompromisedInteraction;
      queue.push_back(std::move(rogue));
    }

    // The controller executes automation rules off events it accepts.
    cascade(entry, queue);
  }

  void apply_state(const PendingEvent& ev, LedgerEvent& entry) {
    DeviceState next;
    if (ev.value) {
      next = *ev.value;
    } else {
      auto it = config_.effects.find(ev.event);
      if (it == config_.effects.end())
        fail(ErrorCode::kInvalidConfig,
             "event '" + ev.event + "' has no state effect");
      next = it->second;
    }
    states_[ev.device] = next;
    entry.value = next;
    entry.state_changed = true;
  }

  void cascade(const LedgerEvent& entry, std::deque<PendingEvent>& queue) {
    const DeviceSpec* trigger_dev = config_.device(entry.device);
    if (!trigger_dev) return;
    for (const auto& rule : config_.rules) {
      if (rule.trigger_event != entry.event) continue;
      const bool trigger_matches =
          rule.trigger_device.by_type
              ? rule.trigger_device.value == trigger_dev->type
              : rule.trigger_device.value == trigger_dev->id;
      if (!trigger_matches) continue;
      if (rule.condition && !condition_true(*rule.condition, entry)) continue;

      for (const auto& target : config_.devices) {
        const bool action_matches = rule.action_device.by_type
                                        ? rule.action_device.value == target.type
                                        : rule.action_device.value == target.id;
        if (!action_matches) continue;
        PendingEvent action;
        action.device = target.id;
        action.event = rule.action_event;
        action.cause = entry.index;
        queue.push_back(std::move(action));
      }
    }
  }

  bool condition_true(const RuleCondition& cond, const LedgerEvent& entry) {
    DeviceState lhs;
    if (cond.field == "reading") {
      if (!entry.value) return false;
      lhs = *entry.value;
    } else if (cond.field.rfind("state:", 0) == 0) {
      auto it = states_.find(cond.field.substr(6));
      if (it == states_.end()) return false;
      lhs = it->second;
    } else {
      return false;
    }
    if (std::holds_alternative<double>(lhs) &&
        std::holds_alternative<double>(cond.value)) {
      const double a = std::get<double>(lhs);
      const double b = std::get<double>(cond.value);
      switch (cond.op) {
        case Comparator::kLt: return a < b;
        case Comparator::kLe: return a <= b;
        case Comparator::kEq: return a == b;
        case Comparator::kGe: return a >= b;
        case Comparator::kGt: return a > b;
        case Comparator::kNe: return a != b;
      }
      return false;
    }
    if (lhs.index() != cond.value.index()) return false;
    if (cond.op == Comparator::kEq) return lhs == cond.value;
    if (cond.op == Comparator::kNe) return lhs != cond.value;
    return false;
  }

  void emit_exchange(const DeviceSpec& dev, const TrafficProfile& profile,
                     double ts0, ExchangeShape shape, std::size_t event_index) {
    SplitMix64 rng(
        mix_seed(mix_seed(config_.seed, hash_str("wire")), event_index));

    const auto jit = [&](double base) {
      return base * (1.0 + profile.jitter * rng.uniform(-1.0, 1.0));
    };

    using tf = std::uint8_t;
    constexpr tf S = tcp_flag::kSyn;
    constexpr tf A = tcp_flag::kAck;
    constexpr tf F = tcp_flag::kFin;
    constexpr tf R = tcp_flag::kRst;
    constexpr tf P = tcp_flag::kPsh;

    std::vector<WirePacket> pkts;
    switch (shape) {
      case ExchangeShape::kReport:
        pkts = {{true, S, 74},
                {false, tf(S | A), 74},
                {true, A, 66},
                {true, tf(P | A), jit(profile.data_len)},
                {false, tf(P | A), jit(profile.rsp_len)},
                {true, tf(F | A), 66},
                {false, tf(F | A), 66},
                {true, A, 66}};
        break;
      case ExchangeShape::kCommand:
        pkts = {{false, S, 74},
                {true, tf(S | A), 74},
                {false, A, 66},
                {false, tf(P | A), jit(profile.data_len)},
                {true, tf(P | A), jit(profile.rsp_len)},
                {false, tf(F | A), 66},
                {true, tf(F | A), 66},
                {false, A, 66}};
        break;
      case ExchangeShape::kGhost:
        // Malfunction footprint: longer payloads and repeated commands.
        pkts = {{false, S, 74},
                {true, tf(S | A), 74},
                {false, A, 66},
                {false, tf(P | A), jit(profile.data_len * 1.35)},
                {false, tf(P | A), jit(profile.data_len * 1.35)},
                {true, tf(P | A), jit(profile.rsp_len * 1.35)},
                {false, tf(P | A), jit(profile.data_len * 1.35)},
                {true, tf(P | A), jit(profile.rsp_len * 1.35)},
                {false, tf(F | A), 66},
                {true, tf(F | A), 66}};
        break;
      case ExchangeShape::kFailure:
        pkts = {{false, S, 74},
                {true, tf(S | A), 74},
                {false, A, 66},
                {true, R, 66}};
        break;
    }

    double ts = ts0;
    bool first = true;
    for (const auto& pkt : pkts) {
      if (!first) ts += jit(profile.pkt_gap);
      first = false;

      PacketRecord rec;
      rec.ts = ts;
      rec.proto = Proto::kTcp;
      rec.tcp_flags = pkt.flags;
      rec.length = std::uint32_t(std::max(54.0, std::round(pkt.length)));
      if (pkt.outbound) {
        rec.src_addr = dev.addr;
        rec.dst_addr = config_.controller_addr;
        rec.src_port = profile.device_port;
        rec.dst_port = profile.controller_port;
        rec.direction = Direction::kDeviceToController;
      } else {
        rec.src_addr = config_.controller_addr;
        rec.dst_addr = dev.addr;
        rec.src_port = profile.controller_port;
        rec.dst_port = profile.device_port;
        rec.direction = Direction::kControllerToDevice;
      }
      trace_.push_back(rec);
    }
  }

  void finish_truth(GroundTruth& truth) {
    // Transitive cause closure for each rogue action.
    std::vector<std::vector<std::size_t>> children(truth.events.size());
    for (const auto& ev : truth.events)
      if (ev.cause) children[*ev.cause].push_back(ev.index);

    std::set<std::size_t> all_rogue;
    for (const auto& ev : truth.events) {
      if (ev.kind != AnomalyKind::kCompromisedInteraction) continue;
      InteractionAnomalyTruth anomaly;
      anomaly.rogue_event = ev.index;
      anomaly.originator = ev.device;
      std::vector<std::size_t> frontier{ev.index};
      while (!frontier.empty()) {
        const std::size_t idx = frontier.back();
        frontier.pop_back();
        anomaly.affected_events.push_back(idx);
        all_rogue.insert(idx);
        for (std::size_t child : children[idx]) frontier.push_back(child);
      }
      std::sort(anomaly.affected_events.begin(), anomaly.affected_events.end());
      std::set<std::string> devices;
      for (std::size_t idx : anomaly.affected_events)
        devices.insert(truth.events[idx].device);
      anomaly.affected_devices.assign(devices.begin(), devices.end());
      truth.interaction_anomalies.push_back(std::move(anomaly));
    }

    // Controller-belief oracle: replay without anomalous subtrees,
    // wire-anomalous events, or suppressed events.
    std::map<std::string, DeviceState> final_states;
    for (const auto& d : config_.devices) final_states[d.id] = d.initial_state;
    for (const auto& ev : truth.events) {
      if (ev.suppressed || ev.wire_anomalous || !ev.state_changed) continue;
      if (all_rogue.count(ev.index)) continue;
      if (ev.value) final_states[ev.device] = *ev.value;
    }
    truth.final_states = std::move(final_states);

    for (const auto& ev : truth.events) {
      if (ev.kind)
        truth.injected_counts[to_string(*ev.kind)]++;
      if (ev.wire_anomalous) truth.wire_anomalous_count++;
      if (ev.suppressed) truth.suppressed_count++;
    }
  }

  const ScenarioConfig& config_;
  TraceMeta meta_;
  std::map<std::string, DeviceState> states_;
  std::map<std::string, std::size_t> reading_counter_;
  std::map<std::string, std::vector<InjectionSpec>> pending_;
  std::map<int, std::vector<InjectionSpec>> ghosts_by_tick_;
  std::map<int, std::vector<PendingEvent>> future_;
  std::vector<PacketRecord> trace_;
  GroundTruth truth_;
};

}  // namespace

SimOutput run_scenario(const ScenarioConfig& config) {
  validate_config(config);
  Simulation simulation(config);
  return simulation.run();
}

// ---------------------------------------------------------------------------
// artifacts

namespace {

nlohmann::ordered_json event_to_json(const LedgerEvent& ev) {
  nlohmann::ordered_json obj;
  obj["idx"] = ev.index;
  obj["tick"] = ev.tick;
  obj["ts"] = ev.ts;
  obj["device"] = ev.device;
  obj["event"] = ev.event;
  obj["value"] = ev.value ? state_to_json(*ev.value) : nlohmann::ordered_json();
  obj["cause"] = ev.cause ? nlohmann::ordered_json(*ev.cause)
                          : nlohmann::ordered_json();
  obj["kind"] = ev.kind ? nlohmann::ordered_json(to_string(*ev.kind))
                        : nlohmann::ordered_json();
  obj["label"] = ev.wire_anomalous ? "ANOMALOUS" : "BENIGN";
  obj["suppressed"] = ev.suppressed;
  obj["initiated"] = ev.device_initiated;
  obj["state_changed"] = ev.state_changed;
  return obj;
}

LedgerEvent event_from_json(const nlohmann::json& obj) {
  LedgerEvent ev;
  ev.index = obj.at("idx").get<std::size_t>();
  ev.tick = obj.at("tick").get<int>();
  ev.ts = obj.at("ts").get<double>();
  ev.device = obj.at("device").get<std::string>();
  ev.event = obj.at("event").get<std::string>();
  if (!obj.at("value").is_null())
    ev.value = state_from_json_value(obj.at("value"));
  if (!obj.at("cause").is_null())
    ev.cause = obj.at("cause").get<std::size_t>();
  if (!obj.at("kind").is_null())
    ev.kind = anomaly_kind_from_string(obj.at("kind").get<std::string>());
  ev.wire_anomalous = obj.at("label").get<std::string>() == "ANOMALOUS";
  ev.suppressed = obj.at("suppressed").get<bool>();
  ev.device_initiated = obj.at("initiated").get<bool>();
  ev.state_changed = obj.at("state_changed").get<bool>();
  return ev;
}

}  // namespace

void write_ledger(const std::string& path, const GroundTruth& truth) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  for (const auto& ev : truth.events) out << event_to_json(ev).dump() << '\n';
}

void write_truth(const std::string& path, const GroundTruth& truth) {
  nlohmann::ordered_json obj;
  obj["schema"] = 1;
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const auto& ev : truth.events) events.push_back(event_to_json(ev));
  obj["events"] = events;

  nlohmann::ordered_json anomalies = nlohmann::ordered_json::array();
  for (const auto& a : truth.interaction_anomalies) {
    anomalies.push_back({{"rogue", a.rogue_event},
                         {"affected_events", a.affected_events},
                         {"affected_devices", a.affected_devices},
                         {"originator", a.originator}});
  }
  obj["interaction_anomalies"] = anomalies;

  nlohmann::ordered_json finals;
  for (const auto& [dev, state] : truth.final_states)
    finals[dev] = state_to_json(state);
  obj["final_states"] = finals;
  obj["injected_counts"] = truth.injected_counts;
  obj["wire_anomalous"] = truth.wire_anomalous_count;
  obj["suppressed"] = truth.suppressed_count;

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  out << obj.dump(2) << '\n';
}

GroundTruth read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kParseError, "bad JSON in " + path);
  }

  GroundTruth truth;
  for (const auto& ev : obj.at("events"))
    truth.events.push_back(event_from_json(ev));
  for (const auto& a : obj.at("interaction_anomalies")) {
    InteractionAnomalyTruth anomaly;
    anomaly.rogue_event = a.at("rogue").get<std::size_t>();
    anomaly.affected_events =
        a.at("affected_events").get<std::vector<std::size_t>>();
    anomaly.affected_devices =
        a.at("affected_devices").get<std::vector<std::string>>();
    anomaly.originator = a.at("originator").get<std::string>();
    truth.interaction_anomalies.push_back(std::move(anomaly));
  }
  for (const auto& [dev, state] : obj.at("final_states").items())
    truth.final_states[dev] = state_from_json_value(state);
  if (obj.contains("injected_counts")) {
    for (const auto& [kind, n] : obj["injected_counts"].items())
      truth.injected_counts[kind] = n.get<std::size_t>();
  }
  truth.wire_anomalous_count = obj.value("wire_anomalous", std::size_t(0));
  truth.suppressed_count = obj.value("suppressed", std::size_t(0));
  return truth;
}

// ---------------------------------------------------------------------------
// labeling

JoinedDataset label_dataset(const std::vector<Burst>& bursts,
                            const GroundTruth& truth, double tick_seconds) {
  // Per-device (ts, index) of events that produced traffic.
  std::map<std::string, std::vector<std::pair<double, std::size_t>>> by_device;
  for (const auto& ev : truth.events)
    if (!ev.suppressed) by_device[ev.device].emplace_back(ev.ts, ev.index);

  const double half_tick = tick_seconds / 2.0;
  JoinedDataset out;
  out.dataset.rows.reserve(bursts.size());

  for (const auto& burst : bursts) {
    out.dataset.rows.push_back(featurize(burst));

    std::optional<std::size_t> matched;
    auto it = by_device.find(burst.device_id);
    if (it != by_device.end()) {
      const auto& events = it->second;
      auto probe = std::lower_bound(
          events.begin(), events.end(),
          std::make_pair(burst.start_ts - half_tick, std::size_t(0)));
      double best_dist = 0.0;
      bool tie = false;
      for (; probe != events.end() && probe->first <= burst.start_ts + half_tick;
           ++probe) {
        const double dist = std::abs(probe->first - burst.start_ts);
        if (!matched || dist < best_dist) {
          matched = probe->second;
          best_dist = dist;
          tie = false;
        } else if (dist == best_dist && probe->second != *matched) {
          tie = true;
        }
      }
      if (tie)
        fail(ErrorCode::kJoinAmbiguous,
             "two ledger events tie for the burst on " + burst.device_id +
                 " at ts " + std::to_string(burst.start_ts));
    }

    if (matched) {
      out.dataset.labels.push_back(truth.events[*matched].wire_anomalous
                                       ? Label::kAnomalous
                                       : Label::kBenign);
    } else {
      out.dataset.labels.push_back(Label::kAnomalous);
    }
    out.event_of_burst.push_back(matched);
  }
  return out;
}

std::vector<std::pair<Burst, std::string>> signature_training_pairs(
    const std::vector<Burst>& bursts, const JoinedDataset& joined,
    const GroundTruth& truth) {
  std::vector<std::pair<Burst, std::string>> out;
  for (std::size_t i = 0; i < bursts.size(); ++i) {
    const auto& event_idx = joined.event_of_burst[i];
    if (!event_idx) continue;
    const auto& ev = truth.events[*event_idx];
    if (ev.wire_anomalous) continue;
    out.emplace_back(bursts[i], ev.event);
  }
  return out;
}

}  // namespace iotad::sim
