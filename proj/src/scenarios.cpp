#include <algorithm>
#include <set>

#include "iotad/error.hpp"
#include "iotad/rng.hpp"
#include "iotad/sim.hpp"

namespace iotad::sim::scenarios {

namespace {

Ipv4Addr addr(const std::string& dotted) {
  auto a = parse_ipv4(dotted);
  if (!a) fail(ErrorCode::kInvalidConfig, "bad builder address " + dotted);
  return *a;
}

ReadingSchedule periodic(const std::string& event, int interval, int phase,
                         ValueModel value, int until = -1) {
  ReadingSchedule s;
  s.event = event;
  s.interval_ticks = interval;
  s.phase_ticks = phase;
  s.until_tick = until;
  s.value = value;
  return s;
}

ValueModel uniform_value(double lo, double hi) {
  ValueModel v;
  v.kind = ValueModel::Kind::kUniform;
  v.lo = lo;
  v.hi = hi;
  return v;
}

ValueModel constant_value(DeviceState s) {
  ValueModel v;
  v.kind = ValueModel::Kind::kConstant;
  v.constant = std::move(s);
  return v;
}

ValueModel bernoulli_value(double p) {
  ValueModel v;
  v.kind = ValueModel::Kind::kBernoulli;
  v.p_true = p;
  return v;
}

AutomationRule rule(const std::string& id, const std::string& trig_dev,
                    const std::string& trig_event, const std::string& act_dev,
                    const std::string& act_event,
                    std::optional<RuleCondition> cond = std::nullopt) {
  AutomationRule r;
  r.rule_id = id;
  r.trigger_device = parse_selector(trig_dev);
  r.trigger_event = trig_event;
  r.action_device = parse_selector(act_dev);
  r.action_event = act_event;
  r.condition = std::move(cond);
  return r;
}

RuleCondition reading_gt(double threshold) {
  return RuleCondition{"reading", Comparator::kGt, threshold};
}

TrafficProfile profile(std::uint16_t dev_port, std::uint16_t ctrl_port,
                       double data_len, double rsp_len) {
  TrafficProfile p;
  p.device_port = dev_port;
  p.controller_port = ctrl_port;
  p.data_len = data_len;
  p.rsp_len = rsp_len;
  p.jitter = 0.01;
  p.pkt_gap = 0.004;
  return p;
}

// The 12-device smart-home family shared by the S1 and closure scenarios.
ScenarioConfig family(std::uint64_t seed, int duration_ticks,
                      bool conditioned) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.duration_ticks = duration_ticks;
  cfg.tick_seconds = 0.1;
  cfg.controller_addr = addr("10.0.0.1");

  const auto dev = [&](const std::string& id, const std::string& type,
                       const std::string& ip, DeviceState initial,
                       std::vector<ReadingSchedule> schedules = {}) {
    DeviceSpec d;
    d.id = id;
    d.type = type;
    d.addr = addr(ip);
    d.initial_state = std::move(initial);
    d.schedules = std::move(schedules);
    cfg.devices.push_back(std::move(d));
  };

  dev("t1", "thermostat", "10.0.0.11", 70.0,
      {periodic("temp_reading", 40, 3, uniform_value(62, 88)),
       periodic("humidity_reading", 40, 23, uniform_value(30, 70))});
  dev("e1", "voice_assistant", "10.0.0.12", std::string("idle"),
      {periodic("voice_command", 70, 11, constant_value(std::string("play"))),
       periodic("presence_ping", 70, 46, bernoulli_value(0.6))});
  dev("s1", "smart_plug", "10.0.0.13", 0.0,
      {periodic("power_draw_a", 50, 7, uniform_value(10, 1500)),
       periodic("energy_pulse", 50, 32, uniform_value(0, 100))});
  dev("s2", "smart_plug", "10.0.0.14", 0.0,
      {periodic("power_draw_b", 60, 17, uniform_value(10, 1500))});
  dev("s3", "smart_plug", "10.0.0.15", 0.0,
      {periodic("power_draw_c", 66, 29, uniform_value(10, 1500))});
  dev("k1", "smart_kettle", "10.0.0.16", 20.0,
      {periodic("kettle_temp", 80, 37, uniform_value(20, 100)),
       periodic("kettle_level", 80, 77, uniform_value(0, 1))});
  dev("l1", "smart_light", "10.0.0.21", false);
  dev("l2", "smart_light", "10.0.0.22", false);
  dev("l3", "smart_light", "10.0.0.23", false);
  dev("l4", "smart_light", "10.0.0.24", false);
  dev("s4", "smart_plug", "10.0.0.25", false);
  dev("s5", "smart_plug", "10.0.0.26", false);

  cfg.rules = {
      rule("r1", "t1", "temp_reading", "s4", "fan_on",
           conditioned ? std::optional<RuleCondition>(reading_gt(78))
                       : std::nullopt),
      rule("r2", "t1", "humidity_reading", "s5", "dehumidify_on",
           conditioned ? std::optional<RuleCondition>(reading_gt(55))
                       : std::nullopt),
      rule("r3", "e1", "voice_command", "l1", "lamp_on"),
      rule("r4", "e1", "presence_ping", "l1", "lamp_dim"),
      rule("r5", "s1", "power_draw_a", "l2", "bulb_on"),
      rule("r6", "s1", "energy_pulse", "l2", "bulb_off_soft"),
      rule("r7", "s2", "power_draw_b", "l3", "accent_on"),
      rule("r8", "s3", "power_draw_c", "l4", "accent_pulse"),
  };

  cfg.effects = {
      {"fan_on", true},          {"dehumidify_on", true},
      {"lamp_on", true},         {"lamp_dim", std::string("dim")},
      {"bulb_on", true},         {"bulb_off_soft", false},
      {"accent_on", true},       {"accent_pulse", std::string("pulse")},
      {"firmware_probe", std::string("probed")},
      {"rogue_toggle", true},
  };

  cfg.profiles = {
      {"default", profile(49210, 8810, 170, 110)},
      {"thermostat", profile(49211, 8811, 156, 96)},
      {"voice_assistant", profile(49212, 8812, 210, 140)},
      {"smart_plug", profile(49213, 8813, 172, 104)},
      {"smart_kettle", profile(49214, 8814, 188, 118)},
      {"smart_light", profile(49215, 8815, 164, 100)},
  };
  return cfg;
}

struct DryRunStats {
  std::size_t benign_events = 0;
  // (device, tick) of command events, in ledger order.
  std::vector<std::pair<std::string, int>> actions;
  // busy ticks per device
  std::map<std::string, std::vector<int>> busy;
};

DryRunStats dry_run(const ScenarioConfig& cfg) {
  ScenarioConfig clean = cfg;
  clean.injections.clear();
  const SimOutput out = run_scenario(clean);
  DryRunStats stats;
  stats.benign_events = out.truth.events.size();
  for (const auto& ev : out.truth.events) {
    stats.busy[ev.device].push_back(ev.tick);
    if (!ev.device_initiated) stats.actions.emplace_back(ev.device, ev.tick);
  }
  return stats;
}

// Ticks on `device` at least `clearance` ticks away from every busy tick and
// `spacing` apart from each other.
std::vector<int> free_slots(const std::vector<int>& busy, int duration,
                            int clearance, int spacing) {
  std::vector<int> slots;
  std::size_t next_busy = 0;
  int last_slot = -spacing;
  for (int tick = clearance; tick < duration - clearance; ++tick) {
    while (next_busy < busy.size() && busy[next_busy] < tick - clearance)
      next_busy++;
    bool clear = true;
    for (std::size_t i = next_busy; i < busy.size() && busy[i] <= tick + clearance;
         ++i) {
      clear = false;
      break;
    }
    if (clear && tick - last_slot >= spacing) {
      slots.push_back(tick);
      last_slot = tick;
    }
  }
  return slots;
}

// Wire-visible injections: ghosts on quiet devices plus command failures,
// sized so anomalous / total == anomaly_share.
void add_wire_injections(ScenarioConfig& cfg, double anomaly_share,
                         double failure_share) {
  const DryRunStats stats = dry_run(cfg);
  const double benign = double(stats.benign_events);

  const std::size_t failures = std::size_t(failure_share * benign);
  const double ghosts_exact =
      (anomaly_share * benign - double(failures)) / (1.0 - anomaly_share);
  const std::size_t ghosts = ghosts_exact > 0 ? std::size_t(ghosts_exact) : 0;

  // Failures convert evenly spaced existing command events.
  if (failures > 0 && !stats.actions.empty()) {
    const std::size_t stride =
        std::max<std::size_t>(1, stats.actions.size() / failures);
    std::size_t placed = 0;
    for (std::size_t i = 0; i < stats.actions.size() && placed < failures;
         i += stride) {
      InjectionSpec inj;
      inj.kind = AnomalyKind::kCommandFailure;
      inj.device = stats.actions[i].first;
      inj.tick = stats.actions[i].second;
      cfg.injections.push_back(inj);
      placed++;
    }
  }

  // Ghost commands go to free slots on whichever devices have them.
  std::map<std::string, std::vector<int>> slots;
  std::vector<std::string> hosts;
  for (const auto& d : cfg.devices) {
    auto busy_it = stats.busy.find(d.id);
    static const std::vector<int> kNone;
    const auto& busy = busy_it == stats.busy.end() ? kNone : busy_it->second;
    auto s = free_slots(busy, cfg.duration_ticks, 15, 15);
    if (!s.empty()) {
      slots[d.id] = std::move(s);
      hosts.push_back(d.id);
    }
  }
  if (ghosts > 0 && hosts.empty())
    fail(ErrorCode::kInvalidConfig, "no free slots for ghost injections");

  std::map<std::string, std::size_t> cursor;
  std::size_t placed = 0;
  std::size_t host_idx = 0;
  std::size_t stuck = 0;
  while (placed < ghosts) {
    const std::string& host = hosts[host_idx % hosts.size()];
    host_idx++;
    auto& c = cursor[host];
    if (c >= slots[host].size()) {
      if (++stuck > hosts.size()) break;  // all hosts exhausted
      continue;
    }
    stuck = 0;
    InjectionSpec inj;
    inj.kind = AnomalyKind::kGhostCommand;
    inj.device = host;
    inj.tick = slots[host][c++];
    inj.event = placed % 2 == 0 ? "firmware_probe" : "rogue_toggle";
    cfg.injections.push_back(inj);
    placed++;
  }
  if (placed < ghosts)
    fail(ErrorCode::kInvalidConfig, "ran out of ghost slots: placed " +
                                        std::to_string(placed) + " of " +
                                        std::to_string(ghosts));

  std::stable_sort(cfg.injections.begin(), cfg.injections.end(),
                   [](const InjectionSpec& a, const InjectionSpec& b) {
                     return a.tick < b.tick;
                   });
}

}  // namespace

ScenarioConfig benign_family(std::uint64_t seed, int duration_ticks,
                             bool with_injections) {
  ScenarioConfig cfg = family(seed, duration_ticks, false);
  if (with_injections) add_wire_injections(cfg, 0.06, 0.02);
  validate_config(cfg);
  return cfg;
}

ScenarioConfig s1() {
  ScenarioConfig cfg = family(42, 32000, true);
  add_wire_injections(cfg, 0.10, 0.04);
  validate_config(cfg);
  return cfg;
}

ScenarioConfig rollback_random(std::uint64_t seed, int n_injections) {
  SplitMix64 rng(mix_seed(seed, hash_str("rollback")));

  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.tick_seconds = 0.1;
  cfg.controller_addr = addr("10.1.0.1");

  const int training_end = 400;
  const int first_injection = training_end + 80;
  const int spacing = 50;
  cfg.duration_ticks = first_injection + n_injections * spacing + 300;

  int next_host = 2;
  const auto next_addr = [&] {
    return addr("10.1.0." + std::to_string(next_host++));
  };

  cfg.profiles = {
      {"default", profile(49300, 8900, 170, 110)},
      {"sensor", profile(49301, 8901, 150, 95)},
      {"actuator", profile(49302, 8902, 166, 102)},
      {"remote", profile(49303, 8903, 200, 130)},
      {"victim", profile(49304, 8904, 182, 114)},
      {"cascade", profile(49305, 8905, 158, 98)},
  };

  // Sensors run the whole scenario; their readings root most trees.
  const int intervals[3] = {30 + int(rng.below(4)), 36 + int(rng.below(4)),
                            44 + int(rng.below(4))};
  std::vector<std::string> sensor_ids;
  for (int i = 0; i < 3; ++i) {
    DeviceSpec d;
    d.id = "sens" + std::to_string(i);
    d.type = "sensor";
    d.addr = next_addr();
    d.initial_state = 0.0;
    d.schedules = {periodic("reading_" + std::to_string(i), intervals[i],
                            3 + i * 7 + int(rng.below(4)),
                            uniform_value(0, 100))};
    sensor_ids.push_back(d.id);
    cfg.devices.push_back(std::move(d));

    const std::string act = "act" + std::to_string(i);
    DeviceSpec a;
    a.id = act;
    a.type = "actuator";
    a.addr = next_addr();
    a.initial_state = false;
    cfg.devices.push_back(std::move(a));
    cfg.rules.push_back(rule("rs" + std::to_string(i), "sens" + std::to_string(i),
                             "reading_" + std::to_string(i), act,
                             "actuate_" + std::to_string(i)));
    cfg.effects["actuate_" + std::to_string(i)] = true;
  }

  // The trainer exercises every victim during the training window only, so
  // victims are quiet by the time injections begin.
  DeviceSpec trainer;
  trainer.id = "trainer";
  trainer.type = "remote";
  trainer.addr = next_addr();
  trainer.initial_state = std::string("idle");
  trainer.schedules = {
      periodic("press_on", 40, 5, constant_value(true), training_end),
      periodic("press_off", 40, 25, constant_value(true), training_end)};
  cfg.devices.push_back(std::move(trainer));

  for (int i = 0; i < n_injections; ++i) {
    const std::string v = "victim" + std::to_string(i);
    const std::string arm = "arm_" + std::to_string(i);
    const std::string disarm = "disarm_" + std::to_string(i);
    DeviceSpec vd;
    vd.id = v;
    vd.type = "victim";
    vd.addr = next_addr();
    vd.initial_state = false;
    cfg.devices.push_back(std::move(vd));
    cfg.rules.push_back(rule("rv_on" + std::to_string(i), "trainer", "press_on",
                             v, arm));
    cfg.rules.push_back(rule("rv_off" + std::to_string(i), "trainer",
                             "press_off", v, disarm));
    cfg.effects[arm] = true;
    cfg.effects[disarm] = false;

    const int n_cascade = 1 + int(rng.below(2));
    for (int c = 0; c < n_cascade; ++c) {
      const std::string cid =
          "casc" + std::to_string(i) + "_" + std::to_string(c);
      const std::string engage = "engage_" + std::to_string(i) + "_" +
                                 std::to_string(c);
      const std::string release = "release_" + std::to_string(i) + "_" +
                                  std::to_string(c);
      DeviceSpec cd;
      cd.id = cid;
      cd.type = "cascade";
      cd.addr = next_addr();
      cd.initial_state = false;
      cfg.devices.push_back(std::move(cd));
      cfg.rules.push_back(
          rule("rc_on" + cid, v, arm, cid, engage));
      cfg.rules.push_back(
          rule("rc_off" + cid, v, disarm, cid, release));
      cfg.effects[engage] = true;
      cfg.effects[release] = false;
    }
  }

  // A few ghosts in the training window keep both classes present for
  // classifier training. Regular actuators fire every sensor interval, so
  // mid-gap ticks have enough clearance.
  cfg.effects["ghost_probe"] = std::string("probed");
  for (int i = 0; i < 3; ++i) {
    for (int g = 0; g < 2; ++g) {
      InjectionSpec inj;
      inj.kind = AnomalyKind::kGhostCommand;
      inj.device = "act" + std::to_string(i);
      const int phase = 3 + i * 7;
      inj.tick = phase + intervals[i] * (3 + g * 4) + intervals[i] / 2;
      inj.event = "ghost_probe";
      cfg.injections.push_back(inj);
    }
  }

  // Compromised interactions: a sensor's reading carries a rogue command to
  // its victim; the victim's own rules then propagate it.
  for (int i = 0; i < n_injections; ++i) {
    InjectionSpec inj;
    inj.kind = AnomalyKind::kCompromisedInteraction;
    inj.device = sensor_ids[std::size_t(i) % sensor_ids.size()];
    inj.tick = first_injection + i * spacing;
    inj.action_device = "victim" + std::to_string(i);
    inj.action_event = "arm_" + std::to_string(i);
    cfg.injections.push_back(inj);
  }

  validate_config(cfg);
  return cfg;
}

}  // namespace iotad::sim::scenarios
