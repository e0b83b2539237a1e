#include "iotad/interaction.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iotad/error.hpp"

namespace iotad {

std::string state_to_string(const DeviceState& state) {
  if (const bool* b = std::get_if<bool>(&state)) return *b ? "on" : "off";
  if (const double* d = std::get_if<double>(&state)) {
    std::ostringstream out;
    out << *d;
    return out.str();
  }
  return std::get<std::string>(state);
}

bool state_equal(const DeviceState& a, const DeviceState& b) {
  return a == b;
}

// ---------------------------------------------------------------------------
// registry

void DeviceRegistry::register_device(DeviceRecord record) {
  if (records_.count(record.device_id))
    fail(ErrorCode::kDuplicateId,
         "device id '" + record.device_id + "' already registered");
  if (by_addr_.count(record.addr))
    fail(ErrorCode::kDuplicateAddr,
         "address " + to_string(record.addr) + " already registered to '" +
             by_addr_[record.addr] + "'");
  record.initial_state = record.state;
  record.status = DeviceStatus::kActive;
  record.reading_seq = 1;
  by_addr_[record.addr] = record.device_id;
  records_[record.device_id] = std::move(record);
}

bool DeviceRegistry::contains(const std::string& device_id) const {
  return records_.count(device_id) > 0;
}

const DeviceRecord& DeviceRegistry::get(const std::string& device_id) const {
  auto it = records_.find(device_id);
  if (it == records_.end())
    fail(ErrorCode::kUnknownDevice, "unknown device '" + device_id + "'");
  return it->second;
}

DeviceRecord& DeviceRegistry::get(const std::string& device_id) {
  auto it = records_.find(device_id);
  if (it == records_.end())
    fail(ErrorCode::kUnknownDevice, "unknown device '" + device_id + "'");
  return it->second;
}

void DeviceRegistry::set_state(const std::string& device_id,
                               DeviceState state) {
  get(device_id).state = std::move(state);
}

void DeviceRegistry::isolate(const std::string& device_id) {
  get(device_id).status = DeviceStatus::kIsolated;
}

void DeviceRegistry::reactivate(const std::string& device_id) {
  get(device_id).status = DeviceStatus::kActive;
}

std::vector<std::string> DeviceRegistry::device_ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& [id, _] : records_) out.push_back(id);
  return out;
}

// ---------------------------------------------------------------------------
// keys and trees

std::string EventKey::str() const {
  return std::to_string(x) + "." + std::to_string(y);
}

std::optional<EventKey> parse_event_key(const std::string& s) {
  const auto dot = s.find('.');
  if (dot == std::string::npos) return std::nullopt;
  EventKey key;
  auto r1 = std::from_chars(s.data(), s.data() + dot, key.x);
  auto r2 = std::from_chars(s.data() + dot + 1, s.data() + s.size(), key.y);
  if (r1.ec != std::errc() || r2.ec != std::errc() ||
      r1.ptr != s.data() + dot || r2.ptr != s.data() + s.size())
    return std::nullopt;
  if (key.x < 1 || key.y < 1) return std::nullopt;
  return key;
}

const char* to_string(Validation v) {
  switch (v) {
    case Validation::kPending: return "PENDING";
    case Validation::kValid: return "VALID";
    case Validation::kAnomalous: return "ANOMALOUS";
  }
  return "?";
}

InteractionTree::InteractionTree(std::uint64_t uid, std::string root_device,
                                 int x, const std::string& reading_event,
                                 std::optional<DeviceState> reading_value)
    : uid_(uid), root_device_(std::move(root_device)), x_(x), max_y_(1) {
  TreeNode root;
  root.key = EventKey{x_, 1};
  root.device_id = root_device_;
  root.event_type = reading_event;
  root.reading_value = std::move(reading_value);
  nodes_.emplace(root.key, std::move(root));
}

EventKey InteractionTree::attach_event(const EventKey& parent_key,
                                       const std::string& device_id,
                                       const std::string& event_type) {
  if (finalized_)
    fail(ErrorCode::kTreeFinalized,
         "tree " + std::to_string(x_) + " of " + root_device_ +
             " is finalized");
  auto it = nodes_.find(parent_key);
  if (it == nodes_.end())
    fail(ErrorCode::kUnknownParent,
         "no node " + parent_key.str() + " in tree " + std::to_string(x_) +
             " of " + root_device_);

  const EventKey key{x_, ++max_y_};
  TreeNode node;
  node.key = key;
  node.device_id = device_id;
  node.event_type = event_type;
  node.parent = parent_key;
  it->second.children.push_back(key);
  nodes_.emplace(key, std::move(node));
  return key;
}

const TreeNode& InteractionTree::node(const EventKey& key) const {
  auto it = nodes_.find(key);
  if (it == nodes_.end())
    fail(ErrorCode::kUnknownKey, "no node " + key.str());
  return it->second;
}

TreeNode& InteractionTree::node(const EventKey& key) {
  auto it = nodes_.find(key);
  if (it == nodes_.end())
    fail(ErrorCode::kUnknownKey, "no node " + key.str());
  return it->second;
}

bool InteractionTree::contains(const EventKey& key) const {
  return nodes_.count(key) > 0;
}

// ---------------------------------------------------------------------------
// rules

bool DeviceSelector::matches(const DeviceRecord& record) const {
  return by_type ? record.device_type == value : record.device_id == value;
}

std::string DeviceSelector::str() const {
  return by_type ? "type:" + value : value;
}

DeviceSelector parse_selector(const std::string& s) {
  if (s.rfind("type:", 0) == 0) return DeviceSelector{true, s.substr(5)};
  return DeviceSelector{false, s};
}

const char* to_string(Comparator c) {
  switch (c) {
    case Comparator::kLt: return "<";
    case Comparator::kLe: return "<=";
    case Comparator::kEq: return "=";
    case Comparator::kGe: return ">=";
    case Comparator::kGt: return ">";
    case Comparator::kNe: return "!=";
  }
  return "?";
}

std::optional<Comparator> parse_comparator(const std::string& s) {
  if (s == "<") return Comparator::kLt;
  if (s == "<=") return Comparator::kLe;
  if (s == "=" || s == "==") return Comparator::kEq;
  if (s == ">=") return Comparator::kGe;
  if (s == ">") return Comparator::kGt;
  if (s == "!=") return Comparator::kNe;
  return std::nullopt;
}

namespace {

DeviceState state_from_json(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  fail(ErrorCode::kInvalidRule, "condition value must be bool/number/string");
}

// Comparators apply only to type-compatible values: full ordering for
// numbers, equality for bool/enum. Anything else evaluates false.
bool compare_states(const DeviceState& lhs, Comparator op,
                    const DeviceState& rhs) {
  if (std::holds_alternative<double>(lhs) &&
      std::holds_alternative<double>(rhs)) {
    const double a = std::get<double>(lhs);
    const double b = std::get<double>(rhs);
    switch (op) {
      case Comparator::kLt: return a < b;
      case Comparator::kLe: return a <= b;
      case Comparator::kEq: return a == b;
      case Comparator::kGe: return a >= b;
      case Comparator::kGt: return a > b;
      case Comparator::kNe: return a != b;
    }
    return false;
  }
  if (lhs.index() != rhs.index()) return false;
  switch (op) {
    case Comparator::kEq: return lhs == rhs;
    case Comparator::kNe: return lhs != rhs;
    default: return false;
  }
}

}  // namespace

void check_rule(const AutomationRule& rule) {
  if (rule.trigger_device.by_type == rule.action_device.by_type &&
      rule.trigger_device.value == rule.action_device.value &&
      rule.trigger_event == rule.action_event)
    fail(ErrorCode::kInvalidRule,
         "rule '" + rule.rule_id + "' triggers its own action (self-loop)");
  if (rule.condition) {
    const bool ordering = rule.condition->op != Comparator::kEq &&
                          rule.condition->op != Comparator::kNe;
    if (ordering && !std::holds_alternative<double>(rule.condition->value))
      fail(ErrorCode::kInvalidRule,
           "rule '" + rule.rule_id +
               "': ordering comparator on a non-numeric value");
  }
}

std::vector<AutomationRule> rules_from_json_text(const std::string& text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kParseError, "rules file is not valid JSON");
  }
  if (!arr.is_array())
    fail(ErrorCode::kParseError, "rules file must hold a JSON array");

  std::vector<AutomationRule> rules;
  for (const auto& obj : arr) {
    AutomationRule rule;
    rule.rule_id = obj.at("id").get<std::string>();
    rule.trigger_device =
        parse_selector(obj.at("trigger").at("device").get<std::string>());
    rule.trigger_event = obj.at("trigger").at("event").get<std::string>();
    rule.action_device =
        parse_selector(obj.at("action").at("device").get<std::string>());
    rule.action_event = obj.at("action").at("event").get<std::string>();
    if (obj.contains("condition") && !obj["condition"].is_null()) {
      RuleCondition cond;
      cond.field = obj["condition"].at("field").get<std::string>();
      auto op = parse_comparator(obj["condition"].at("op").get<std::string>());
      if (!op)
        fail(ErrorCode::kInvalidRule,
             "rule '" + rule.rule_id + "': unknown comparator");
      cond.op = *op;
      cond.value = state_from_json(obj["condition"].at("value"));
      rule.condition = std::move(cond);
    }
    check_rule(rule);
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<AutomationRule> load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return rules_from_json_text(buffer.str());
}

// ---------------------------------------------------------------------------
// operations

InteractionTree new_tree(DeviceRegistry& registry,
                         const std::string& root_device,
                         const std::string& reading_event,
                         std::optional<DeviceState> reading_value,
                         std::uint64_t uid) {
  DeviceRecord& record = registry.get(root_device);
  if (record.status == DeviceStatus::kIsolated)
    fail(ErrorCode::kDeviceIsolated,
         "device '" + root_device + "' is isolated");
  const int x = record.reading_seq++;
  return InteractionTree(uid, root_device, x, reading_event,
                         std::move(reading_value));
}

namespace {

bool condition_holds(const RuleCondition& cond, const TreeNode& parent,
                     const DeviceRegistry& registry) {
  if (cond.field == "reading") {
    if (!parent.reading_value) return false;
    return compare_states(*parent.reading_value, cond.op, cond.value);
  }
  if (cond.field.rfind("state:", 0) == 0) {
    const std::string device_id = cond.field.substr(6);
    if (!registry.contains(device_id)) return false;
    return compare_states(registry.get(device_id).state, cond.op, cond.value);
  }
  return false;
}

}  // namespace

Validation validate_interaction(InteractionTree& tree, const EventKey& key,
                                const std::vector<AutomationRule>& rules,
                                const DeviceRegistry& registry) {
  TreeNode& node = tree.node(key);  // UNKNOWN_KEY
  if (!node.parent) {
    // Device readings are ground truth to the controller.
    node.validation = Validation::kValid;
    return node.validation;
  }

  const TreeNode& parent = tree.node(*node.parent);
  if (parent.validation == Validation::kPending)
    fail(ErrorCode::kParentPending,
         "parent " + node.parent->str() + " has no verdict yet");

  const DeviceRecord* parent_rec =
      registry.contains(parent.device_id) ? &registry.get(parent.device_id)
                                          : nullptr;
  const DeviceRecord* node_rec =
      registry.contains(node.device_id) ? &registry.get(node.device_id)
                                        : nullptr;

  bool licensed = false;
  for (const auto& rule : rules) {
    if (rule.trigger_event != parent.event_type) continue;
    if (rule.action_event != node.event_type) continue;
    if (!parent_rec || !rule.trigger_device.matches(*parent_rec)) continue;
    if (!node_rec || !rule.action_device.matches(*node_rec)) continue;
    if (rule.condition && !condition_holds(*rule.condition, parent, registry))
      continue;
    licensed = true;
    break;
  }

  node.validation = licensed ? Validation::kValid : Validation::kAnomalous;
  return node.validation;
}

std::vector<std::pair<EventKey, std::string>> affected_set(
    const InteractionTree& tree, const EventKey& key) {
  const TreeNode& root = tree.node(key);  // UNKNOWN_KEY

  std::vector<EventKey> frontier{root.key};
  std::vector<std::pair<EventKey, std::string>> out;
  while (!frontier.empty()) {
    const EventKey current = frontier.back();
    frontier.pop_back();
    const TreeNode& n = tree.node(current);
    out.emplace_back(current, n.device_id);
    for (const EventKey& child : n.children) frontier.push_back(child);
  }
  // Deepest first: child keys always carry larger y than their parents.
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first.y > b.first.y; });
  return out;
}

std::string interaction_log_lines(const InteractionTree& tree) {
  std::string out;
  for (const auto& [key, node] : tree.nodes()) {
    out += key.str();
    out += " parent=";
    out += node.parent ? node.parent->str() : "-";
    out += " device=" + node.device_id;
    out += " event=" + node.event_type;
    out += " verdict=";
    out += to_string(node.validation);
    out += '\n';
  }
  return out;
}

}  // namespace iotad
