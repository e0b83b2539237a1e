#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "iotad/net.hpp"

namespace iotad {

// Device state: boolean on/off, a numeric reading, or an enum mode.
using DeviceState = std::variant<bool, double, std::string>;

std::string state_to_string(const DeviceState& state);
bool state_equal(const DeviceState& a, const DeviceState& b);

enum class DeviceStatus : std::uint8_t { kActive, kIsolated };

struct DeviceRecord {
  std::string device_id;
  std::string device_type;
  Ipv4Addr addr;
  DeviceState state = false;
  DeviceState initial_state = false;  // registration-time state
  DeviceStatus status = DeviceStatus::kActive;
  int reading_seq = 1;  // next X for this device as root
};

class DeviceRegistry {
 public:
  void register_device(DeviceRecord record);  // DUPLICATE_ID / DUPLICATE_ADDR
  bool contains(const std::string& device_id) const;
  const DeviceRecord& get(const std::string& device_id) const;
  DeviceRecord& get(const std::string& device_id);  // UNKNOWN_DEVICE
  void set_state(const std::string& device_id, DeviceState state);
  void isolate(const std::string& device_id);
  void reactivate(const std::string& device_id);
  std::vector<std::string> device_ids() const;
  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::string, DeviceRecord> records_;
  std::map<Ipv4Addr, std::string> by_addr_;
};

// Rendered exactly "X.Y"; X is the root reading sequence, Y the event
// sequence within the tree (dense, starting at 1).
struct EventKey {
  int x = 0;
  int y = 0;

  auto operator<=>(const EventKey&) const = default;
  std::string str() const;
};

std::optional<EventKey> parse_event_key(const std::string& s);

enum class Validation : std::uint8_t { kPending, kValid, kAnomalous };
const char* to_string(Validation v);

struct TreeNode {
  EventKey key;
  std::string device_id;
  std::string event_type;
  std::optional<DeviceState> reading_value;
  std::optional<EventKey> parent;
  std::vector<EventKey> children;
  Validation validation = Validation::kPending;
};

// Sequence of interconnected events rooted at one device reading.
class InteractionTree {
 public:
  InteractionTree(std::uint64_t uid, std::string root_device, int x,
                  const std::string& reading_event,
                  std::optional<DeviceState> reading_value);

  // New node keyed "X.(max y + 1)"; UNKNOWN_PARENT / TREE_FINALIZED.
  EventKey attach_event(const EventKey& parent_key,
                        const std::string& device_id,
                        const std::string& event_type);

  const TreeNode& node(const EventKey& key) const;  // UNKNOWN_KEY
  TreeNode& node(const EventKey& key);
  bool contains(const EventKey& key) const;

  std::uint64_t uid() const { return uid_; }
  const std::string& root_device() const { return root_device_; }
  int x() const { return x_; }
  EventKey root_key() const { return EventKey{x_, 1}; }
  int max_y() const { return max_y_; }
  bool finalized() const { return finalized_; }
  void finalize() { finalized_ = true; }
  double last_activity_ts() const { return last_activity_ts_; }
  void touch(double ts) { last_activity_ts_ = ts; }

  // Nodes in ascending y.
  const std::map<EventKey, TreeNode>& nodes() const { return nodes_; }

 private:
  std::uint64_t uid_;
  std::string root_device_;
  int x_;
  int max_y_;
  bool finalized_ = false;
  double last_activity_ts_ = 0.0;
  std::map<EventKey, TreeNode> nodes_;
};

// Device selector in a rule: a concrete id or "type:<device_type>".
struct DeviceSelector {
  bool by_type = false;
  std::string value;

  bool matches(const DeviceRecord& record) const;
  std::string str() const;
};

DeviceSelector parse_selector(const std::string& s);

enum class Comparator : std::uint8_t { kLt, kLe, kEq, kGe, kGt, kNe };
const char* to_string(Comparator c);
std::optional<Comparator> parse_comparator(const std::string& s);

// Single predicate over the trigger reading ("reading") or one registered
// device state ("state:<device_id>").
struct RuleCondition {
  std::string field;
  Comparator op = Comparator::kEq;
  DeviceState value;
};

struct AutomationRule {
  std::string rule_id;
  DeviceSelector trigger_device;
  std::string trigger_event;
  std::optional<RuleCondition> condition;
  DeviceSelector action_device;
  std::string action_event;
};

// Rules file: JSON array of
//   {id, trigger:{device,event}, condition:{field,op,value}?, action:{device,event}}
std::vector<AutomationRule> load_rules(const std::string& path);
std::vector<AutomationRule> rules_from_json_text(const std::string& text);

// Rejects self-loop rules and ordering comparators on non-numeric literals.
void check_rule(const AutomationRule& rule);

// Creates a tree for the device's current reading_seq and increments it.
// DEVICE_ISOLATED / UNKNOWN_DEVICE.
InteractionTree new_tree(DeviceRegistry& registry,
                         const std::string& root_device,
                         const std::string& reading_event,
                         std::optional<DeviceState> reading_value,
                         std::uint64_t uid);

// Root nodes are VALID by definition; a non-root node is VALID iff some rule
// licenses (parent device,event) -> (node device,event) and its condition
// holds against the parent reading / registry state at validation time.
// Updates the node and returns the verdict. UNKNOWN_KEY / PARENT_PENDING.
Validation validate_interaction(InteractionTree& tree, const EventKey& key,
                                const std::vector<AutomationRule>& rules,
                                const DeviceRegistry& registry);

// The node plus all descendants, deepest first (descending y). UNKNOWN_KEY.
std::vector<std::pair<EventKey, std::string>> affected_set(
    const InteractionTree& tree, const EventKey& key);

// Interaction log lines:
//   X.Y parent=<key|-> device=<id> event=<type> verdict=<...>
std::string interaction_log_lines(const InteractionTree& tree);

}  // namespace iotad
