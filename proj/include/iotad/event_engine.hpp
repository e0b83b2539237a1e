#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iotad/packet.hpp"

namespace iotad {

inline constexpr std::size_t kFeatureDim = 12;

// Fixed feature order; every model and signature indexes with these.
namespace feature {
inline constexpr std::size_t kSrcPortMode = 0;
inline constexpr std::size_t kDstPortMode = 1;
inline constexpr std::size_t kPacketCount = 2;
inline constexpr std::size_t kTotalBytes = 3;
inline constexpr std::size_t kMeanLength = 4;
inline constexpr std::size_t kLengthVariance = 5;
inline constexpr std::size_t kDurationSeconds = 6;
inline constexpr std::size_t kSynCount = 7;
inline constexpr std::size_t kAckCount = 8;
inline constexpr std::size_t kFinCount = 9;
inline constexpr std::size_t kRstCount = 10;
inline constexpr std::size_t kFractionOutbound = 11;

const char* name(std::size_t index);
}  // namespace feature

using FeatureVector = std::array<double, kFeatureDim>;

// Contiguous per-device packet group delimited by inter-packet gaps; the
// wire footprint of one event.
struct Burst {
  std::string device_id;
  std::vector<PacketRecord> records;
  double start_ts = 0.0;
  double end_ts = 0.0;
};

// Learned feature template for one (device, event-type) pair.
struct EventSignature {
  std::string event_type;
  std::string device_id;
  FeatureVector centroid{};
  FeatureVector tolerance{};
  std::size_t sample_count = 0;
};

inline constexpr const char* kAnomalyCandidate = "ANOMALY_CANDIDATE";
inline constexpr const char* kUnassignedKey = "unassigned";

struct EventRecord {
  std::string device_id;
  std::string event_type;  // or ANOMALY_CANDIDATE
  double ts = 0.0;
  std::size_t burst_index = 0;
  std::string key = kUnassignedKey;  // "X.Y" once interaction_core assigns it
};

inline constexpr double kDefaultGapThreshold = 1.0;  // seconds
inline constexpr double kRelativeFloorTolerance = 0.05;
inline constexpr double kCountFloorTolerance = 1.0;

// Greedy per-device segmentation: a device's new burst starts when the gap
// to its previous packet reaches gap_threshold. Records that cannot be
// attributed to a device (controller<->external) are ignored. Output is
// ordered by (start_ts, device_id).
std::vector<Burst> segment_bursts(const std::vector<PacketRecord>& records,
                                  const TraceMeta& meta,
                                  double gap_threshold = kDefaultGapThreshold);

// Port modes break ties toward the smaller port; variance is the population
// variance; outbound means the packet leaves the device.
FeatureVector featurize(const Burst& burst);

std::vector<EventSignature> build_signatures(
    const std::vector<std::pair<Burst, std::string>>& labeled_bursts);

struct MatchResult {
  std::string event_type;
  double normalized_deviation = 0.0;
};

// Per-feature gate |fv - centroid| <= tolerance against the device's
// signatures; among matches the smallest mean |deviation|/tolerance wins,
// ties to the lexicographically smallest event_type. nullopt = NO_MATCH.
std::optional<MatchResult> match_signature(
    const FeatureVector& fv, const std::vector<EventSignature>& signatures,
    const std::string& device_id);

// Append-only chronological event log per device.
class DeviceLog {
 public:
  void append(const EventRecord& ev);  // throws OUT_OF_ORDER
  const std::vector<EventRecord>& entries(const std::string& device_id) const;
  std::vector<std::string> devices() const;

 private:
  std::map<std::string, std::vector<EventRecord>> logs_;
};

// Signature database file: versioned header line, then one JSON record per
// signature.
void write_signatures(const std::string& path,
                      const std::vector<EventSignature>& signatures);
std::vector<EventSignature> read_signatures(const std::string& path);

// Device log file lines: `key=X.Y device=<id> event=<type> ts=<seconds>`.
void write_device_log(const std::string& path, const DeviceLog& log);

}  // namespace iotad
