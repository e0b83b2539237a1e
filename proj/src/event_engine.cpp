#include "iotad/event_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "iotad/error.hpp"

namespace iotad {

namespace feature {
const char* name(std::size_t index) {
  switch (index) {
    case kSrcPortMode: return "src_port_mode";
    case kDstPortMode: return "dst_port_mode";
    case kPacketCount: return "packet_count";
    case kTotalBytes: return "total_bytes";
    case kMeanLength: return "mean_length";
    case kLengthVariance: return "length_variance";
    case kDurationSeconds: return "duration_seconds";
    case kSynCount: return "syn_count";
    case kAckCount: return "ack_count";
    case kFinCount: return "fin_count";
    case kRstCount: return "rst_count";
    case kFractionOutbound: return "fraction_outbound";
  }
  return "?";
}
}  // namespace feature

namespace {

bool is_count_feature(std::size_t i) {
  switch (i) {
    case feature::kPacketCount:
    case feature::kTotalBytes:
    case feature::kSynCount:
    case feature::kAckCount:
    case feature::kFinCount:
    case feature::kRstCount:
      return true;
    default:
      return false;
  }
}

double port_mode(const std::vector<PacketRecord>& records, bool src) {
  std::map<std::uint16_t, std::size_t> counts;
  for (const auto& r : records) counts[src ? r.src_port : r.dst_port]++;
  std::uint16_t best = 0;
  std::size_t best_count = 0;
  for (const auto& [port, count] : counts) {
    // map iteration is ascending, so ties keep the smaller port
    if (count > best_count) {
      best = port;
      best_count = count;
    }
  }
  return double(best);
}

bool outbound(const PacketRecord& r) {
  return r.direction == Direction::kDeviceToController ||
         r.direction == Direction::kDeviceToExternal;
}

}  // namespace

std::vector<Burst> segment_bursts(const std::vector<PacketRecord>& records,
                                  const TraceMeta& meta,
                                  double gap_threshold) {
  if (gap_threshold <= 0.0)
    fail(ErrorCode::kInvalidArgument, "gap_threshold must be positive");

  std::map<std::string, std::vector<Burst>> per_device;
  for (const auto& rec : records) {
    auto device = record_device(rec, meta);
    if (!device) continue;
    auto& bursts = per_device[*device];
    if (bursts.empty() ||
        rec.ts - bursts.back().end_ts >= gap_threshold) {
      bursts.push_back(Burst{*device, {}, rec.ts, rec.ts});
    }
    Burst& b = bursts.back();
    b.records.push_back(rec);
    b.end_ts = rec.ts;
  }

  std::vector<Burst> out;
  for (auto& [device, bursts] : per_device)
    for (auto& b : bursts) out.push_back(std::move(b));
  std::stable_sort(out.begin(), out.end(), [](const Burst& a, const Burst& b) {
    if (a.start_ts != b.start_ts) return a.start_ts < b.start_ts;
    return a.device_id < b.device_id;
  });
  return out;
}

FeatureVector featurize(const Burst& burst) {
  if (burst.records.empty())
    fail(ErrorCode::kEmptyInput, "cannot featurize an empty burst");

  FeatureVector fv{};
  const auto& recs = burst.records;
  const double n = double(recs.size());

  double total = 0.0;
  for (const auto& r : recs) total += double(r.length);
  const double mean = total / n;
  double var = 0.0;
  for (const auto& r : recs) {
    const double d = double(r.length) - mean;
    var += d * d;
  }
  var /= n;

  std::size_t out_count = 0;
  for (const auto& r : recs) {
    if (r.tcp_flags & tcp_flag::kSyn) fv[feature::kSynCount] += 1.0;
    if (r.tcp_flags & tcp_flag::kAck) fv[feature::kAckCount] += 1.0;
    if (r.tcp_flags & tcp_flag::kFin) fv[feature::kFinCount] += 1.0;
    if (r.tcp_flags & tcp_flag::kRst) fv[feature::kRstCount] += 1.0;
    if (outbound(r)) out_count++;
  }

  fv[feature::kSrcPortMode] = port_mode(recs, true);
  fv[feature::kDstPortMode] = port_mode(recs, false);
  fv[feature::kPacketCount] = n;
  fv[feature::kTotalBytes] = total;
  fv[feature::kMeanLength] = mean;
  fv[feature::kLengthVariance] = var;
  fv[feature::kDurationSeconds] = burst.end_ts - burst.start_ts;
  fv[feature::kFractionOutbound] = double(out_count) / n;
  return fv;
}

std::vector<EventSignature> build_signatures(
    const std::vector<std::pair<Burst, std::string>>& labeled_bursts) {
  if (labeled_bursts.empty())
    fail(ErrorCode::kEmptyInput, "no labeled bursts to build signatures from");

  struct Group {
    std::vector<FeatureVector> rows;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (const auto& [burst, event_type] : labeled_bursts)
    groups[{burst.device_id, event_type}].rows.push_back(featurize(burst));

  std::vector<EventSignature> out;
  out.reserve(groups.size());
  for (const auto& [key, group] : groups) {
    EventSignature sig;
    sig.device_id = key.first;
    sig.event_type = key.second;
    sig.sample_count = group.rows.size();

    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      double sum = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (const auto& row : group.rows) {
        sum += row[i];
        lo = std::min(lo, row[i]);
        hi = std::max(hi, row[i]);
      }
      sig.centroid[i] = sum / double(group.rows.size());
      double floor_tol = kRelativeFloorTolerance * std::abs(sig.centroid[i]);
      if (is_count_feature(i))
        floor_tol = std::max(floor_tol, kCountFloorTolerance);
      sig.tolerance[i] = std::max((hi - lo) / 2.0, floor_tol);
    }
    out.push_back(std::move(sig));
  }
  return out;
}

std::optional<MatchResult> match_signature(
    const FeatureVector& fv, const std::vector<EventSignature>& signatures,
    const std::string& device_id) {
  std::optional<MatchResult> best;
  for (const auto& sig : signatures) {
    if (sig.device_id != device_id) continue;

    bool inside = true;
    double deviation_sum = 0.0;
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      const double d = std::abs(fv[i] - sig.centroid[i]);
      if (d > sig.tolerance[i]) {
        inside = false;
        break;
      }
      if (sig.tolerance[i] > 0.0) deviation_sum += d / sig.tolerance[i];
    }
    if (!inside) continue;

    const double deviation = deviation_sum / double(kFeatureDim);
    if (!best || deviation < best->normalized_deviation ||
        (deviation == best->normalized_deviation &&
         sig.event_type < best->event_type)) {
      best = MatchResult{sig.event_type, deviation};
    }
  }
  return best;
}

void DeviceLog::append(const EventRecord& ev) {
  auto& log = logs_[ev.device_id];
  if (!log.empty() && ev.ts < log.back().ts)
    fail(ErrorCode::kOutOfOrder,
         "event at ts " + std::to_string(ev.ts) + " precedes log tail " +
             std::to_string(log.back().ts) + " for device " + ev.device_id);
  log.push_back(ev);
}

const std::vector<EventRecord>& DeviceLog::entries(
    const std::string& device_id) const {
  static const std::vector<EventRecord> kEmpty;
  auto it = logs_.find(device_id);
  return it == logs_.end() ? kEmpty : it->second;
}

std::vector<std::string> DeviceLog::devices() const {
  std::vector<std::string> out;
  out.reserve(logs_.size());
  for (const auto& [id, _] : logs_) out.push_back(id);
  return out;
}

void write_signatures(const std::string& path,
                      const std::vector<EventSignature>& signatures) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  out << R"({"format":"iotad-signatures","version":1})" << '\n';
  for (const auto& sig : signatures) {
    nlohmann::ordered_json obj;
    obj["device"] = sig.device_id;
    obj["event"] = sig.event_type;
    obj["centroid"] = sig.centroid;
    obj["tolerance"] = sig.tolerance;
    obj["samples"] = sig.sample_count;
    out << obj.dump() << '\n';
  }
}

std::vector<EventSignature> read_signatures(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);

  std::string line;
  std::size_t line_no = 0;
  std::vector<EventSignature> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::kParseError,
           "bad JSON on line " + std::to_string(line_no) + " of " + path);
    }
    if (line_no == 1) {
      if (obj.value("format", "") != "iotad-signatures" ||
          obj.value("version", 0) != 1)
        fail(ErrorCode::kParseError,
             "unrecognized signature database header in " + path);
      continue;
    }
    EventSignature sig;
    sig.device_id = obj.at("device").get<std::string>();
    sig.event_type = obj.at("event").get<std::string>();
    const auto centroid = obj.at("centroid").get<std::vector<double>>();
    const auto tolerance = obj.at("tolerance").get<std::vector<double>>();
    if (centroid.size() != kFeatureDim || tolerance.size() != kFeatureDim)
      fail(ErrorCode::kDimensionMismatch,
           "signature on line " + std::to_string(line_no) + " has dimension " +
               std::to_string(centroid.size()) + ", expected " +
               std::to_string(kFeatureDim));
    std::copy(centroid.begin(), centroid.end(), sig.centroid.begin());
    std::copy(tolerance.begin(), tolerance.end(), sig.tolerance.begin());
    sig.sample_count = obj.at("samples").get<std::size_t>();
    out.push_back(std::move(sig));
  }
  return out;
}

void write_device_log(const std::string& path, const DeviceLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  for (const auto& device : log.devices()) {
    for (const auto& ev : log.entries(device)) {
      char ts_buf[32];
      auto [p, ec] = std::to_chars(ts_buf, ts_buf + sizeof(ts_buf), ev.ts);
      out << "key=" << ev.key << " device=" << ev.device_id
          << " event=" << ev.event_type << " ts="
          << std::string_view(ts_buf, std::size_t(p - ts_buf)) << '\n';
    }
  }
}

}  // namespace iotad
