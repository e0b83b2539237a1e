#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "iotad/models.hpp"
#include "iotad/rollback.hpp"

namespace iotad {

// Mean/p95 over a sample set; means are only reported when backed by at
// least kMinSamples samples.
struct TimingSummary {
  std::size_t samples = 0;
  std::optional<double> mean_ms;
  std::optional<double> p95_ms;
};

inline constexpr std::size_t kMinSamples = 30;

TimingSummary summarize_timing(std::vector<double> samples_ms);

// Peak RSS and mean CPU of this process, sampled at >= 10 Hz on a background
// thread that only reads process-level counters.
class ResourceSampler {
 public:
  ResourceSampler();
  ~ResourceSampler();

  void stop();
  double peak_memory_mb() const;
  double mean_cpu_percent() const;

 private:
  void loop();

  std::atomic<bool> running_{true};
  std::thread thread_;
  double peak_memory_mb_ = 0.0;
  double mean_cpu_percent_ = 0.0;
  double cpu_seconds_begin_ = 0.0;
  std::chrono::steady_clock::time_point wall_begin_;
};

// FNV-1a over the file bytes, formatted as 16 hex digits.
std::string file_digest(const std::string& path);

struct RunReport {
  std::string command;
  std::vector<std::pair<std::string, std::string>> input_digests;
  std::optional<EvalMetrics> metrics;
  TimingSummary event_inference;
  TimingSummary validate_plan;
  std::optional<double> peak_memory_mb;
  std::optional<double> mean_cpu_percent;
  std::vector<RollbackReport> rollbacks;
  std::vector<std::pair<std::string, std::int64_t>> counters;
};

std::string run_report_json(const RunReport& report);
void write_run_report(const std::string& path, const RunReport& report);

}  // namespace iotad
