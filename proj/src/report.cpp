#include "iotad/report.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iotad/error.hpp"
#include "iotad/rng.hpp"

namespace iotad {

TimingSummary summarize_timing(std::vector<double> samples_ms) {
  TimingSummary out;
  out.samples = samples_ms.size();
  if (samples_ms.size() < kMinSamples) return out;
  double sum = 0.0;
  for (double v : samples_ms) sum += v;
  out.mean_ms = sum / double(samples_ms.size());
  std::sort(samples_ms.begin(), samples_ms.end());
  const std::size_t rank =
      std::size_t(std::ceil(0.95 * double(samples_ms.size())));
  out.p95_ms = samples_ms[std::min(rank, samples_ms.size()) - 1];
  return out;
}

namespace {

double read_vm_hwm_mb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      double kb = 0.0;
      fields >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

double read_cpu_seconds() {
  std::ifstream in("/proc/self/stat");
  std::string token;
  // utime and stime are fields 14 and 15.
  for (int i = 0; i < 13; ++i) in >> token;
  long utime = 0, stime = 0;
  in >> utime >> stime;
  const long hz = sysconf(_SC_CLK_TCK);
  return double(utime + stime) / double(hz > 0 ? hz : 100);
}

}  // namespace

ResourceSampler::ResourceSampler()
    : cpu_seconds_begin_(read_cpu_seconds()),
      wall_begin_(std::chrono::steady_clock::now()) {
  thread_ = std::thread([this] { loop(); });
}

ResourceSampler::~ResourceSampler() { stop(); }

void ResourceSampler::loop() {
  while (running_.load(std::memory_order_relaxed)) {
    peak_memory_mb_ = std::max(peak_memory_mb_, read_vm_hwm_mb());
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

void ResourceSampler::stop() {
  if (!running_.exchange(false)) return;
  if (thread_.joinable()) thread_.join();
  peak_memory_mb_ = std::max(peak_memory_mb_, read_vm_hwm_mb());
  const double wall = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - wall_begin_)
                          .count();
  const double cpu = read_cpu_seconds() - cpu_seconds_begin_;
  mean_cpu_percent_ = wall > 0.0 ? 100.0 * cpu / wall : 0.0;
}

double ResourceSampler::peak_memory_mb() const { return peak_memory_mb_; }
double ResourceSampler::mean_cpu_percent() const { return mean_cpu_percent_; }

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= std::uint8_t(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char out[17];
  snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

namespace {

nlohmann::ordered_json metrics_to_json(const EvalMetrics& m) {
  nlohmann::ordered_json obj;
  obj["accuracy"] = m.accuracy;
  obj["precision"] = m.precision;
  obj["recall"] = m.recall;
  obj["f1"] = m.f1;
  obj["tp"] = m.tp;
  obj["fp"] = m.fp;
  obj["tn"] = m.tn;
  obj["fn"] = m.fn;
  obj["mean_inference_ms"] = m.mean_inference_ms;
  obj["p95_inference_ms"] = m.p95_inference_ms;
  return obj;
}

nlohmann::ordered_json timing_to_json(const TimingSummary& t) {
  nlohmann::ordered_json obj;
  obj["samples"] = t.samples;
  obj["mean_ms"] = t.mean_ms ? nlohmann::ordered_json(*t.mean_ms)
                             : nlohmann::ordered_json();
  obj["p95_ms"] =
      t.p95_ms ? nlohmann::ordered_json(*t.p95_ms) : nlohmann::ordered_json();
  return obj;
}

}  // namespace

std::string run_report_json(const RunReport& report) {
  nlohmann::ordered_json obj;
  obj["schema"] = 1;
  obj["command"] = report.command;
  nlohmann::ordered_json digests;
  for (const auto& [name, digest] : report.input_digests)
    digests[name] = digest;
  obj["input_digests"] = digests;
  if (report.metrics) obj["metrics"] = metrics_to_json(*report.metrics);
  obj["timing"] = {{"event_inference", timing_to_json(report.event_inference)},
                   {"validate_plan", timing_to_json(report.validate_plan)}};
  nlohmann::ordered_json resources;
  resources["peak_memory_mb"] = report.peak_memory_mb
                                    ? nlohmann::ordered_json(*report.peak_memory_mb)
                                    : nlohmann::ordered_json();
  resources["mean_cpu_percent"] =
      report.mean_cpu_percent ? nlohmann::ordered_json(*report.mean_cpu_percent)
                              : nlohmann::ordered_json();
  obj["resources"] = resources;
  nlohmann::ordered_json rollbacks = nlohmann::ordered_json::array();
  for (const auto& r : report.rollbacks)
    rollbacks.push_back(nlohmann::ordered_json::parse(rollback_report_json(r)));
  obj["rollbacks"] = rollbacks;
  nlohmann::ordered_json counters;
  for (const auto& [name, value] : report.counters) counters[name] = value;
  obj["counters"] = counters;
  return obj.dump(2);
}

void write_run_report(const std::string& path, const RunReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  out << run_report_json(report) << '\n';
}

}  // namespace iotad
