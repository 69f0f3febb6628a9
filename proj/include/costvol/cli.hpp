#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "costvol/pipeline.hpp"

namespace costvol::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Raised for bad flags, unreadable inputs and violated preconditions.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunReport {
  pipeline::PipelineConfig config;
  int height = 0;
  int width = 0;
  int threads = 0;
  pipeline::StageTimes times;
  pipeline::VolumeCounts measured;
  pipeline::VolumeCounts analytic;

  bool counts_match() const;
  nlohmann::json to_json() const;
  void print(std::ostream& os) const;
};

nlohmann::json config_to_json(const pipeline::PipelineConfig& cfg);

struct BenchCase {
  pipeline::Mode mode;
  int d_max;
  int k;
  int height;
  int width;
  int threads;
};

struct BenchRow {
  BenchCase bench;
  pipeline::StageTimes median;  // per-stage medians over the timed runs
  pipeline::VolumeCounts measured;
  pipeline::VolumeCounts analytic;
  int runs = 0;

  double construction_aggregation_ms() const { return median.construction_ms + median.aggregation_ms; }
};

/// fast/acv comparison for one (D, K, resolution, threads) point.
struct BenchRatio {
  BenchCase fast;
  double correlation_measured = 0;
  double correlation_analytic = 0;
  double concat_measured = 0;      // compact / full concatenation elements
  double concat_analytic = 0;
  double time_ratio = 0;           // construction + aggregation, fast / acv
  double peak_ratio = 0;

  bool counts_exact() const {
    return correlation_measured == correlation_analytic && concat_measured == concat_analytic;
  }
};

struct BenchOptions {
  std::vector<pipeline::Mode> modes{pipeline::Mode::acv, pipeline::Mode::fast_acv};
  std::vector<int> d_values{192};
  std::vector<int> k_values{24};
  std::vector<std::pair<int, int>> resolutions{{512, 960}};  // (height, width)
  std::vector<int> threads{0};                              // 0: default cap
  int runs = 5;
  int warmup = 1;
  std::uint64_t seed = 1;
  pipeline::PipelineConfig base;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<BenchRatio> ratios;

  nlohmann::json to_json() const;
  void print(std::ostream& os) const;
};

BenchRow bench_case(const BenchCase& c, const BenchOptions& opt);
BenchResult run_bench(const BenchOptions& opt);

/// Entry point of the stereo-costvol tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace costvol::cli
