#include <algorithm>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "costvol/cli.hpp"
#include "costvol/io_formats.hpp"
#include "costvol/parallel.hpp"

namespace costvol::cli {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_counts(const pipeline::VolumeCounts& a, const pipeline::VolumeCounts& b) {
  return a.correlation == b.correlation && a.concat == b.concat && a.filtered == b.filtered &&
         a.peak_live == b.peak_live;
}

std::string resolution(const BenchCase& c) { return std::to_string(c.width) + "x" + std::to_string(c.height); }

std::string mode_label(const BenchCase& c) { return std::string(pipeline::to_string(c.mode)); }

}  // namespace

BenchRow bench_case(const BenchCase& c, const BenchOptions& opt) {
  pipeline::PipelineConfig cfg = opt.base;
  cfg.mode = c.mode;
  cfg.d_max = c.d_max;
  cfg.k = c.k > 0 ? c.k : cfg.k;
  cfg.validate();

  const int disparity = std::min(c.d_max / 8, (c.width - 1) / 4);
  const io::Stereogram sg = io::generate_stereogram(io::StereogramSpec::constant(c.height, c.width, disparity, opt.seed));

  std::optional<ThreadLimit> limit;
  if (c.threads > 0) limit.emplace(c.threads);

  for (int i = 0; i < opt.warmup; ++i) pipeline::run_pipeline(sg.left, sg.right, cfg);

  BenchRow row;
  row.bench = c;
  row.bench.k = c.mode == pipeline::Mode::fast_acv ? cfg.effective_k() : 0;
  row.bench.threads = max_threads();
  row.runs = opt.runs;
  row.analytic = pipeline::analytic_volume_counts(cfg, c.height, c.width);
  std::vector<double> feature, construction, aggregation, prediction;
  for (int i = 0; i < opt.runs; ++i) {
    const pipeline::PipelineOutput out = pipeline::run_pipeline(sg.left, sg.right, cfg);
    if (i == 0) {
      row.measured = out.volumes;
    } else if (!same_counts(row.measured, out.volumes)) {
      throw std::runtime_error("bench: volume counts changed between runs");
    }
    feature.push_back(out.times.feature_ms);
    construction.push_back(out.times.construction_ms);
    aggregation.push_back(out.times.aggregation_ms);
    prediction.push_back(out.times.prediction_ms);
  }
  row.median = {median(feature), median(construction), median(aggregation), median(prediction)};
  return row;
}

BenchResult run_bench(const BenchOptions& opt) {
  BenchResult result;
  const bool want_acv = std::find(opt.modes.begin(), opt.modes.end(), pipeline::Mode::acv) != opt.modes.end();
  const bool want_fast = std::find(opt.modes.begin(), opt.modes.end(), pipeline::Mode::fast_acv) != opt.modes.end();

  for (const auto& [h, w] : opt.resolutions) {
    for (int d : opt.d_values) {
      for (int threads : opt.threads) {
        std::optional<std::size_t> acv_index;
        if (want_acv) {
          result.rows.push_back(bench_case({pipeline::Mode::acv, d, 0, h, w, threads}, opt));
          acv_index = result.rows.size() - 1;
        }
        if (!want_fast) continue;
        for (int k : opt.k_values) {
          result.rows.push_back(bench_case({pipeline::Mode::fast_acv, d, k, h, w, threads}, opt));
          if (!acv_index) continue;
          const BenchRow& a = result.rows[*acv_index];
          const BenchRow& f = result.rows.back();
          BenchRatio r;
          r.fast = f.bench;
          r.correlation_measured = static_cast<double>(f.measured.correlation) / static_cast<double>(a.measured.correlation);
          r.correlation_analytic = static_cast<double>(f.analytic.correlation) / static_cast<double>(a.analytic.correlation);
          r.concat_measured = static_cast<double>(f.measured.concat) / static_cast<double>(a.measured.concat);
          r.concat_analytic = static_cast<double>(f.analytic.concat) / static_cast<double>(a.analytic.concat);
          r.time_ratio = f.construction_aggregation_ms() / a.construction_aggregation_ms();
          r.peak_ratio = static_cast<double>(f.measured.peak_live) / static_cast<double>(a.measured.peak_live);
          result.ratios.push_back(r);
        }
      }
    }
  }
  return result;
}

nlohmann::json BenchResult::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"mode", mode_label(r.bench)},
                         {"dmax", r.bench.d_max},
                         {"k", r.bench.k},
                         {"height", r.bench.height},
                         {"width", r.bench.width},
                         {"threads", r.bench.threads},
                         {"runs", r.runs},
                         {"median_ms",
                          {{"feature", r.median.feature_ms},
                           {"construction", r.median.construction_ms},
                           {"aggregation", r.median.aggregation_ms},
                           {"prediction", r.median.prediction_ms},
                           {"total", r.median.total_ms()}}},
                         {"elements",
                          {{"correlation", r.measured.correlation},
                           {"concat", r.measured.concat},
                           {"filtered", r.measured.filtered},
                           {"peak_live", r.measured.peak_live}}},
                         {"analytic_elements",
                          {{"correlation", r.analytic.correlation},
                           {"concat", r.analytic.concat},
                           {"filtered", r.analytic.filtered}}}});
  }
  nlohmann::json ratios_json = nlohmann::json::array();
  for (const auto& r : ratios) {
    ratios_json.push_back({{"dmax", r.fast.d_max},
                           {"k", r.fast.k},
                           {"height", r.fast.height},
                           {"width", r.fast.width},
                           {"threads", r.fast.threads},
                           {"correlation_measured", r.correlation_measured},
                           {"correlation_analytic", r.correlation_analytic},
                           {"concat_measured", r.concat_measured},
                           {"concat_analytic", r.concat_analytic},
                           {"construction_aggregation_time", r.time_ratio},
                           {"peak_live", r.peak_ratio},
                           {"counts_exact", r.counts_exact()}});
  }
  return {{"rows", rows_json}, {"ratios", ratios_json}};
}

void BenchResult::print(std::ostream& os) const {
  os << std::left << std::setw(9) << "mode" << std::right << std::setw(5) << "D" << std::setw(4) << "K" << std::setw(10)
     << "size" << std::setw(4) << "thr" << std::setw(10) << "feat_ms" << std::setw(10) << "build_ms" << std::setw(10)
     << "aggr_ms" << std::setw(10) << "pred_ms" << std::setw(13) << "corr_elems" << std::setw(14) << "concat_elems"
     << std::setw(13) << "peak_elems" << "\n";
  os << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    os << std::left << std::setw(9) << mode_label(r.bench) << std::right << std::setw(5) << r.bench.d_max << std::setw(4);
    if (r.bench.k > 0) {
      os << r.bench.k;
    } else {
      os << "-";
    }
    os << std::setw(10) << resolution(r.bench) << std::setw(4) << r.bench.threads << std::setw(10) << r.median.feature_ms
       << std::setw(10) << r.median.construction_ms << std::setw(10) << r.median.aggregation_ms << std::setw(10)
       << r.median.prediction_ms << std::setw(13) << r.measured.correlation << std::setw(14) << r.measured.concat
       << std::setw(13) << r.measured.peak_live << "\n";
  }
  os << std::defaultfloat << std::setprecision(17);
  for (const auto& r : ratios) {
    os << "ratio fast/acv D=" << r.fast.d_max << " K=" << r.fast.k << " " << resolution(r.fast) << " threads="
       << r.fast.threads << ": correlation " << r.correlation_measured << " (analytic " << r.correlation_analytic
       << "), concat " << r.concat_measured << " (analytic " << r.concat_analytic << "), counts "
       << (r.counts_exact() ? "exact" : "MISMATCH") << std::setprecision(3) << ", time " << r.time_ratio << ", peak "
       << r.peak_ratio << std::setprecision(17) << "\n";
  }
  os << std::defaultfloat << std::setprecision(6);
}

}  // namespace costvol::cli
