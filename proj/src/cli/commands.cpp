#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <optional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "costvol/cli.hpp"
#include "costvol/io_formats.hpp"
#include "costvol/metrics.hpp"
#include "costvol/parallel.hpp"
#include "costvol/testing/selftest.hpp"

namespace costvol::cli {
namespace {

using pipeline::PipelineConfig;

struct PipelineFlags {
  std::string mode = "fast_acv";
  int dmax = 192;
  int k = 24;
  float alpha = 1.0f;
  float beta = -1.0f;
  int radius = 1;
  std::string regularizer = "identity";
  int box_radius = 1;
  std::string features = "census";
  int census_window = 5;
  float logit_scale = 64.0f;
  float hypothesis_scale = 1.0f;
  int top = 2;
};

void add_model_flags(CLI::App* sub, PipelineFlags& f) {
  sub->add_option("--alpha", f.alpha, "Confidence offset")->capture_default_str();
  sub->add_option("--beta", f.beta, "Confidence slope on the variance")->capture_default_str();
  sub->add_option("--radius", f.radius, "Cross sampling radius")->capture_default_str();
  sub->add_option("--regularizer", f.regularizer, "Volume regularizer")
      ->check(CLI::IsMember({"identity", "box3d"}))
      ->capture_default_str();
  sub->add_option("--box-radius", f.box_radius, "Radius of the box3d regularizer")->capture_default_str();
  sub->add_option("--features", f.features, "Feature backend")
      ->check(CLI::IsMember({"census", "gradient"}))
      ->capture_default_str();
  sub->add_option("--census-window", f.census_window, "Census window side")->capture_default_str();
  sub->add_option("--logit-scale", f.logit_scale, "Multiplier applied to costs before each softmax")
      ->capture_default_str();
  sub->add_option("--hypothesis-scale", f.hypothesis_scale, "Multiplier on the coarse fast_acv costs")
      ->capture_default_str();
  sub->add_option("--top", f.top, "Values kept by the final fast prediction")->capture_default_str();
}

PipelineConfig to_config(const PipelineFlags& f) {
  PipelineConfig cfg;
  cfg.mode = pipeline::parse_mode(f.mode);
  cfg.d_max = f.dmax;
  cfg.k = f.k;
  cfg.vap.alpha = f.alpha;
  cfg.vap.beta = f.beta;
  cfg.vap.radius = f.radius;
  cfg.regularizer = pipeline::parse_regularizer(f.regularizer);
  cfg.box_radius = f.box_radius;
  cfg.feature_backend = pipeline::parse_feature_backend(f.features);
  cfg.census_window = f.census_window;
  cfg.logit_scale = f.logit_scale;
  cfg.hypothesis_logit_scale = f.hypothesis_scale;
  cfg.top = f.top;
  return cfg;
}

void add_config_file(CLI::App* sub) {
  // Expanded before parsing by expand_config; declared so --help lists it.
  sub->add_option("--config", "key=value file mirroring flag names; flags override it");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  return false;
}

// Replaces `--config FILE` with the file's settings, placed right after the
// subcommand so that explicit flags still win.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (path.empty()) return args;

  std::size_t sub_pos = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size() && !sub; ++i) {
    sub = app.get_subcommand_no_throw(args[i]);
    sub_pos = i;
  }
  if (!sub) throw UsageError("--config given without a subcommand");

  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::string> injected;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt || key == "config") throw UsageError(path + ": unknown key '" + key + "'");
    if (given_on_command_line(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") injected.push_back(flag);
    } else {
      injected.push_back(flag);
      injected.push_back(value);
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, injected.begin(), injected.end());
  return args;
}

GrayImage load_image(const std::string& path) {
  try {
    return io::read_gray_image(io::read_file(path));
  } catch (const std::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

io::MaskedDisparity load_disparity(const std::string& path) {
  try {
    return io::read_disparity(io::read_file(path));
  } catch (const std::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::string format_fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------- match --

struct MatchArgs {
  std::string left, right, output = "disparity.pfm", format = "pfm";
  PipelineFlags flags;
  int threads = 0;
  bool json = false;
  std::uint64_t seed = 0;
};

int cmd_match(const MatchArgs& a, std::ostream& out) {
  PipelineConfig cfg = to_config(a.flags);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const GrayImage left = load_image(a.left);
  const GrayImage right = load_image(a.right);
  if (left.height != right.height || left.width != right.width) throw UsageError("image size mismatch");
  if (left.height % 8 != 0 || left.width % 8 != 0)
    throw UsageError("image dimensions must be divisible by 8, got " + std::to_string(left.width) + "x" +
                     std::to_string(left.height));

  std::optional<ThreadLimit> limit;
  if (a.threads > 0) limit.emplace(a.threads);
  const pipeline::PipelineOutput result = pipeline::run_pipeline(left, right, cfg);

  const io::Bytes bytes = a.format == "kitti"
                              ? io::write_kitti_disp_png(result.disparity, EvalMask(left.height, left.width))
                              : io::write_pfm(result.disparity);
  io::write_file(a.output, bytes);

  RunReport report;
  report.config = cfg;
  report.height = left.height;
  report.width = left.width;
  report.threads = max_threads();
  report.times = result.times;
  report.measured = result.volumes;
  report.analytic = pipeline::analytic_volume_counts(cfg, left.height, left.width);
  if (a.json) {
    nlohmann::json j = report.to_json();
    j["output"] = a.output;
    j["format"] = a.format;
    out << j.dump(2) << "\n";
  } else {
    out << "wrote " << a.output << " (" << a.format << ")\n";
    report.print(out);
  }
  return kOk;
}

// ----------------------------------------------------------------- eval --

struct EvalArgs {
  std::string pred, gt, mask;
  bool json = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const io::MaskedDisparity pred = load_disparity(a.pred);
  const io::MaskedDisparity gt = load_disparity(a.gt);
  if (pred.disparity.height != gt.disparity.height || pred.disparity.width != gt.disparity.width)
    throw UsageError("shape mismatch between prediction and ground truth");
  EvalMask mask = gt.mask;
  if (!a.mask.empty()) {
    EvalMask extra;
    try {
      extra = io::read_mask(io::read_file(a.mask));
    } catch (const std::exception& e) {
      throw UsageError(a.mask + ": " + e.what());
    }
    if (extra.height != mask.height || extra.width != mask.width) throw UsageError("shape mismatch with mask");
    for (std::size_t i = 0; i < mask.valid.size(); ++i) mask.valid[i] = mask.valid[i] && extra.valid[i];
  }
  if (mask.count() == 0) throw UsageError("no valid ground-truth pixels");

  const auto& p = pred.disparity;
  const auto& g = gt.disparity;
  const double epe = metrics::epe(p, g, mask);
  const double d1 = metrics::d1(p, g, mask);
  const double bad[3] = {metrics::bad_x(p, g, mask, 1), metrics::bad_x(p, g, mask, 2), metrics::bad_x(p, g, mask, 3)};
  if (a.json) {
    nlohmann::json j{{"epe", epe}, {"d1", d1}, {"bad1", bad[0]}, {"bad2", bad[1]}, {"bad3", bad[2]},
                     {"valid_pixels", mask.count()}};
    out << j.dump(2) << "\n";
  } else {
    out << "EPE    " << format_fixed(epe, 2) << "\n";
    out << "D1     " << format_fixed(d1, 2) << "\n";
    for (int i = 0; i < 3; ++i) out << "bad-" << i + 1 << "  " << format_fixed(bad[i], 2) << "\n";
    out << "valid  " << mask.count() << "\n";
  }
  return kOk;
}

// ----------------------------------------------------------- stereogram --

struct StereogramArgs {
  std::string out_dir = ".";
  int height = 128, width = 256, disparity = 8;
  int right_disparity = -1, boundary = -1;
  std::uint64_t seed = 1;
};

int cmd_stereogram(const StereogramArgs& a, std::ostream& out) {
  io::StereogramSpec spec;
  try {
    spec = a.right_disparity >= 0
               ? io::StereogramSpec::two_region(a.height, a.width, a.disparity, a.right_disparity,
                                                a.boundary >= 0 ? a.boundary : a.width / 2, a.seed)
               : io::StereogramSpec::constant(a.height, a.width, a.disparity, a.seed);
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const io::Stereogram sg = io::generate_stereogram(spec);
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);
  GrayImage mask(sg.mask.height, sg.mask.width);
  for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = sg.mask.valid[i] ? 1.0f : 0.0f;
  io::write_file(dir / "left.pgm", io::write_pgm(sg.left));
  io::write_file(dir / "right.pgm", io::write_pgm(sg.right));
  io::write_file(dir / "gt.pfm", io::write_pfm(sg.gt));
  io::write_file(dir / "mask.pgm", io::write_pgm(mask));
  out << "wrote left.pgm right.pgm gt.pfm mask.pgm to " << dir.string() << "\n";
  return kOk;
}

// ------------------------------------------------------------- selftest --

int cmd_selftest(int trials, std::uint64_t seed, std::ostream& out) {
  const testing::SelftestSummary summary = testing::run_selftest(trials, seed);
  testing::print_selftest(out, summary);
  return summary.ok() ? kOk : kFailure;
}

std::vector<std::pair<int, int>> parse_resolutions(const std::vector<std::string>& specs) {
  std::vector<std::pair<int, int>> out;
  for (const auto& s : specs) {
    int w = 0, h = 0;
    char sep = 0;
    std::istringstream is(s);
    if (!(is >> w >> sep >> h) || (sep != 'x' && sep != 'X') || w <= 0 || h <= 0 || !is.eof())
      throw UsageError("resolution must look like WIDTHxHEIGHT: " + s);
    out.emplace_back(h, w);
  }
  return out;
}

}  // namespace

nlohmann::json config_to_json(const PipelineConfig& cfg) {
  return {{"mode", pipeline::to_string(cfg.mode)},
          {"dmax", cfg.d_max},
          {"k", cfg.effective_k()},
          {"alpha", cfg.vap.alpha},
          {"beta", cfg.vap.beta},
          {"radius", cfg.vap.radius},
          {"regularizer", pipeline::to_string(cfg.regularizer)},
          {"box_radius", cfg.box_radius},
          {"features", pipeline::to_string(cfg.feature_backend)},
          {"census_window", cfg.census_window},
          {"logit_scale", cfg.logit_scale},
          {"hypothesis_scale", cfg.hypothesis_logit_scale},
          {"top", cfg.top}};
}

bool RunReport::counts_match() const {
  return measured.correlation == analytic.correlation && measured.concat == analytic.concat &&
         measured.filtered == analytic.filtered;
}

nlohmann::json RunReport::to_json() const {
  auto counts = [](const pipeline::VolumeCounts& c) {
    return nlohmann::json{{"correlation", c.correlation}, {"concat", c.concat}, {"filtered", c.filtered}};
  };
  nlohmann::json measured_json = counts(measured);
  measured_json["peak_live"] = measured.peak_live;
  return {{"config", config_to_json(config)},
          {"height", height},
          {"width", width},
          {"threads", threads},
          {"times_ms",
           {{"feature", times.feature_ms},
            {"construction", times.construction_ms},
            {"aggregation", times.aggregation_ms},
            {"prediction", times.prediction_ms},
            {"total", times.total_ms()}}},
          {"volume_elements", {{"measured", measured_json}, {"analytic", counts(analytic)}}},
          {"counts_match", counts_match()}};
}

void RunReport::print(std::ostream& os) const {
  const auto cfg = config_to_json(config);
  os << "config";
  for (const auto& [key, value] : cfg.items()) os << " " << key << "=" << (value.is_string() ? value.get<std::string>() : value.dump());
  os << "\nimage " << width << "x" << height << ", threads " << threads << "\n";
  os << "stage times (ms)\n";
  os << "  feature       " << format_fixed(times.feature_ms, 2) << "\n";
  os << "  construction  " << format_fixed(times.construction_ms, 2) << "\n";
  os << "  aggregation   " << format_fixed(times.aggregation_ms, 2) << "\n";
  os << "  prediction    " << format_fixed(times.prediction_ms, 2) << "\n";
  os << "  total         " << format_fixed(times.total_ms(), 2) << "\n";
  os << "volume elements     measured      analytic\n";
  auto row = [&](const char* name, std::size_t m, std::size_t a) {
    os << "  " << std::left << std::setw(14) << name << std::right << std::setw(12) << m << "  " << std::setw(12) << a
       << "\n";
  };
  row("correlation", measured.correlation, analytic.correlation);
  row("concat", measured.concat, analytic.concat);
  row("filtered", measured.filtered, analytic.filtered);
  os << "  " << std::left << std::setw(14) << "peak live" << std::right << std::setw(12) << measured.peak_live << "\n";
  os << "counts match analytic: " << (counts_match() ? "yes" : "no") << "\n";
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention concatenation cost volumes for stereo matching"};
  app.name("stereo-costvol");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  MatchArgs match;
  auto* m = app.add_subcommand("match", "Compute a disparity map for a rectified pair");
  m->add_option("left", match.left, "Left image (PGM or PNG)")->required();
  m->add_option("right", match.right, "Right image (PGM or PNG)")->required();
  m->add_option("-o,--output", match.output, "Output disparity file")->capture_default_str();
  m->add_option("--format", match.format, "Output format")->check(CLI::IsMember({"pfm", "kitti"}))->capture_default_str();
  m->add_option("--mode", match.flags.mode, "Pipeline")->check(CLI::IsMember({"acv", "fast_acv"}))->capture_default_str();
  m->add_option("--dmax", match.flags.dmax, "Full-resolution disparity count")->capture_default_str();
  m->add_option("--k", match.flags.k, "Hypotheses kept per pixel (fast_acv)")->capture_default_str();
  add_model_flags(m, match.flags);
  m->add_option("--threads", match.threads, "Thread cap (0: STEREO_COSTVOL_THREADS or all cores)");
  m->add_flag("--json", match.json, "Print the run report as JSON");
  m->add_option("--seed", match.seed, "Accepted for uniformity; matching is deterministic");
  add_config_file(m);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score a disparity map against ground truth");
  e->add_option("pred", eval.pred, "Predicted disparity (PFM or KITTI PNG)")->required();
  e->add_option("gt", eval.gt, "Ground-truth disparity (PFM or KITTI PNG)")->required();
  e->add_option("--mask", eval.mask, "Optional mask image, non-zero = evaluated");
  e->add_flag("--json", eval.json, "Machine-readable output");
  add_config_file(e);

  PipelineFlags bench_flags;
  BenchOptions bench;
  std::vector<std::string> bench_modes{"acv", "fast_acv"}, bench_res{"960x512"};
  bool bench_json = false;
  auto* b = app.add_subcommand("bench", "Time and size sweep over modes, D, K and resolution");
  b->add_option("--mode", bench_modes, "Modes to run")
      ->delimiter(',')
      ->check(CLI::IsMember({"acv", "fast_acv"}))
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  b->add_option("--dmax", bench.d_values, "Disparity counts")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  b->add_option("--k", bench.k_values, "Hypothesis counts")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  b->add_option("--resolution", bench_res, "Image sizes as WIDTHxHEIGHT")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  b->add_option("--threads", bench.threads, "Thread caps to sweep")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  b->add_option("--runs", bench.runs, "Timed runs per point (median reported)")->capture_default_str();
  b->add_option("--warmup", bench.warmup, "Untimed warmup runs")->capture_default_str();
  b->add_option("--seed", bench.seed, "Stereogram seed")->capture_default_str();
  b->add_flag("--json", bench_json, "Machine-readable output");
  add_model_flags(b, bench_flags);
  add_config_file(b);

  StereogramArgs sg;
  auto* s = app.add_subcommand("stereogram", "Write a seeded random-dot stereo pair with ground truth");
  s->add_option("-o,--out-dir", sg.out_dir, "Output directory")->capture_default_str();
  s->add_option("--height", sg.height)->capture_default_str();
  s->add_option("--width", sg.width)->capture_default_str();
  s->add_option("--disparity", sg.disparity, "Disparity (left region when two-region)")->capture_default_str();
  s->add_option("--right-disparity", sg.right_disparity, "Disparity right of the boundary");
  s->add_option("--boundary", sg.boundary, "First column of the right region (default width/2)");
  s->add_option("--seed", sg.seed)->capture_default_str();

  int st_trials = 20;
  std::uint64_t st_seed = 20240611;
  auto* t = app.add_subcommand("selftest", "Check every operation against its reference implementation");
  t->add_option("--trials", st_trials, "Random instances per operation")->capture_default_str();
  t->add_option("--seed", st_seed)->capture_default_str();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const UsageError& ue) {
    err << "error: " << ue.what() << "\n";
    return kUsage;
  }

  try {
    if (m->parsed()) return cmd_match(match, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (s->parsed()) return cmd_stereogram(sg, out);
    if (t->parsed()) return cmd_selftest(st_trials, st_seed, out);
    if (b->parsed()) {
      bench.base = to_config(bench_flags);
      bench.modes.clear();
      for (const auto& mode : bench_modes) bench.modes.push_back(pipeline::parse_mode(mode));
      bench.resolutions = parse_resolutions(bench_res);
      if (bench.runs < 1 || bench.warmup < 0) throw UsageError("--runs must be >= 1 and --warmup >= 0");
      const BenchResult result = run_bench(bench);
      if (bench_json) {
        out << result.to_json().dump(2) << "\n";
      } else {
        result.print(out);
      }
      for (const auto& r : result.ratios)
        if (!r.counts_exact()) return kFailure;
      return kOk;
    }
  } catch (const UsageError& ue) {
    err << "error: " << ue.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& ia) {
    err << "error: " << ia.what() << "\n";
    return kUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace costvol::cli
