#include "costvol/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "costvol/parallel.hpp"
#include "costvol/volume_core.hpp"

namespace costvol::pipeline {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

template <class F>
FeatureMap neighbourhood_features(const GrayImage& image, int window, F&& encode) {
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("census window must be odd and >= 3");
  const int r = window / 2, H = image.height, W = image.width;
  FeatureMap out(window * window - 1, H, W);
  int channel = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx == 0 && dy == 0) continue;
      for (int y = 0; y < H; ++y) {
        const int ny = std::clamp(y + dy, 0, H - 1);
        for (int x = 0; x < W; ++x) {
          const int nx = std::clamp(x + dx, 0, W - 1);
          out.at(channel, y, x) = encode(image.at(ny, nx), image.at(y, x));
        }
      }
      ++channel;
    }
  }
  return out;
}

FeatureMap extract(const GrayImage& image, const PipelineConfig& cfg) {
  return cfg.feature_backend == FeatureBackend::census ? census_features(image, cfg.census_window)
                                                       : gradient_features(image, cfg.census_window);
}

// One separable pass of box3d_regularize along `axis` (0 = d, 1 = y, 2 = x).
CostVolume box_pass(const CostVolume& v, int radius, int axis) {
  CostVolume out(v.channels, v.disparities, v.height, v.width, v.resolution_scale);
  const int extent = axis == 0 ? v.disparities : axis == 1 ? v.height : v.width;
  const std::size_t stride = axis == 0 ? v.plane_size() : axis == 1 ? static_cast<std::size_t>(v.width) : 1;
  const double inv = 1.0 / (2 * radius + 1);
  parallel_for(0, v.channels * v.disparities, [&](int lo, int hi) {
    for (int cd = lo; cd < hi; ++cd) {
      const int c = cd / v.disparities, d = cd % v.disparities;
      for (int y = 0; y < v.height; ++y) {
        for (int x = 0; x < v.width; ++x) {
          const int pos = axis == 0 ? d : axis == 1 ? y : x;
          const std::size_t base = v.index(c, d, y, x) - static_cast<std::size_t>(pos) * stride;
          double acc = 0;
          for (int t = -radius; t <= radius; ++t) {
            const int s = std::clamp(pos + t, 0, extent - 1);
            acc += v.data[base + s * stride];
          }
          out.at(c, d, y, x) = static_cast<Real>(acc * inv);
        }
      }
    }
  });
  return out;
}

void check_pair(const GrayImage& left, const GrayImage& right) {
  if (left.height != right.height || left.width != right.width) throw std::invalid_argument("image size mismatch");
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::acv ? "acv" : "fast_acv"; }
std::string_view to_string(FeatureBackend b) { return b == FeatureBackend::census ? "census" : "gradient"; }
std::string_view to_string(RegularizerKind r) { return r == RegularizerKind::identity ? "identity" : "box3d"; }

Mode parse_mode(std::string_view s) {
  if (s == "acv") return Mode::acv;
  if (s == "fast_acv") return Mode::fast_acv;
  throw std::invalid_argument("unknown mode: " + std::string(s));
}

FeatureBackend parse_feature_backend(std::string_view s) {
  if (s == "census") return FeatureBackend::census;
  if (s == "gradient") return FeatureBackend::gradient;
  throw std::invalid_argument("unknown feature backend: " + std::string(s));
}

RegularizerKind parse_regularizer(std::string_view s) {
  if (s == "identity") return RegularizerKind::identity;
  if (s == "box3d") return RegularizerKind::box3d;
  throw std::invalid_argument("unknown regularizer: " + std::string(s));
}

acv::AcvConfig PipelineConfig::acv_config() const {
  acv::AcvConfig c = acv;
  c.d_max = d_max;
  return c;
}

int PipelineConfig::effective_k() const { return std::min(k, d_max / 4); }

void PipelineConfig::validate() const {
  if (d_max <= 0) throw std::invalid_argument("d_max must be positive");
  if (mode == Mode::acv && d_max % 4 != 0) throw std::invalid_argument("d_max must be divisible by 4 in acv mode");
  if (mode == Mode::fast_acv && d_max % 8 != 0)
    throw std::invalid_argument("d_max must be divisible by 8 in fast_acv mode");
  if (mode == Mode::acv) acv_config().validate();
  vap.validate();
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (census_window < 3 || census_window % 2 == 0) throw std::invalid_argument("census window must be odd and >= 3");
  if (box_radius < 0) throw std::invalid_argument("box radius must be >= 0");
  if (acv_channels_per_group < 1 || fast_groups < 1 || fast_channels_per_group < 1)
    throw std::invalid_argument("feature layout counts must be positive");
  if (!(logit_scale > 0) || !std::isfinite(logit_scale)) throw std::invalid_argument("logit scale must be positive");
  if (!(hypothesis_logit_scale > 0) || !std::isfinite(hypothesis_logit_scale))
    throw std::invalid_argument("hypothesis logit scale must be positive");
  if (top < 1 || top > effective_k()) throw std::invalid_argument("top must be in [1, k]");
}

FeatureMap census_features(const GrayImage& image, int window) {
  return neighbourhood_features(image, window, [](Real nb, Real centre) {
    return nb > centre ? Real{1} : nb < centre ? Real{-1} : Real{0};
  });
}

FeatureMap gradient_features(const GrayImage& image, int window) {
  return neighbourhood_features(image, window, [](Real nb, Real centre) { return nb - centre; });
}

GrayImage box_downsample(const GrayImage& image, int factor) {
  if (factor < 1) throw std::invalid_argument("box_downsample: factor must be >= 1");
  const int H = (image.height + factor - 1) / factor, W = (image.width + factor - 1) / factor;
  GrayImage out(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0;
      int n = 0;
      for (int sy = y * factor; sy < std::min(image.height, (y + 1) * factor); ++sy)
        for (int sx = x * factor; sx < std::min(image.width, (x + 1) * factor); ++sx, ++n) acc += image.at(sy, sx);
      out.at(y, x) = static_cast<Real>(acc / n);
    }
  }
  return out;
}

FeatureMap resize_bilinear(const FeatureMap& f, int height, int width) {
  FeatureMap out(f.channels, height, width, f.resolution_scale);
  const double sy = static_cast<double>(f.height) / height, sx = static_cast<double>(f.width) / width;
  for (int y = 0; y < height; ++y) {
    const double py = std::clamp((y + 0.5) * sy - 0.5, 0.0, f.height - 1.0);
    const int y0 = static_cast<int>(py), y1 = std::min(y0 + 1, f.height - 1);
    const double ty = py - y0;
    for (int x = 0; x < width; ++x) {
      const double px = std::clamp((x + 0.5) * sx - 0.5, 0.0, f.width - 1.0);
      const int x0 = static_cast<int>(px), x1 = std::min(x0 + 1, f.width - 1);
      const double tx = px - x0;
      for (int c = 0; c < f.channels; ++c) {
        const double top = (1 - tx) * f.at(c, y0, x0) + tx * f.at(c, y0, x1);
        const double bottom = (1 - tx) * f.at(c, y1, x0) + tx * f.at(c, y1, x1);
        out.at(c, y, x) = static_cast<Real>((1 - ty) * top + ty * bottom);
      }
    }
  }
  return out;
}

FeatureMap tile_channels(const FeatureMap& f, int channels) {
  if (f.channels <= 0) throw std::invalid_argument("tile_channels: empty feature map");
  FeatureMap out(channels, f.height, f.width, f.resolution_scale);
  const std::size_t plane = f.plane_size();
  for (int c = 0; c < channels; ++c) {
    const auto src = f.data.begin() + static_cast<std::ptrdiff_t>((c % f.channels) * plane);
    std::copy(src, src + static_cast<std::ptrdiff_t>(plane), out.data.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  return out;
}

FeaturePyramid build_feature_pyramid(const GrayImage& image, const PipelineConfig& cfg) {
  if (image.height % 8 != 0 || image.width % 8 != 0)
    throw std::invalid_argument("image dimensions must be divisible by 8");
  FeaturePyramid pyr;
  const GrayImage quarter_img = box_downsample(image, 4);
  const FeatureMap base = extract(quarter_img, cfg);
  pyr.quarter = tile_channels(base, cfg.acv.concat_channels);
  pyr.quarter.resolution_scale = 4;

  if (cfg.mode == Mode::acv) {
    const int per_group = cfg.acv_channels_per_group;
    pyr.levels[0] = tile_channels(base, cfg.acv.group_split[0] * per_group);
    for (int k = 1; k < 3; ++k) {
      const FeatureMap coarse = extract(box_downsample(quarter_img, 1 << k), cfg);
      pyr.levels[k] = tile_channels(resize_bilinear(coarse, quarter_img.height, quarter_img.width),
                                    cfg.acv.group_split[k] * per_group);
    }
    for (auto& level : pyr.levels) level.resolution_scale = 4;
  } else {
    pyr.eighth = tile_channels(extract(box_downsample(image, 8), cfg), cfg.fast_groups * cfg.fast_channels_per_group);
    pyr.eighth.resolution_scale = 8;
  }
  return pyr;
}

CostVolume box3d_regularize(const CostVolume& v, int radius) {
  if (radius < 0) throw std::invalid_argument("box3d_regularize: radius must be >= 0");
  if (radius == 0) return v;
  CostVolume a = box_pass(v, radius, 0);
  CostVolume b = box_pass(a, radius, 1);
  a = CostVolume();
  return box_pass(b, radius, 2);
}

std::unique_ptr<acv::VolumeRegularizer> make_regularizer(const PipelineConfig& cfg) {
  if (cfg.regularizer == RegularizerKind::identity) return std::make_unique<acv::IdentityRegularizer>();
  return std::make_unique<Box3dRegularizer>(cfg.box_radius);
}

CostVolume compress_concat_volume(const CostVolume& v) {
  if (v.channels <= 0 || v.channels % 2 != 0)
    throw std::invalid_argument("compress_concat_volume: expected an even, non-zero channel count");
  const int C = v.channels / 2;
  CostVolume out(1, v.disparities, v.height, v.width, v.resolution_scale);
  const std::size_t n = out.data.size();
  parallel_for(0, v.disparities, [&](int d0, int d1) {
    const std::size_t plane = v.plane_size();
    for (int d = d0; d < d1; ++d) {
      for (std::size_t p = d * plane; p < (d + 1) * plane; ++p) {
        double acc = 0;
        for (int i = 0; i < C; ++i)
          acc += static_cast<double>(v.data[i * n + p]) * static_cast<double>(v.data[(C + i) * n + p]);
        out.data[p] = static_cast<Real>(acc / C);
      }
    }
  });
  return out;
}

CostVolume normalize_peak(const CostVolume& v) {
  if (v.channels != 1) throw std::invalid_argument("normalize_peak: expected a single-channel volume");
  CostVolume out = v;
  const std::size_t plane = v.plane_size();
  parallel_for(0, v.height, [&](int y0, int y1) {
    for (std::size_t p = y0 * static_cast<std::size_t>(v.width); p < y1 * static_cast<std::size_t>(v.width); ++p) {
      Real peak = 0;
      for (int d = 0; d < v.disparities; ++d) peak = std::max(peak, std::fabs(v.data[d * plane + p]));
      if (peak == 0) continue;
      for (int d = 0; d < v.disparities; ++d) out.data[d * plane + p] = v.data[d * plane + p] / peak;
    }
  });
  return out;
}

DisparityMap upsample_disparity(const DisparityMap& d, int height, int width) {
  if (d.height <= 0 || d.width <= 0) throw std::invalid_argument("upsample_disparity: empty map");
  if (height % d.height != 0 || width % d.width != 0 || height / d.height != width / d.width)
    throw std::invalid_argument("upsample_disparity: target must be an integer multiple of the source");
  const int factor = height / d.height;
  FeatureMap as_features(1, d.height, d.width);
  as_features.data = d.data;
  const FeatureMap up = resize_bilinear(as_features, height, width);
  DisparityMap out(height, width, std::max(1, d.resolution_scale / factor));
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = up.data[i] * static_cast<Real>(factor);
  return out;
}

VolumeCounts analytic_volume_counts(const PipelineConfig& cfg, int height, int width) {
  const std::size_t qh = height / 4, qw = width / 4;
  const std::size_t concat_channels = 2 * static_cast<std::size_t>(cfg.acv.concat_channels);
  VolumeCounts c;
  if (cfg.mode == Mode::acv) {
    const std::size_t bins = cfg.d_max / 4;
    c.correlation = static_cast<std::size_t>(cfg.acv.n_groups) * bins * qh * qw;
    c.concat = concat_channels * bins * qh * qw;
  } else {
    c.correlation = static_cast<std::size_t>(cfg.fast_groups) * (cfg.d_max / 8) * (height / 8) * (width / 8);
    c.concat = concat_channels * cfg.effective_k() * qh * qw;
  }
  c.filtered = c.concat;
  return c;
}

PipelineOutput run_acv_pipeline(const GrayImage& left, const GrayImage& right, const PipelineConfig& cfg_in) {
  PipelineConfig cfg = cfg_in;
  cfg.mode = Mode::acv;
  cfg.validate();
  check_pair(left, right);
  const acv::AcvConfig acv_cfg = cfg.acv_config();
  const auto regularizer = make_regularizer(cfg);

  PipelineOutput out;
  AllocationScope run_scope;

  auto t = Clock::now();
  const FeaturePyramid pl = build_feature_pyramid(left, cfg);
  const FeaturePyramid pr = build_feature_pyramid(right, cfg);
  out.times.feature_ms = elapsed_ms(t);

  t = Clock::now();
  CostVolume attention;
  {
    CostVolume c_patch;
    {
      AllocationScope scope;
      c_patch = acv::build_mapm_volume({acv::MapmLevelInput{pl.levels[0], pr.levels[0], acv::PatchWeights::uniform(1)},
                                        acv::MapmLevelInput{pl.levels[1], pr.levels[1], acv::PatchWeights::uniform(2)},
                                        acv::MapmLevelInput{pl.levels[2], pr.levels[2], acv::PatchWeights::uniform(3)}},
                                       acv_cfg);
      out.volumes.correlation = scope.retained_elements();
    }
    attention = acv::generate_attention_weights(c_patch, *regularizer);
  }
  CostVolume filtered;
  {
    CostVolume c_concat;
    {
      AllocationScope scope;
      c_concat = build_concat_volume(pl.quarter, pr.quarter, acv_cfg.quarter_disparities());
      out.volumes.concat = scope.retained_elements();
    }
    filtered = acv::attention_filter(attention, c_concat);
    out.volumes.filtered = filtered.element_count();
  }
  out.times.construction_ms = elapsed_ms(t);

  t = Clock::now();
  CostVolume cost = compress_concat_volume(filtered);
  filtered = CostVolume();
  cost = regularizer->apply(cost);
  out.times.aggregation_ms = elapsed_ms(t);

  t = Clock::now();
  const DisparityMap quarter = soft_argmin(softmax_over_disparity(scale_volume(normalize_peak(cost), cfg.logit_scale)));
  out.disparity = upsample_disparity(quarter, left.height, left.width);
  const DisparityMap att = acv::regress_attention_disparity(scale_volume(attention, cfg.logit_scale));
  out.attention_disparity = upsample_disparity(att, left.height, left.width);
  out.times.prediction_ms = elapsed_ms(t);

  out.volumes.peak_live = run_scope.stats().peak_elements;
  return out;
}

PipelineOutput run_fast_acv_pipeline(const GrayImage& left, const GrayImage& right, const PipelineConfig& cfg_in) {
  PipelineConfig cfg = cfg_in;
  cfg.mode = Mode::fast_acv;
  cfg.validate();
  check_pair(left, right);
  const auto regularizer = make_regularizer(cfg);

  PipelineOutput out;
  AllocationScope run_scope;

  auto t = Clock::now();
  const FeaturePyramid pl = build_feature_pyramid(left, cfg);
  const FeaturePyramid pr = build_feature_pyramid(right, cfg);
  out.times.feature_ms = elapsed_ms(t);

  t = Clock::now();
  CostVolume low;
  {
    CostVolume corr;
    {
      AllocationScope scope;
      corr = group_correlation(pl.eighth, pr.eighth, cfg.d_max / 8, cfg.fast_groups);
      out.volumes.correlation = scope.retained_elements();
    }
    // Regularize, then collapse the groups to a single correlation channel.
    low = scale_volume(normalize_peak(acv::generate_attention_weights(corr, *regularizer)), cfg.hypothesis_logit_scale);
  }
  fast_acv::HypothesisSet hyp;
  {
    fast_acv::VapResult vap = fast_acv::volume_attention_propagation(low, pl.quarter, pr.quarter, cfg.vap);
    low = CostVolume();
    hyp = fast_acv::f2i_topk(softmax_over_disparity(vap.v_p), cfg.effective_k());
  }
  CostVolume filtered;
  {
    CostVolume compact;
    {
      AllocationScope scope;
      compact = fast_acv::build_compact_concat(pl.quarter, pr.quarter, hyp);
      out.volumes.concat = scope.retained_elements();
    }
    filtered = fast_acv::fast_attention_filter(hyp, compact);
    out.volumes.filtered = filtered.element_count();
  }
  out.times.construction_ms = elapsed_ms(t);

  // The hypothesis axis is sorted by probability, not by disparity, so no
  // smoothing runs along it.
  t = Clock::now();
  CostVolume cost = compress_concat_volume(filtered);
  filtered = CostVolume();
  out.times.aggregation_ms = elapsed_ms(t);

  t = Clock::now();
  DisparityMap quarter = fast_acv::predict_from_hypotheses(scale_volume(normalize_peak(cost), cfg.logit_scale), hyp, cfg.top);
  quarter.resolution_scale = 4;
  out.disparity = upsample_disparity(quarter, left.height, left.width);
  DisparityMap att = fast_acv::regress_hypothesis_disparity(hyp);
  att.resolution_scale = 4;
  out.attention_disparity = upsample_disparity(att, left.height, left.width);
  out.times.prediction_ms = elapsed_ms(t);

  out.volumes.peak_live = run_scope.stats().peak_elements;
  return out;
}

PipelineOutput run_pipeline(const GrayImage& left, const GrayImage& right, const PipelineConfig& cfg) {
  return cfg.mode == Mode::acv ? run_acv_pipeline(left, right, cfg) : run_fast_acv_pipeline(left, right, cfg);
}

}  // namespace costvol::pipeline
