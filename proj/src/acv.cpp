#include "costvol/acv.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "costvol/parallel.hpp"
#include "costvol/volume_core.hpp"

namespace costvol::acv {

PatchWeights PatchWeights::uniform(int level) {
  PatchWeights w;
  w.level = level;
  w.weights.fill(Real{1} / Real{9});
  return w;
}

PatchWeights PatchWeights::center_only(int level) {
  PatchWeights w;
  w.level = level;
  w.weights.fill(0);
  w.weights[4] = 1;
  return w;
}

void PatchWeights::validate() const {
  if (level < 1 || level > 3) throw std::invalid_argument("PatchWeights: level must be 1, 2 or 3");
  for (Real v : weights) {
    if (!std::isfinite(v)) throw std::invalid_argument("PatchWeights: non-finite weight");
  }
}

void AcvConfig::validate() const {
  if (d_max <= 0 || d_max % 4 != 0) throw std::invalid_argument("AcvConfig: d_max must be a positive multiple of 4");
  if (std::accumulate(group_split.begin(), group_split.end(), 0) != n_groups)
    throw std::invalid_argument("AcvConfig: group_split must sum to n_groups");
  for (int g : group_split) {
    if (g <= 0) throw std::invalid_argument("AcvConfig: group_split entries must be positive");
  }
  if (concat_channels <= 0) throw std::invalid_argument("AcvConfig: concat_channels must be positive");
}

CostVolume mapm_level(const FeatureMap& f_l, const FeatureMap& f_r, int level, const PatchWeights& w,
                      int d_max, int n_groups) {
  if (level < 1 || level > 3) throw std::invalid_argument("mapm_level: level must be 1, 2 or 3");
  w.validate();

  // Per-tap inner products are shifted copies of the dense group inner
  // products, so compute those once and accumulate the nine taps.
  const CostVolume raw = costvol::detail::group_inner_products(f_l, f_r, d_max, n_groups);
  const Real norm = costvol::detail::group_norm(f_l.channels, n_groups);
  const int H = raw.height, W = raw.width;

  CostVolume out(n_groups, d_max, H, W, f_l.resolution_scale);
  parallel_for(0, n_groups * d_max, [&](int lo, int hi) {
    for (int gd = lo; gd < hi; ++gd) {
      const int g = gd / d_max, d = gd % d_max;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          Real acc = 0;
          for (int js = -1; js <= 1; ++js) {
            const int sy = y - js * level;
            if (sy < 0 || sy >= H) continue;
            for (int is = -1; is <= 1; ++is) {
              const int sx = x - is * level;
              if (sx < 0 || sx >= W) continue;
              acc += w.weight(is, js) * raw.at(g, d, sy, sx);
            }
          }
          out.at(g, d, y, x) = acc * norm;
        }
      }
    }
  });
  return out;
}

CostVolume build_mapm_volume(const std::array<MapmLevelInput, 3>& levels, const AcvConfig& cfg) {
  cfg.validate();
  const int bins = cfg.quarter_disparities();
  const FeatureMap& first = levels[0].left;

  std::array<CostVolume, 3> parts;
  for (int k = 0; k < 3; ++k) {
    const auto& lv = levels[k];
    if (lv.left.height != first.height || lv.left.width != first.width)
      throw std::invalid_argument("build_mapm_volume: level feature maps differ in spatial size");
    if (lv.left.channels % cfg.group_split[k] != 0)
      throw std::invalid_argument("build_mapm_volume: level " + std::to_string(k + 1) +
                                  " channels not divisible by its group count");
    if (lv.weights.level != k + 1)
      throw std::invalid_argument("build_mapm_volume: patch weights attached to the wrong level");
    parts[k] = mapm_level(lv.left, lv.right, k + 1, lv.weights, bins, cfg.group_split[k]);
  }
  const int per_group0 = levels[0].left.channels / cfg.group_split[0];
  for (int k = 1; k < 3; ++k) {
    if (levels[k].left.channels / cfg.group_split[k] != per_group0)
      throw std::invalid_argument("build_mapm_volume: levels disagree on channels per group");
  }

  CostVolume out(cfg.n_groups, bins, first.height, first.width, first.resolution_scale);
  auto dst = out.data.begin();
  for (auto& part : parts) {
    dst = std::copy(part.data.begin(), part.data.end(), dst);
    part = CostVolume();
  }
  return out;
}

CostVolume generate_attention_weights(const CostVolume& c_patch, const VolumeRegularizer& regularizer) {
  const CostVolume reg = regularizer.apply(c_patch);
  if (reg.channels <= 0) throw std::invalid_argument("generate_attention_weights: empty volume");
  CostVolume out(1, reg.disparities, reg.height, reg.width, reg.resolution_scale);
  const std::size_t n = out.data.size();
  const int G = reg.channels;
  parallel_for(0, reg.disparities, [&](int d0, int d1) {
    const std::size_t span = reg.plane_size();
    for (int d = d0; d < d1; ++d) {
      for (std::size_t p = 0; p < span; ++p) {
        double acc = 0;
        for (int g = 0; g < G; ++g) acc += reg.data[g * n + d * span + p];
        out.data[d * span + p] = static_cast<Real>(acc / G);
      }
    }
  });
  return out;
}

CostVolume attention_filter(const CostVolume& a, const CostVolume& c_concat) {
  if (a.channels != 1) throw std::invalid_argument("attention_filter: attention volume must have 1 channel");
  if (a.disparities != c_concat.disparities || a.height != c_concat.height || a.width != c_concat.width)
    throw std::invalid_argument("attention_filter: shape mismatch");
  CostVolume out(c_concat.channels, c_concat.disparities, c_concat.height, c_concat.width,
                 c_concat.resolution_scale);
  const std::size_t n = a.data.size();
  parallel_for(0, c_concat.channels, [&](int c0, int c1) {
    for (int c = c0; c < c1; ++c) {
      const Real* src = c_concat.data.data() + c * n;
      Real* dst = out.data.data() + c * n;
      for (std::size_t i = 0; i < n; ++i) dst[i] = a.data[i] * src[i];
    }
  });
  return out;
}

DisparityMap regress_attention_disparity(const CostVolume& a) {
  return soft_argmin(softmax_over_disparity(a));
}

}  // namespace costvol::acv
