#pragma once

#include <array>

#include "costvol/tensor.hpp"

namespace costvol::acv {

/// Nine patch weights for one feature level. The patch is the dilated 3x3
/// grid {-k, 0, k}^2; weights[(j/k + 1) * 3 + (i/k + 1)] belongs to the tap
/// at column offset i and row offset j. The same weights serve every group
/// of the level.
struct PatchWeights {
  int level = 1;
  std::array<Real, 9> weights{};

  static PatchWeights uniform(int level);
  static PatchWeights center_only(int level);

  Real weight(int i_step, int j_step) const { return weights[(j_step + 1) * 3 + (i_step + 1)]; }
  void validate() const;
};

struct AcvConfig {
  int d_max = 192;                       // full-resolution disparity count D
  int n_groups = 40;                     // N_g
  std::array<int, 3> group_split{8, 16, 16};
  int concat_channels = 32;              // N_c

  int quarter_disparities() const { return d_max / 4; }
  void validate() const;
};

/// Stand-in for the learned aggregation network: a pure volume-to-volume map.
class VolumeRegularizer {
 public:
  virtual ~VolumeRegularizer() = default;
  virtual CostVolume apply(const CostVolume& v) const = 0;
};

class IdentityRegularizer final : public VolumeRegularizer {
 public:
  CostVolume apply(const CostVolume& v) const override { return v; }
};

/// Patch-matching correlation for one level. Taps lie at dilation `level`;
/// out(g, d, y, x) = (n_groups / C) * sum_{(i,j)} w_ij <f_l^g(y-j, x-i), f_r^g(y-j, x-i-d)>,
/// with every out-of-frame tap contributing 0.
CostVolume mapm_level(const FeatureMap& f_l, const FeatureMap& f_r, int level, const PatchWeights& w,
                      int d_max, int n_groups);

struct MapmLevelInput {
  const FeatureMap& left;
  const FeatureMap& right;
  PatchWeights weights;
};

/// Concatenates the three per-level patch volumes along the group axis.
/// Level k contributes cfg.group_split[k-1] groups over cfg.d_max / 4 bins.
CostVolume build_mapm_volume(const std::array<MapmLevelInput, 3>& levels, const AcvConfig& cfg);

/// A = mean over groups of regularizer(c_patch); a 1-channel volume.
CostVolume generate_attention_weights(const CostVolume& c_patch, const VolumeRegularizer& regularizer);

/// out(i, d, y, x) = a(0, d, y, x) * c_concat(i, d, y, x).
CostVolume attention_filter(const CostVolume& a, const CostVolume& c_concat);

/// soft_argmin(softmax_over_disparity(a)).
DisparityMap regress_attention_disparity(const CostVolume& a);

}  // namespace costvol::acv
