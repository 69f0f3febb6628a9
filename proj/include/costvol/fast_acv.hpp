#pragma once

#include <cstdint>
#include <utility>

#include "costvol/tensor.hpp"
#include "costvol/volume_core.hpp"

namespace costvol::fast_acv {

struct VapConfig {
  int upsample_factor = 2;
  UpsampleAlignment alignment = UpsampleAlignment::corners;
  int radius = 1;      // cross arm length; 1 gives a 3x3 sampling block
  Real alpha = 1.0f;   // confidence = alpha + beta * uncertainty
  Real beta = -1.0f;

  void validate() const;
};

/// Per-pixel top-K disparity hypotheses. Both arrays are laid out (k, row, col);
/// along k the weights are non-increasing.
struct HypothesisSet {
  int k = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> d_hyp;
  std::vector<Real> a_f;

  HypothesisSet() = default;
  HypothesisSet(int k, int h, int w);

  std::size_t index(int kk, int y, int x) const {
    return (static_cast<std::size_t>(kk) * height + y) * width + x;
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  void validate(int disparities) const;
};

/// Matching scores S_m, confidences C_m and combined weights W_m = S_m * sigmoid(C_m).
struct PropagationField {
  PlaneStack s;
  PlaneStack c;
  PlaneStack w;
};

/// P_init = softmax(v_init), D_init = soft_argmin(P_init).
std::pair<ProbabilityVolume, DisparityMap> regress_initial_disparity(const CostVolume& v_init);

/// Five planes: d_init at the pixel and at its cross neighbours `radius` away.
PlaneStack sample_cross_disparities(const DisparityMap& d_init, int radius);

/// S_m(y, x) = (1/C) <F_l(y, x), F_r(y, x - D_m(y, x))>. Fractional positions
/// interpolate F_r linearly along the row; positions outside [0, W-1] score 0.
PlaneStack matching_score(const FeatureMap& f_l, const FeatureMap& f_r, const PlaneStack& d_m);

/// Variance of each pixel's disparity distribution about d_init.
PlaneStack estimate_uncertainty(const ProbabilityVolume& p_init, const DisparityMap& d_init);

/// Affine confidence alpha + beta * U.
PlaneStack confidence(const PlaneStack& u, Real alpha, Real beta);

/// W_m = S_m * sigmoid(C_m). `c` holds the cross-sampled confidences.
PropagationField propagation_weights(const PlaneStack& s, const PlaneStack& c);

/// V_p(d, y, x) = sum_m V_u(m, d, y, x) * softmax_m(W_m(y, x)).
CostVolume cross_propagate(const CostVolume& v_u, const PropagationField& field);

/// Intermediate products of one volume attention propagation pass.
struct VapResult {
  CostVolume v_init;
  DisparityMap d_init;
  PropagationField field;
  CostVolume v_p;
};

/// Full propagation: upsample a low-resolution 1-channel correlation volume
/// by cfg.upsample_factor, regress D_init, score and weight the cross
/// neighbours, and propagate. Features must be at the upsampled resolution.
VapResult volume_attention_propagation(const CostVolume& v_low, const FeatureMap& f_l, const FeatureMap& f_r,
                                       const VapConfig& cfg);

/// Keeps the k most probable disparities per pixel, in descending probability
/// order; equal probabilities keep the smaller disparity first.
HypothesisSet f2i_topk(const ProbabilityVolume& p, int k);

/// Concatenation volume sampled only at the hypothesised disparities.
CostVolume build_compact_concat(const FeatureMap& f_l, const FeatureMap& f_r, const HypothesisSet& hyp);

/// out(i, k, y, x) = a_f(k, y, x) * c_compact(i, k, y, x).
CostVolume fast_attention_filter(const HypothesisSet& hyp, const CostVolume& c_compact);

/// Softmax over the `top` largest aggregated values at each pixel, then the
/// expected hypothesis disparity. Output stays in the hypotheses' units.
DisparityMap predict_from_hypotheses(const CostVolume& v, const HypothesisSet& hyp, int top = 2);

/// Expected disparity under the renormalised hypothesis weights.
DisparityMap regress_hypothesis_disparity(const HypothesisSet& hyp);

}  // namespace costvol::fast_acv
