#pragma once

#include <array>
#include <string_view>

#include "costvol/tensor.hpp"

namespace costvol {

/// Cross-shaped neighbourhood order used by unfold_cross and the VAP planes.
enum class CrossOffset : int { center = 0, up = 1, down = 2, left = 3, right = 4 };
inline constexpr int kCrossSize = 5;

/// (dx, dy) unit offsets for each CrossOffset, in enum order.
inline constexpr std::array<std::array<int, 2>, kCrossSize> kCrossSteps{{
    {0, 0}, {0, -1}, {0, 1}, {-1, 0}, {1, 0}}};

std::string_view cross_offset_name(CrossOffset m);

/// Softmax along the disparity axis of a single-channel volume. Each pixel's
/// logits are shifted by their maximum before exponentiation.
/// Throws std::domain_error("non-finite cost") on NaN/Inf input.
ProbabilityVolume softmax_over_disparity(const CostVolume& v);

/// Expected disparity index, out(x, y) = sum_d d * p(d, x, y).
DisparityMap soft_argmin(const ProbabilityVolume& p);

/// Group-wise correlation. Channels are split into `n_groups` contiguous
/// blocks; out(g, d, y, x) = (n_groups / channels) * <f_l^g(y, x), f_r^g(y, x - d)>.
/// Right-image samples with x - d < 0 contribute 0.
CostVolume group_correlation(const FeatureMap& f_l, const FeatureMap& f_r, int d_max, int n_groups);

/// Concatenation volume with 2C channels: left features repeated over d,
/// right features shifted by d (zero where x - d < 0).
CostVolume build_concat_volume(const FeatureMap& f_l, const FeatureMap& f_r, int d_max);

enum class UpsampleAlignment {
  corners,     // first and last samples of every axis coincide
  pixel_grid,  // disparity bin j lands on j * factor; rows and columns are cell centres
};

/// Linear interpolation along disparity, height and width; each of those
/// extents is multiplied by `factor`. factor = 1 returns a copy. With
/// pixel_grid, samples past the last input position replicate the edge.
CostVolume upsample_volume_trilinear(const CostVolume& v, int factor,
                                     UpsampleAlignment alignment = UpsampleAlignment::corners);

/// Unfolds a single-channel volume into the 5 cross-shaped shifts (center,
/// up, down, left, right) at distance `radius`, replicating edges.
CostVolume unfold_cross(const CostVolume& v, int radius);

/// Same cross sampling applied to one plane of a PlaneStack (edge replicated).
PlaneStack sample_cross(const PlaneStack& plane, int radius, int plane_index = 0);

/// Scales every element; used for logit temperature and disparity rescaling.
CostVolume scale_volume(const CostVolume& v, Real factor);

namespace detail {
// Unnormalised per-group inner products underlying group_correlation.
CostVolume group_inner_products(const FeatureMap& f_l, const FeatureMap& f_r, int d_max, int n_groups);
// The n_groups / channels factor, rounded to Real once.
Real group_norm(int channels, int n_groups);
}  // namespace detail

}  // namespace costvol
