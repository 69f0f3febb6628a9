#pragma once

#include "costvol/tensor.hpp"

namespace costvol::metrics {

// All reductions run over valid mask pixels in row-major order and throw
// std::invalid_argument on shape mismatch or an empty mask.

/// Mean absolute disparity error.
double epe(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask);

/// Percentage of pixels with |pred - gt| > max(3, 0.05 * gt).
double d1(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask);

/// Percentage of pixels with |pred - gt| > x.
double bad_x(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask, double x);

/// Transition point between the quadratic and linear branches.
double smooth_l1_breakpoint();

/// Smooth-L1 penalty of a single residual.
double smooth_l1_residual(double e);

/// Mean smooth-L1 penalty of pred - gt.
double smooth_l1(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask);

struct LossWeights {
  double lambda_att = 0.5;
  double lambda_0 = 0.5;
  double lambda_1 = 0.7;
  double lambda_2 = 1.0;
  double lambda_att_f = 0.5;
  double lambda_f = 1.0;

  void validate() const;
};

double acv_total_loss(const DisparityMap& d_att, const DisparityMap& d0, const DisparityMap& d1_pred,
                      const DisparityMap& d2, const DisparityMap& gt, const EvalMask& mask,
                      const LossWeights& w = {});

double fast_acv_total_loss(const DisparityMap& d_att_f, const DisparityMap& d_f, const DisparityMap& gt,
                           const EvalMask& mask, const LossWeights& w = {});

}  // namespace costvol::metrics
