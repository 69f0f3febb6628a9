#include "costvol/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifndef COSTVOL_SMOOTH_L1_BREAKPOINT
#define COSTVOL_SMOOTH_L1_BREAKPOINT 1.0
#endif

namespace costvol::metrics {
namespace {

void check(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask) {
  if (pred.height != gt.height || pred.width != gt.width || mask.height != gt.height || mask.width != gt.width)
    throw std::invalid_argument("metrics: shape mismatch");
}

// Fixed-order mean of f(pred, gt) over valid pixels.
template <class F>
double masked_mean(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask, F&& f) {
  check(pred, gt, mask);
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (!mask.valid[i]) continue;
    acc += f(static_cast<double>(pred.data[i]), static_cast<double>(gt.data[i]));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("metrics: empty mask");
  return acc / static_cast<double>(n);
}

}  // namespace

double epe(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask) {
  return masked_mean(pred, gt, mask, [](double p, double g) { return std::abs(p - g); });
}

double d1(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask) {
  return 100.0 * masked_mean(pred, gt, mask, [](double p, double g) {
           return std::abs(p - g) > std::max(3.0, 0.05 * g) ? 1.0 : 0.0;
         });
}

double bad_x(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask, double x) {
  if (!(x > 0)) throw std::invalid_argument("bad_x: threshold must be positive");
  return 100.0 * masked_mean(pred, gt, mask, [x](double p, double g) { return std::abs(p - g) > x ? 1.0 : 0.0; });
}

double smooth_l1_breakpoint() { return COSTVOL_SMOOTH_L1_BREAKPOINT; }

double smooth_l1_residual(double e) {
  constexpr double beta = COSTVOL_SMOOTH_L1_BREAKPOINT;
  const double a = std::abs(e);
  return a < beta ? 0.5 * a * a / beta : a - 0.5 * beta;
}

double smooth_l1(const DisparityMap& pred, const DisparityMap& gt, const EvalMask& mask) {
  return masked_mean(pred, gt, mask, [](double p, double g) { return smooth_l1_residual(p - g); });
}

void LossWeights::validate() const {
  for (double v : {lambda_att, lambda_0, lambda_1, lambda_2, lambda_att_f, lambda_f}) {
    if (!(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("LossWeights: weights must be non-negative");
  }
}

double acv_total_loss(const DisparityMap& d_att, const DisparityMap& d0, const DisparityMap& d1_pred,
                      const DisparityMap& d2, const DisparityMap& gt, const EvalMask& mask, const LossWeights& w) {
  w.validate();
  return w.lambda_att * smooth_l1(d_att, gt, mask) + w.lambda_0 * smooth_l1(d0, gt, mask) +
         w.lambda_1 * smooth_l1(d1_pred, gt, mask) + w.lambda_2 * smooth_l1(d2, gt, mask);
}

double fast_acv_total_loss(const DisparityMap& d_att_f, const DisparityMap& d_f, const DisparityMap& gt,
                           const EvalMask& mask, const LossWeights& w) {
  w.validate();
  return w.lambda_att_f * smooth_l1(d_att_f, gt, mask) + w.lambda_f * smooth_l1(d_f, gt, mask);
}

}  // namespace costvol::metrics
