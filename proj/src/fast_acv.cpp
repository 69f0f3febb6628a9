#include "costvol/fast_acv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "costvol/parallel.hpp"
#include "costvol/volume_core.hpp"

namespace costvol::fast_acv {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_planes(const PlaneStack& p, int planes, int h, int w, const char* op) {
  if (p.planes != planes || p.height != h || p.width != w)
    throw std::invalid_argument(std::string(op) + ": plane stack shape mismatch");
}

}  // namespace

void VapConfig::validate() const {
  if (upsample_factor < 1) throw std::invalid_argument("VapConfig: upsample_factor must be >= 1");
  if (radius < 1) throw std::invalid_argument("VapConfig: radius must be >= 1");
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw std::invalid_argument("VapConfig: non-finite alpha/beta");
}

HypothesisSet::HypothesisSet(int kk, int h, int w) : k(kk), height(h), width(w) {
  const std::size_t n = static_cast<std::size_t>(kk) * h * w;
  d_hyp.assign(n, 0);
  a_f.assign(n, 0);
}

void HypothesisSet::validate(int disparities) const {
  const std::size_t plane = plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    double sum = 0;
    for (int i = 0; i < k; ++i) {
      const Real a = a_f[i * plane + p];
      const int d = d_hyp[i * plane + p];
      if (!(a >= 0)) throw std::invalid_argument("HypothesisSet: negative weight");
      if (d < 0 || d >= disparities) throw std::invalid_argument("HypothesisSet: disparity out of range");
      if (i > 0 && a > a_f[(i - 1) * plane + p]) throw std::invalid_argument("HypothesisSet: weights not sorted");
      for (int j = 0; j < i; ++j) {
        if (d_hyp[j * plane + p] == d) throw std::invalid_argument("HypothesisSet: duplicate disparity");
      }
      sum += a;
    }
    if (sum > 1.0 + 1e-5) throw std::invalid_argument("HypothesisSet: weights sum above 1");
  }
}

std::pair<ProbabilityVolume, DisparityMap> regress_initial_disparity(const CostVolume& v_init) {
  ProbabilityVolume p = softmax_over_disparity(v_init);
  DisparityMap d = soft_argmin(p);
  return {std::move(p), std::move(d)};
}

PlaneStack sample_cross_disparities(const DisparityMap& d_init, int radius) {
  PlaneStack single(1, d_init.height, d_init.width);
  single.data = d_init.data;
  return sample_cross(single, radius);
}

PlaneStack matching_score(const FeatureMap& f_l, const FeatureMap& f_r, const PlaneStack& d_m) {
  if (f_l.channels != f_r.channels || f_l.height != f_r.height || f_l.width != f_r.width)
    throw std::invalid_argument("matching_score: left/right feature shapes differ");
  if (d_m.height != f_l.height || d_m.width != f_l.width)
    throw std::invalid_argument("matching_score: disparity planes do not match feature size");
  const int C = f_l.channels, H = f_l.height, W = f_l.width;
  PlaneStack out(d_m.planes, H, W);
  parallel_for(0, H, [&](int y0, int y1) {
    for (int m = 0; m < d_m.planes; ++m) {
      for (int y = y0; y < y1; ++y) {
        for (int x = 0; x < W; ++x) {
          const double pos = static_cast<double>(x) - d_m.at(m, y, x);
          if (!(pos >= 0.0) || pos > W - 1) continue;  // also rejects NaN
          const int x0 = static_cast<int>(std::floor(pos));
          const int x1 = std::min(x0 + 1, W - 1);
          const double t = pos - x0;
          double acc = 0;
          for (int c = 0; c < C; ++c) {
            const double r = (1.0 - t) * f_r.at(c, y, x0) + t * f_r.at(c, y, x1);
            acc += static_cast<double>(f_l.at(c, y, x)) * r;
          }
          out.at(m, y, x) = static_cast<Real>(C > 0 ? acc / C : 0.0);
        }
      }
    }
  });
  return out;
}

PlaneStack estimate_uncertainty(const ProbabilityVolume& p_init, const DisparityMap& d_init) {
  if (p_init.height != d_init.height || p_init.width != d_init.width)
    throw std::invalid_argument("estimate_uncertainty: shape mismatch");
  const std::size_t plane = p_init.plane_size();
  PlaneStack out(1, p_init.height, p_init.width);
  for (std::size_t i = 0; i < plane; ++i) {
    const double mean = d_init.data[i];
    double acc = 0;
    for (int d = 0; d < p_init.disparities; ++d) {
      const double dev = d - mean;
      acc += static_cast<double>(p_init.data[d * plane + i]) * dev * dev;
    }
    out.data[i] = static_cast<Real>(acc);
  }
  return out;
}

PlaneStack confidence(const PlaneStack& u, Real alpha, Real beta) {
  PlaneStack out(u.planes, u.height, u.width);
  for (std::size_t i = 0; i < u.data.size(); ++i)
    out.data[i] = static_cast<Real>(static_cast<double>(alpha) + static_cast<double>(beta) * u.data[i]);
  return out;
}

PropagationField propagation_weights(const PlaneStack& s, const PlaneStack& c) {
  require_planes(c, s.planes, s.height, s.width, "propagation_weights");
  PropagationField field{s, c, PlaneStack(s.planes, s.height, s.width)};
  for (std::size_t i = 0; i < s.data.size(); ++i)
    field.w.data[i] = static_cast<Real>(static_cast<double>(s.data[i]) * sigmoid(c.data[i]));
  return field;
}

CostVolume cross_propagate(const CostVolume& v_u, const PropagationField& field) {
  const int M = v_u.channels, D = v_u.disparities, H = v_u.height, W = v_u.width;
  require_planes(field.w, M, H, W, "cross_propagate");
  CostVolume out(1, D, H, W, v_u.resolution_scale);
  const std::size_t plane = v_u.plane_size();
  const std::size_t channel = static_cast<std::size_t>(D) * plane;
  parallel_for(0, H, [&](int y0, int y1) {
    std::vector<double> weight(M);
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        double max = -HUGE_VAL;
        for (int m = 0; m < M; ++m) max = std::max(max, static_cast<double>(field.w.data[m * plane + p]));
        double sum = 0;
        for (int m = 0; m < M; ++m) {
          weight[m] = std::exp(static_cast<double>(field.w.data[m * plane + p]) - max);
          sum += weight[m];
        }
        for (int m = 0; m < M; ++m) weight[m] /= sum;
        for (int d = 0; d < D; ++d) {
          double acc = 0;
          for (int m = 0; m < M; ++m) acc += weight[m] * v_u.data[m * channel + d * plane + p];
          out.data[d * plane + p] = static_cast<Real>(acc);
        }
      }
    }
  });
  return out;
}

VapResult volume_attention_propagation(const CostVolume& v_low, const FeatureMap& f_l, const FeatureMap& f_r,
                                       const VapConfig& cfg) {
  cfg.validate();
  if (v_low.channels != 1) throw std::invalid_argument("volume_attention_propagation: expected a 1-channel volume");
  VapResult r;
  r.v_init = upsample_volume_trilinear(v_low, cfg.upsample_factor, cfg.alignment);
  if (f_l.height != r.v_init.height || f_l.width != r.v_init.width)
    throw std::invalid_argument("volume_attention_propagation: features do not match the upsampled volume");

  auto [p_init, d_init] = regress_initial_disparity(r.v_init);
  const PlaneStack d_m = sample_cross_disparities(d_init, cfg.radius);
  const PlaneStack scores = matching_score(f_l, f_r, d_m);
  const PlaneStack u = estimate_uncertainty(p_init, d_init);
  p_init = ProbabilityVolume();
  const PlaneStack c_m = sample_cross(confidence(u, cfg.alpha, cfg.beta), cfg.radius);
  r.field = propagation_weights(scores, c_m);
  {
    const CostVolume v_u = unfold_cross(r.v_init, cfg.radius);
    r.v_p = cross_propagate(v_u, r.field);
  }
  r.d_init = std::move(d_init);
  return r;
}

HypothesisSet f2i_topk(const ProbabilityVolume& p, int k) {
  if (k < 1 || k > p.disparities) throw std::invalid_argument("f2i_topk: k must be in [1, disparities]");
  HypothesisSet out(k, p.height, p.width);
  const std::size_t plane = p.plane_size();
  const int D = p.disparities;
  parallel_for(0, p.height, [&](int y0, int y1) {
    std::vector<int> order(D);
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < p.width; ++x) {
        const std::size_t px = static_cast<std::size_t>(y) * p.width + x;
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
          const Real va = p.data[a * plane + px], vb = p.data[b * plane + px];
          return va > vb || (va == vb && a < b);
        });
        for (int i = 0; i < k; ++i) {
          out.d_hyp[i * plane + px] = order[i];
          out.a_f[i * plane + px] = p.data[order[i] * plane + px];
        }
      }
    }
  });
  return out;
}

CostVolume build_compact_concat(const FeatureMap& f_l, const FeatureMap& f_r, const HypothesisSet& hyp) {
  if (f_l.channels != f_r.channels || f_l.height != f_r.height || f_l.width != f_r.width)
    throw std::invalid_argument("build_compact_concat: left/right feature shapes differ");
  if (hyp.height != f_l.height || hyp.width != f_l.width)
    throw std::invalid_argument("build_compact_concat: hypotheses do not match feature size");
  const int C = f_l.channels, H = f_l.height, W = f_l.width, K = hyp.k;
  CostVolume out(2 * C, K, H, W, f_l.resolution_scale);
  parallel_for(0, K, [&](int k0, int k1) {
    for (int k = k0; k < k1; ++k) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const int src = x - hyp.d_hyp[hyp.index(k, y, x)];
          for (int c = 0; c < C; ++c) {
            out.at(c, k, y, x) = f_l.at(c, y, x);
            out.at(C + c, k, y, x) = src >= 0 && src < W ? f_r.at(c, y, src) : Real{0};
          }
        }
      }
    }
  });
  return out;
}

CostVolume fast_attention_filter(const HypothesisSet& hyp, const CostVolume& c_compact) {
  if (hyp.k != c_compact.disparities || hyp.height != c_compact.height || hyp.width != c_compact.width)
    throw std::invalid_argument("fast_attention_filter: shape mismatch");
  CostVolume out(c_compact.channels, c_compact.disparities, c_compact.height, c_compact.width,
                 c_compact.resolution_scale);
  const std::size_t n = hyp.a_f.size();
  parallel_for(0, c_compact.channels, [&](int c0, int c1) {
    for (int c = c0; c < c1; ++c) {
      const Real* src = c_compact.data.data() + c * n;
      Real* dst = out.data.data() + c * n;
      for (std::size_t i = 0; i < n; ++i) dst[i] = hyp.a_f[i] * src[i];
    }
  });
  return out;
}

DisparityMap predict_from_hypotheses(const CostVolume& v, const HypothesisSet& hyp, int top) {
  if (v.channels != 1) throw std::invalid_argument("predict_from_hypotheses: expected a 1-channel volume");
  if (v.disparities != hyp.k || v.height != hyp.height || v.width != hyp.width)
    throw std::invalid_argument("predict_from_hypotheses: volume and hypotheses disagree in shape");
  if (top < 1 || top > hyp.k) throw std::invalid_argument("predict_from_hypotheses: top must be in [1, K]");
  DisparityMap out(v.height, v.width, v.resolution_scale);
  const std::size_t plane = v.plane_size();
  const int K = hyp.k;
  parallel_for(0, v.height, [&](int y0, int y1) {
    std::vector<int> order(K);
    std::vector<double> weight(top);
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < v.width; ++x) {
        const std::size_t px = static_cast<std::size_t>(y) * v.width + x;
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](int a, int b) {
          const Real va = v.data[a * plane + px], vb = v.data[b * plane + px];
          return va > vb || (va == vb && a < b);
        });
        const double max = v.data[order[0] * plane + px];
        double sum = 0;
        for (int i = 0; i < top; ++i) {
          weight[i] = std::exp(static_cast<double>(v.data[order[i] * plane + px]) - max);
          sum += weight[i];
        }
        double acc = 0;
        for (int i = 0; i < top; ++i) acc += weight[i] / sum * hyp.d_hyp[order[i] * plane + px];
        out.data[px] = static_cast<Real>(acc);
      }
    }
  });
  return out;
}

DisparityMap regress_hypothesis_disparity(const HypothesisSet& hyp) {
  DisparityMap out(hyp.height, hyp.width);
  const std::size_t plane = hyp.plane_size();
  for (std::size_t px = 0; px < plane; ++px) {
    double num = 0, den = 0;
    for (int k = 0; k < hyp.k; ++k) {
      num += static_cast<double>(hyp.a_f[k * plane + px]) * hyp.d_hyp[k * plane + px];
      den += hyp.a_f[k * plane + px];
    }
    out.data[px] = den > 0 ? static_cast<Real>(num / den) : Real{0};
  }
  return out;
}

}  // namespace costvol::fast_acv
