#include "costvol/volume_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "costvol/parallel.hpp"

namespace costvol {
namespace {

// Reductions longer than this accumulate in double.
constexpr int kFloatAccumLimit = 256;

void require_single_channel(const CostVolume& v, const char* op) {
  if (v.channels != 1) throw std::invalid_argument(std::string(op) + ": expected a 1-channel volume");
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* op) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width)
    throw std::invalid_argument(std::string(op) + ": left/right feature shapes differ");
}

// (row, col, channel) copy so per-pixel feature vectors are contiguous.
std::vector<Real> pixel_major(const FeatureMap& f) {
  std::vector<Real> out(f.data.size());
  const std::size_t plane = f.plane_size();
  for (int c = 0; c < f.channels; ++c) {
    const Real* src = f.data.data() + c * plane;
    for (std::size_t p = 0; p < plane; ++p) out[p * f.channels + c] = src[p];
  }
  return out;
}

template <class Acc>
Real dot(const Real* a, const Real* b, int n) {
  Acc s = 0;
  for (int i = 0; i < n; ++i) s += static_cast<Acc>(a[i]) * static_cast<Acc>(b[i]);
  return static_cast<Real>(s);
}

// Corner-aligned linear resampling of `n` source samples onto `m` targets.
struct LinearTap {
  int i0, i1;
  double t;
};

// `offset` places output sample j at input position (j + offset) / factor - offset;
// a negative offset selects corner alignment.
std::vector<LinearTap> linear_taps(int n, int m, double offset) {
  std::vector<LinearTap> taps(m);
  const double factor = static_cast<double>(m) / n;
  for (int j = 0; j < m; ++j) {
    double pos = 0.0;
    if (offset < 0) {
      pos = m > 1 ? static_cast<double>(j) * (n - 1) / (m - 1) : 0.0;
    } else {
      pos = std::clamp((j + offset) / factor - offset, 0.0, static_cast<double>(n - 1));
    }
    int i0 = static_cast<int>(std::floor(pos));
    i0 = std::clamp(i0, 0, n - 1);
    const int i1 = std::min(i0 + 1, n - 1);
    taps[j] = {i0, i1, pos - i0};
  }
  return taps;
}

Real lerp(Real a, Real b, double t) {
  return static_cast<Real>((1.0 - t) * static_cast<double>(a) + t * static_cast<double>(b));
}

}  // namespace

std::string_view cross_offset_name(CrossOffset m) {
  switch (m) {
    case CrossOffset::center: return "center";
    case CrossOffset::up: return "up";
    case CrossOffset::down: return "down";
    case CrossOffset::left: return "left";
    case CrossOffset::right: return "right";
  }
  return "?";
}

ProbabilityVolume softmax_over_disparity(const CostVolume& v) {
  require_single_channel(v, "softmax_over_disparity");
  for (Real x : v.data) {
    if (!std::isfinite(x)) throw std::domain_error("non-finite cost");
  }
  ProbabilityVolume out(v.disparities, v.height, v.width, v.resolution_scale);
  const std::size_t plane = v.plane_size();
  const int W = v.width;
  parallel_for(0, v.height, [&](int y0, int y1) {
    std::vector<double> max(W), sum(W);
    for (int y = y0; y < y1; ++y) {
      const std::size_t row = static_cast<std::size_t>(y) * W;
      std::fill(max.begin(), max.end(), -HUGE_VAL);
      std::fill(sum.begin(), sum.end(), 0.0);
      for (int d = 0; d < v.disparities; ++d) {
        const Real* src = v.data.data() + d * plane + row;
        for (int x = 0; x < W; ++x) max[x] = std::max(max[x], static_cast<double>(src[x]));
      }
      for (int d = 0; d < v.disparities; ++d) {
        const Real* src = v.data.data() + d * plane + row;
        for (int x = 0; x < W; ++x) sum[x] += std::exp(static_cast<double>(src[x]) - max[x]);
      }
      for (int d = 0; d < v.disparities; ++d) {
        const Real* src = v.data.data() + d * plane + row;
        Real* dst = out.data.data() + d * plane + row;
        for (int x = 0; x < W; ++x)
          dst[x] = static_cast<Real>(std::exp(static_cast<double>(src[x]) - max[x]) / sum[x]);
      }
    }
  });
  return out;
}

DisparityMap soft_argmin(const ProbabilityVolume& p) {
  DisparityMap out(p.height, p.width, p.resolution_scale);
  const std::size_t plane = p.plane_size();
  const int W = p.width;
  parallel_for(0, p.height, [&](int y0, int y1) {
    std::vector<double> acc(W);
    for (int y = y0; y < y1; ++y) {
      const std::size_t row = static_cast<std::size_t>(y) * W;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int d = 0; d < p.disparities; ++d) {
        const Real* src = p.data.data() + d * plane + row;
        for (int x = 0; x < W; ++x) acc[x] += d * static_cast<double>(src[x]);
      }
      for (int x = 0; x < W; ++x) out.data[row + x] = static_cast<Real>(acc[x]);
    }
  });
  return out;
}

namespace detail {

CostVolume group_inner_products(const FeatureMap& f_l, const FeatureMap& f_r, int d_max, int n_groups) {
  require_same_shape(f_l, f_r, "group_correlation");
  if (n_groups <= 0 || f_l.channels % n_groups != 0)
    throw std::invalid_argument("group_correlation: n_groups must divide the channel count");
  if (d_max <= 0) throw std::invalid_argument("group_correlation: d_max must be positive");

  const int C = f_l.channels, H = f_l.height, W = f_l.width;
  const int per_group = C / n_groups;
  const auto left = pixel_major(f_l);
  const auto right = pixel_major(f_r);

  CostVolume out(n_groups, d_max, H, W, f_l.resolution_scale);
  const bool wide = per_group > kFloatAccumLimit;
  parallel_for(0, H, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      for (int d = 0; d < d_max; ++d) {
        for (int x = d; x < W; ++x) {
          const Real* l = left.data() + (static_cast<std::size_t>(y) * W + x) * C;
          const Real* r = right.data() + (static_cast<std::size_t>(y) * W + (x - d)) * C;
          for (int g = 0; g < n_groups; ++g) {
            const int c0 = g * per_group;
            out.at(g, d, y, x) = wide ? dot<double>(l + c0, r + c0, per_group)
                                      : dot<Real>(l + c0, r + c0, per_group);
          }
        }
      }
    }
  });
  return out;
}

Real group_norm(int channels, int n_groups) {
  return static_cast<Real>(static_cast<double>(n_groups) / channels);
}

}  // namespace detail

CostVolume group_correlation(const FeatureMap& f_l, const FeatureMap& f_r, int d_max, int n_groups) {
  CostVolume out = detail::group_inner_products(f_l, f_r, d_max, n_groups);
  const Real norm = detail::group_norm(f_l.channels, n_groups);
  for (Real& v : out.data) v *= norm;
  return out;
}

CostVolume build_concat_volume(const FeatureMap& f_l, const FeatureMap& f_r, int d_max) {
  require_same_shape(f_l, f_r, "build_concat_volume");
  if (d_max <= 0) throw std::invalid_argument("build_concat_volume: d_max must be positive");
  const int C = f_l.channels, H = f_l.height, W = f_l.width;
  CostVolume out(2 * C, d_max, H, W, f_l.resolution_scale);
  parallel_for(0, d_max, [&](int d0, int d1) {
    for (int d = d0; d < d1; ++d) {
      for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
          const Real* l = &f_l.data[f_l.index(c, y, 0)];
          const Real* r = &f_r.data[f_r.index(c, y, 0)];
          Real* left_dst = &out.data[out.index(c, d, y, 0)];
          Real* right_dst = &out.data[out.index(C + c, d, y, 0)];
          std::copy(l, l + W, left_dst);
          for (int x = d; x < W; ++x) right_dst[x] = r[x - d];
        }
      }
    }
  });
  return out;
}

CostVolume upsample_volume_trilinear(const CostVolume& v, int factor, UpsampleAlignment alignment) {
  if (factor <= 0) throw std::invalid_argument("upsample_volume_trilinear: factor must be >= 1");
  if (factor == 1) return v;

  const int C = v.channels, D = v.disparities, H = v.height, W = v.width;
  const int D2 = D * factor, H2 = H * factor, W2 = W * factor;
  const bool corners = alignment == UpsampleAlignment::corners;
  const auto d_taps = linear_taps(D, D2, corners ? -1.0 : 0.0);
  const auto y_taps = linear_taps(H, H2, corners ? -1.0 : 0.5);
  const auto x_taps = linear_taps(W, W2, corners ? -1.0 : 0.5);

  // Separable: disparity, then rows, then columns.
  CostVolume along_d(C, D2, H, W, v.resolution_scale);
  parallel_for(0, C * D2, [&](int lo, int hi) {
    for (int cd = lo; cd < hi; ++cd) {
      const int c = cd / D2, j = cd % D2;
      const auto& tap = d_taps[j];
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          along_d.at(c, j, y, x) = lerp(v.at(c, tap.i0, y, x), v.at(c, tap.i1, y, x), tap.t);
    }
  });

  CostVolume along_y(C, D2, H2, W, v.resolution_scale);
  parallel_for(0, C * D2, [&](int lo, int hi) {
    for (int cd = lo; cd < hi; ++cd) {
      const int c = cd / D2, d = cd % D2;
      for (int j = 0; j < H2; ++j) {
        const auto& tap = y_taps[j];
        for (int x = 0; x < W; ++x)
          along_y.at(c, d, j, x) = lerp(along_d.at(c, d, tap.i0, x), along_d.at(c, d, tap.i1, x), tap.t);
      }
    }
  });
  along_d = CostVolume();

  CostVolume out(C, D2, H2, W2, v.resolution_scale);
  parallel_for(0, C * D2, [&](int lo, int hi) {
    for (int cd = lo; cd < hi; ++cd) {
      const int c = cd / D2, d = cd % D2;
      for (int y = 0; y < H2; ++y) {
        const Real* src = &along_y.data[along_y.index(c, d, y, 0)];
        Real* dst = &out.data[out.index(c, d, y, 0)];
        for (int j = 0; j < W2; ++j) {
          const auto& tap = x_taps[j];
          dst[j] = lerp(src[tap.i0], src[tap.i1], tap.t);
        }
      }
    }
  });
  return out;
}

CostVolume unfold_cross(const CostVolume& v, int radius) {
  require_single_channel(v, "unfold_cross");
  if (radius < 1) throw std::invalid_argument("unfold_cross: radius must be >= 1");
  const int D = v.disparities, H = v.height, W = v.width;
  CostVolume out(kCrossSize, D, H, W, v.resolution_scale);
  parallel_for(0, D, [&](int d0, int d1) {
    for (int m = 0; m < kCrossSize; ++m) {
      const int dx = kCrossSteps[m][0] * radius, dy = kCrossSteps[m][1] * radius;
      for (int d = d0; d < d1; ++d) {
        for (int y = 0; y < H; ++y) {
          const int sy = std::clamp(y + dy, 0, H - 1);
          for (int x = 0; x < W; ++x) {
            const int sx = std::clamp(x + dx, 0, W - 1);
            out.at(m, d, y, x) = v.at(0, d, sy, sx);
          }
        }
      }
    }
  });
  return out;
}

PlaneStack sample_cross(const PlaneStack& plane, int radius, int plane_index) {
  if (radius < 1) throw std::invalid_argument("sample_cross: radius must be >= 1");
  if (plane_index < 0 || plane_index >= plane.planes)
    throw std::invalid_argument("sample_cross: plane index out of range");
  const int H = plane.height, W = plane.width;
  PlaneStack out(kCrossSize, H, W);
  for (int m = 0; m < kCrossSize; ++m) {
    const int dx = kCrossSteps[m][0] * radius, dy = kCrossSteps[m][1] * radius;
    for (int y = 0; y < H; ++y) {
      const int sy = std::clamp(y + dy, 0, H - 1);
      for (int x = 0; x < W; ++x) {
        const int sx = std::clamp(x + dx, 0, W - 1);
        out.at(m, y, x) = plane.at(plane_index, sy, sx);
      }
    }
  }
  return out;
}

CostVolume scale_volume(const CostVolume& v, Real factor) {
  CostVolume out = v;
  for (Real& x : out.data) x *= factor;
  return out;
}

}  // namespace costvol
