#include <gtest/gtest.h>

#include <cmath>

#include "costvol/fast_acv.hpp"
#include "costvol/io_formats.hpp"
#include "costvol/pipeline.hpp"
#include "costvol/testing/oracles.hpp"
#include "costvol/volume_core.hpp"

using namespace costvol;
using namespace costvol::testing;
namespace fa = costvol::fast_acv;

namespace {

std::span<const Real> view(const CostVolume& v) { return {v.data.data(), v.data.size()}; }

ProbabilityVolume distribution(std::vector<Real> values) {
  ProbabilityVolume p(static_cast<int>(values.size()), 1, 1);
  std::copy(values.begin(), values.end(), p.data.begin());
  return p;
}

PlaneStack filled(int m, int h, int w, Real v) { return PlaneStack(m, h, w, v); }

}  // namespace

TEST(InitialDisparity, DominantBinAndUniform) {
  CostVolume v(1, 10, 1, 1);
  v.data[7] = 50;
  EXPECT_NEAR(fa::regress_initial_disparity(v).second.data[0], 7.0, 1e-4);
  const CostVolume flat(1, 48, 2, 2);
  for (Real d : fa::regress_initial_disparity(flat).second.data) EXPECT_FLOAT_EQ(d, 23.5f);
}

TEST(InitialDisparity, MatchesComposedOracles) {
  std::mt19937_64 rng(1);
  const CostVolume v = random_volume(rng, 1, 7, 4, 5, -3, 3);
  const auto [p, d] = fa::regress_initial_disparity(v);
  const ProbabilityVolume ref = softmax_oracle(v);
  const DisparityMap dref = soft_argmin_oracle(ref);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d.data[i], dref.data[i], 1e-5);
  EXPECT_LE(max_abs_diff({p.data.data(), p.data.size()}, {ref.data.data(), ref.data.size()}), 1e-6);
}

TEST(CrossDisparities, ConstantAndCenter) {
  DisparityMap d(4, 5, 1, 12.0f);
  for (Real x : fa::sample_cross_disparities(d, 1).data) EXPECT_EQ(x, 12.0f);
  std::mt19937_64 rng(2);
  d = random_disparity(rng, 4, 5, 0, 10);
  const PlaneStack p = fa::sample_cross_disparities(d, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      EXPECT_EQ(p.at(0, y, x), d.at(y, x));
      if (y > 0) EXPECT_EQ(p.at(static_cast<int>(CrossOffset::up), y, x), d.at(y - 1, x));
    }
}

TEST(MatchingScore, SelfScoreIsNormSquared) {
  std::mt19937_64 rng(3);
  const FeatureMap f = random_features(rng, 6, 3, 4);
  const PlaneStack s = fa::matching_score(f, f, filled(5, 3, 4, 0));
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) {
      double n = 0;
      for (int c = 0; c < 6; ++c) n += static_cast<double>(f.at(c, y, x)) * f.at(c, y, x);
      EXPECT_NEAR(s.at(2, y, x), n / 6, 1e-6);
      EXPECT_GE(s.at(2, y, x), 0.0f);
    }
}

TEST(MatchingScore, OutOfFrameIsZero) {
  std::mt19937_64 rng(4);
  const FeatureMap f = random_features(rng, 3, 2, 5);
  for (Real v : fa::matching_score(f, f, filled(5, 2, 5, 9)).data) EXPECT_EQ(v, 0.0f);
  for (Real v : fa::matching_score(f, f, filled(5, 2, 5, -5)).data) EXPECT_EQ(v, 0.0f);
}

TEST(MatchingScore, FractionalShiftInterpolates) {
  FeatureMap l(1, 1, 3), r(1, 1, 3);
  l.data = {1, 1, 1};
  r.data = {0, 2, 4};
  const PlaneStack s = fa::matching_score(l, r, filled(1, 1, 3, 0.25f));
  EXPECT_NEAR(s.at(0, 0, 2), 3.5, 1e-6);  // r at x = 1.75
  EXPECT_NEAR(s.at(0, 0, 1), 1.5, 1e-6);
}

TEST(MatchingScore, TrueShiftWinsOnStereogram) {
  const io::Stereogram sg = io::generate_stereogram(io::StereogramSpec::constant(32, 64, 4, 99));
  const FeatureMap l = pipeline::census_features(sg.left), r = pipeline::census_features(sg.right);
  const PlaneStack at4 = fa::matching_score(l, r, filled(1, 32, 64, 4));
  const PlaneStack at0 = fa::matching_score(l, r, filled(1, 32, 64, 0));
  int wins = 0, total = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 4; x < 64; ++x) {
      wins += at4.at(0, y, x) > at0.at(0, y, x);
      ++total;
    }
  EXPECT_GT(wins, total / 2);
}

TEST(MatchingScore, MatchesOracle) {
  std::mt19937_64 rng(5);
  const FeatureMap l = random_features(rng, 5, 6, 9), r = random_features(rng, 5, 6, 9);
  const PlaneStack d = random_planes(rng, 5, 6, 9, -1, 10);
  const PlaneStack got = fa::matching_score(l, r, d), want = matching_score_oracle(l, r, d);
  EXPECT_LE(max_abs_diff({got.data.data(), got.data.size()}, {want.data.data(), want.data.size()}), 1e-6);
}

TEST(Uncertainty, ClosedForms) {
  const DisparityMap at2(1, 1, 1, 2.0f);
  EXPECT_EQ(fa::estimate_uncertainty(distribution({0, 0, 1, 0}), at2).data[0], 0.0f);
  const DisparityMap mid(1, 1, 1, 1.5f);
  EXPECT_FLOAT_EQ(fa::estimate_uncertainty(distribution({0.25f, 0.25f, 0.25f, 0.25f}), mid).data[0], 1.25f);
  const DisparityMap at_two(1, 1, 1, 2.0f);
  EXPECT_FLOAT_EQ(fa::estimate_uncertainty(distribution({0.5f, 0, 0, 0, 0.5f}), at_two).data[0], 4.0f);
}

TEST(Uncertainty, UniformVarianceIsExact) {
  for (int n : {2, 4, 8, 16}) {
    std::vector<Real> p(n, 1.0f / n);
    const ProbabilityVolume pv = distribution(p);
    const PlaneStack u = fa::estimate_uncertainty(pv, soft_argmin(pv));
    EXPECT_EQ(u.data[0], static_cast<Real>((n * n - 1) / 12.0)) << n;
  }
}

TEST(Uncertainty, NonNegativeAndZeroOnlyForOneHot) {
  std::mt19937_64 rng(6);
  const ProbabilityVolume p = random_probabilities(rng, 6, 5, 5);
  for (Real u : fa::estimate_uncertainty(p, soft_argmin(p)).data) EXPECT_GT(u, 0.0f);
}

TEST(Confidence, AffineExamples) {
  EXPECT_EQ(fa::confidence(filled(1, 1, 1, 0), 1, -1).data[0], 1.0f);
  EXPECT_EQ(fa::confidence(filled(1, 1, 1, 3), 0, 0).data[0], 0.0f);
  EXPECT_EQ(fa::confidence(filled(1, 1, 1, 4), 2, -0.5f).data[0], 0.0f);
}

TEST(PropagationWeights, SigmoidCases) {
  std::mt19937_64 rng(7);
  const PlaneStack s = random_planes(rng, 5, 3, 3, -2, 2);
  const fa::PropagationField zero = fa::propagation_weights(s, filled(5, 3, 3, 0));
  for (std::size_t i = 0; i < s.data.size(); ++i) EXPECT_EQ(zero.w.data[i], 0.5f * s.data[i]);
  const fa::PropagationField sat = fa::propagation_weights(s, filled(5, 3, 3, 20));
  for (std::size_t i = 0; i < s.data.size(); ++i) EXPECT_NEAR(sat.w.data[i], s.data[i], 1e-8 + 2e-9 * std::fabs(s.data[i]));
  const PlaneStack c = random_planes(rng, 5, 3, 3, -5, 5);
  const fa::PropagationField f = fa::propagation_weights(s, c);
  const PlaneStack want = propagation_weights_oracle(s, c);
  for (std::size_t i = 0; i < s.data.size(); ++i) EXPECT_NEAR(f.w.data[i], want.data[i], 1e-7);
}

TEST(CrossPropagate, EqualWeightsAverage) {
  std::mt19937_64 rng(8);
  const CostVolume vu = random_volume(rng, 5, 3, 2, 2);
  fa::PropagationField f;
  f.w = filled(5, 2, 2, 0.3f);
  const CostVolume vp = fa::cross_propagate(vu, f);
  for (int d = 0; d < 3; ++d)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        double mean = 0;
        for (int m = 0; m < 5; ++m) mean += vu.at(m, d, y, x);
        EXPECT_NEAR(vp.at(0, d, y, x), mean / 5, 1e-6);
      }
}

TEST(CrossPropagate, CenterDominance) {
  std::mt19937_64 rng(9);
  const CostVolume vu = random_volume(rng, 5, 4, 3, 3);
  fa::PropagationField f;
  f.w = filled(5, 3, 3, 0);
  for (std::size_t i = 0; i < f.w.plane_size(); ++i) f.w.data[i] = 31;
  const CostVolume vp = fa::cross_propagate(vu, f);
  for (int d = 0; d < 4; ++d)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) EXPECT_NEAR(vp.at(0, d, y, x), vu.at(0, d, y, x), 1e-6);
}

TEST(CrossPropagate, ConvexOnThousandPixels) {
  std::mt19937_64 rng(10);
  const CostVolume vu = random_volume(rng, 5, 10, 10, 10, -100, 100);
  fa::PropagationField f;
  f.w = random_planes(rng, 5, 10, 10, -40, 40);
  const CostVolume vp = fa::cross_propagate(vu, f);
  int violations = 0;
  for (int d = 0; d < 10; ++d)
    for (int i = 0; i < 100; ++i) {
      Real lo = INFINITY, hi = -INFINITY;
      for (int m = 0; m < 5; ++m) {
        lo = std::min(lo, vu.data[vu.index(m, d, 0, 0) + i]);
        hi = std::max(hi, vu.data[vu.index(m, d, 0, 0) + i]);
      }
      const Real v = vp.data[vp.index(0, d, 0, 0) + i];
      violations += v < lo || v > hi;
    }
  EXPECT_EQ(violations, 0);
}

TEST(Vap, IdentityDominantReproducesInput) {
  // D_init is a {0, 2} checkerboard; every cross neighbour carries the other
  // value. Features are one-hot per column, and f_r is arranged so that only
  // the pixel's own disparity finds its match, so the centre plane dominates.
  const int H = 6, W = 16, D = 4;
  const Real s = 100;
  auto disparity = [](int y, int x) { return (x + y) % 2 == 0 ? 0 : 2; };
  CostVolume v(1, D, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) v.at(0, disparity(y, x), y, x) = 200;
  FeatureMap fl(W, H, W), fr(W, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      fl.at(x, y, x) = s;
      if (x - disparity(y, x) >= 0) fr.at(x, y, x - disparity(y, x)) = s;
    }
  fa::VapConfig cfg;
  cfg.upsample_factor = 1;
  const fa::VapResult r = fa::volume_attention_propagation(v, fl, fr, cfg);
  for (int y = 0; y < H; ++y)
    for (int x = 2; x < W; ++x) {  // x < 2 with disparity 2 has no in-frame match
      EXPECT_EQ(r.d_init.at(y, x), static_cast<Real>(disparity(y, x)));
      for (int d = 0; d < D; ++d) EXPECT_NEAR(r.v_p.at(0, d, y, x), v.at(0, d, y, x), 1e-5) << y << "," << x;
    }
}

TEST(Vap, UpsamplesAndKeepsShapes) {
  std::mt19937_64 rng(11);
  const CostVolume low = random_volume(rng, 1, 3, 4, 5);
  const FeatureMap f = random_features(rng, 4, 8, 10);
  const fa::VapResult r = fa::volume_attention_propagation(low, f, f, fa::VapConfig{});
  EXPECT_EQ(r.v_init.disparities, 6);
  EXPECT_EQ(r.v_p.channels, 1);
  EXPECT_EQ(r.v_p.height, 8);
  EXPECT_EQ(r.field.w.planes, 5);
}

TEST(TopK, DirectSelection) {
  const fa::HypothesisSet h = fa::f2i_topk(distribution({0.1f, 0.4f, 0.05f, 0.3f, 0.15f}), 2);
  EXPECT_EQ(h.a_f, (std::vector<Real>{0.4f, 0.3f}));
  EXPECT_EQ(h.d_hyp, (std::vector<std::int32_t>{1, 3}));
}

TEST(TopK, FullSortWhenKEqualsD) {
  std::mt19937_64 rng(12);
  const ProbabilityVolume p = random_probabilities(rng, 8, 3, 3);
  const fa::HypothesisSet h = fa::f2i_topk(p, 8);
  for (std::size_t px = 0; px < 9; ++px) {
    double sum = 0;
    for (int k = 0; k < 8; ++k) sum += h.a_f[k * 9 + px];
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
  h.validate(8);
}

TEST(TopK, TiesPreferSmallerIndex) {
  const fa::HypothesisSet h = fa::f2i_topk(distribution({0.2f, 0.3f, 0.2f, 0.3f}), 3);
  EXPECT_EQ(h.d_hyp, (std::vector<std::int32_t>{1, 3, 0}));
}

TEST(TopK, MatchesSortOracleWithDuplicates) {
  std::mt19937_64 rng(13);
  ProbabilityVolume p(48, 4, 4);
  std::uniform_int_distribution<int> level(1, 5);
  for (int px = 0; px < 16; ++px) {
    double sum = 0;
    std::vector<int> raw(48);
    for (int& r : raw) sum += r = level(rng);
    for (int d = 0; d < 48; ++d) p.data[d * 16 + px] = static_cast<Real>(raw[d] / sum);
  }
  const fa::HypothesisSet got = fa::f2i_topk(p, 24), want = topk_oracle(p, 24);
  EXPECT_EQ(got.d_hyp, want.d_hyp);
  EXPECT_EQ(got.a_f, want.a_f);
  // Everything left out is no larger than the smallest kept weight.
  for (int px = 0; px < 16; ++px) {
    const Real kept_min = got.a_f[23 * 16 + px];
    std::vector<bool> kept(48);
    for (int k = 0; k < 24; ++k) kept[got.d_hyp[k * 16 + px]] = true;
    for (int d = 0; d < 48; ++d)
      if (!kept[d]) EXPECT_LE(p.data[d * 16 + px], kept_min);
  }
}

TEST(TopK, RejectsBadK) {
  const ProbabilityVolume p = distribution({0.5f, 0.5f});
  EXPECT_THROW(fa::f2i_topk(p, 0), std::invalid_argument);
  EXPECT_THROW(fa::f2i_topk(p, 3), std::invalid_argument);
}

TEST(CompactConcat, ZeroShiftAndReduction) {
  std::mt19937_64 rng(14);
  const FeatureMap l = random_features(rng, 3, 4, 6), r = random_features(rng, 3, 4, 6);
  fa::HypothesisSet zero(2, 4, 6);
  const CostVolume c0 = fa::build_compact_concat(l, r, zero);
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) EXPECT_EQ(c0.at(3 + c, k, y, x), r.at(c, y, x));

  fa::HypothesisSet one(1, 4, 6);
  std::fill(one.d_hyp.begin(), one.d_hyp.end(), 3);
  const CostVolume c1 = fa::build_compact_concat(l, r, one);
  const CostVolume full = build_concat_volume(l, r, 5);
  for (int c = 0; c < 6; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) EXPECT_EQ(c1.at(c, 0, y, x), full.at(c, 3, y, x));
}

TEST(CompactConcat, MatchesGatherOracle) {
  std::mt19937_64 rng(15);
  const FeatureMap l = random_features(rng, 4, 5, 7), r = random_features(rng, 4, 5, 7);
  const fa::HypothesisSet h = fa::f2i_topk(random_probabilities(rng, 6, 5, 7), 3);
  EXPECT_TRUE(bitwise_equal(view(fa::build_compact_concat(l, r, h)), view(compact_concat_oracle(l, r, h))));
}

TEST(FastFilter, IdentityAnnihilatorOracle) {
  std::mt19937_64 rng(16);
  const CostVolume c = random_volume(rng, 4, 3, 2, 5);
  fa::HypothesisSet h(3, 2, 5);
  std::fill(h.a_f.begin(), h.a_f.end(), 1.0f);
  EXPECT_TRUE(bitwise_equal(view(fa::fast_attention_filter(h, c)), view(c)));
  std::fill(h.a_f.begin(), h.a_f.end(), 0.0f);
  for (Real x : fa::fast_attention_filter(h, c).data) EXPECT_EQ(x, 0.0f);
  h = fa::f2i_topk(random_probabilities(rng, 5, 2, 5), 3);
  const CostVolume f = fa::fast_attention_filter(h, c);
  EXPECT_TRUE(bitwise_equal(view(f), view(fast_filter_oracle(h, c))));
  fa::HypothesisSet doubled = h;
  for (Real& a : doubled.a_f) a *= 2;
  const CostVolume f2 = fa::fast_attention_filter(doubled, c);
  for (std::size_t i = 0; i < f.data.size(); ++i) EXPECT_EQ(f2.data[i], 2 * f.data[i]);
  EXPECT_THROW(fa::fast_attention_filter(fa::HypothesisSet(2, 2, 5), c), std::invalid_argument);
}

TEST(Predict, TwoTermSoftmax) {
  CostVolume v(1, 2, 1, 1);
  v.data = {5, 1};
  fa::HypothesisSet h(2, 1, 1);
  h.d_hyp = {10, 20};
  const double sigma = std::exp(5.0) / (std::exp(5.0) + std::exp(1.0));
  EXPECT_NEAR(fa::predict_from_hypotheses(v, h, 2).data[0], 10 * sigma + 20 * (1 - sigma), 1e-5);
  EXPECT_NEAR(fa::predict_from_hypotheses(v, h, 2).data[0], 10.18, 0.01);
}

TEST(Predict, DominantValue) {
  CostVolume v(1, 3, 1, 1);
  v.data = {0, 40, -1};
  fa::HypothesisSet h(3, 1, 1);
  h.d_hyp = {4, 9, 30};
  EXPECT_NEAR(fa::predict_from_hypotheses(v, h, 2).data[0], 9.0, 1e-6);
}

TEST(Predict, FullTopMatchesOracle) {
  std::mt19937_64 rng(17);
  const CostVolume v = random_volume(rng, 1, 6, 4, 4, -3, 3);
  const fa::HypothesisSet h = fa::f2i_topk(random_probabilities(rng, 12, 4, 4), 6);
  const DisparityMap got = fa::predict_from_hypotheses(v, h, 6), want = predict_oracle(v, h, 6);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-5);
}

TEST(Predict, RejectsTopAboveK) {
  EXPECT_THROW(fa::predict_from_hypotheses(CostVolume(1, 2, 1, 1), fa::HypothesisSet(2, 1, 1), 3),
               std::invalid_argument);
}
