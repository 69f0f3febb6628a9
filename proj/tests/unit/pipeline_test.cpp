#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "costvol/io_formats.hpp"
#include "costvol/metrics.hpp"
#include "costvol/parallel.hpp"
#include "costvol/pipeline.hpp"
#include "costvol/testing/oracles.hpp"

using namespace costvol;
using namespace costvol::testing;
using pipeline::Mode;
using pipeline::PipelineConfig;

namespace {

std::span<const Real> view(const CostVolume& v) { return {v.data.data(), v.data.size()}; }
std::span<const Real> view(const FeatureMap& f) { return {f.data.data(), f.data.size()}; }
std::span<const Real> view(const DisparityMap& d) { return {d.data.data(), d.data.size()}; }

PipelineConfig config(Mode mode, int d_max, int k = 24) {
  PipelineConfig cfg;
  cfg.mode = mode;
  cfg.d_max = d_max;
  cfg.k = k;
  return cfg;
}

io::Stereogram stereogram(int disparity, std::uint64_t seed = 7) {
  return io::generate_stereogram(io::StereogramSpec::constant(128, 256, disparity, seed));
}

double interior_epe(const pipeline::PipelineOutput& out, const io::Stereogram& sg, int border) {
  return metrics::epe(out.disparity, sg.gt, interior_mask(sg.mask, border));
}

// Recovery runs shared by several tests; each is computed once.
const io::Stereogram& scene8() {
  static const io::Stereogram sg = stereogram(8);
  return sg;
}
const pipeline::PipelineOutput& acv_on_scene8() {
  static const pipeline::PipelineOutput out = pipeline::run_pipeline(scene8().left, scene8().right, config(Mode::acv, 32));
  return out;
}
const pipeline::PipelineOutput& fast_on_scene8(int k) {
  static std::map<int, pipeline::PipelineOutput> cache;
  auto it = cache.find(k);
  if (it == cache.end())
    it = cache.emplace(k, pipeline::run_pipeline(scene8().left, scene8().right, config(Mode::fast_acv, 32, k))).first;
  return it->second;
}

}  // namespace

TEST(Census, ConstantImageIsZero) {
  GrayImage img(6, 7);
  std::fill(img.data.begin(), img.data.end(), 0.4f);
  const FeatureMap f = pipeline::census_features(img, 5);
  EXPECT_EQ(f.channels, 24);
  for (Real v : f.data) EXPECT_EQ(v, 0.0f);
}

TEST(Census, VerticalStepEdge) {
  GrayImage img(5, 8);
  for (int y = 0; y < 5; ++y)
    for (int x = 4; x < 8; ++x) img.at(y, x) = 1.0f;
  const FeatureMap f = pipeline::census_features(img, 5);
  const int left_nb = 11, right_nb = 12;  // (0,-1) and (0,+1) in row-major order, centre skipped
  EXPECT_EQ(f.at(right_nb, 2, 3), 1.0f);
  EXPECT_EQ(f.at(left_nb, 2, 4), -1.0f);
  EXPECT_EQ(f.at(right_nb, 2, 5), 0.0f);
  EXPECT_EQ(f.at(left_nb, 2, 2), 0.0f);
}

TEST(Census, MatchesComparisonOracle) {
  std::mt19937_64 rng(1);
  for (int window : {3, 5, 7}) {
    const GrayImage img = random_image(rng, 9, 11);
    EXPECT_TRUE(bitwise_equal(view(pipeline::census_features(img, window)), view(census_oracle(img, window))));
  }
  EXPECT_THROW(pipeline::census_features(GrayImage(4, 4), 4), std::invalid_argument);
}

TEST(Pyramid, LayoutFollowsConfig) {
  std::mt19937_64 rng(2);
  const GrayImage img = random_image(rng, 32, 64);
  const pipeline::FeaturePyramid acv = pipeline::build_feature_pyramid(img, config(Mode::acv, 32));
  EXPECT_EQ(acv.levels[0].channels, 8 * 3);
  EXPECT_EQ(acv.levels[1].channels, 16 * 3);
  EXPECT_EQ(acv.levels[2].channels, 16 * 3);
  EXPECT_EQ(acv.quarter.channels, 32);
  for (const FeatureMap& l : acv.levels) {
    EXPECT_EQ(l.height, 8);
    EXPECT_EQ(l.width, 16);
  }
  const pipeline::FeaturePyramid fast = pipeline::build_feature_pyramid(img, config(Mode::fast_acv, 32));
  EXPECT_EQ(fast.eighth.channels, 24);
  EXPECT_EQ(fast.eighth.height, 4);
  EXPECT_EQ(fast.quarter.height, 8);
  EXPECT_THROW(pipeline::build_feature_pyramid(GrayImage(30, 64), config(Mode::acv, 32)), std::invalid_argument);
}

TEST(Pyramid, DeterministicAndConstantInvariant) {
  std::mt19937_64 rng(3);
  const GrayImage img = random_image(rng, 32, 32);
  const PipelineConfig cfg = config(Mode::acv, 16);
  const pipeline::FeaturePyramid a = pipeline::build_feature_pyramid(img, cfg);
  const pipeline::FeaturePyramid b = pipeline::build_feature_pyramid(img, cfg);
  for (int l = 0; l < 3; ++l) EXPECT_TRUE(bitwise_equal(view(a.levels[l]), view(b.levels[l])));

  GrayImage flat(32, 32);
  std::fill(flat.data.begin(), flat.data.end(), 0.6f);
  const pipeline::FeaturePyramid c = pipeline::build_feature_pyramid(flat, cfg);
  for (const FeatureMap& l : c.levels)
    for (Real v : l.data) EXPECT_EQ(v, 0.0f);
}

TEST(Box3d, IdentityConstantOracle) {
  std::mt19937_64 rng(4);
  const CostVolume v = random_volume(rng, 2, 6, 6, 6);
  EXPECT_TRUE(bitwise_equal(view(pipeline::box3d_regularize(v, 0)), view(v)));
  CostVolume flat(1, 4, 3, 5);
  std::fill(flat.data.begin(), flat.data.end(), 1.75f);
  for (Real x : pipeline::box3d_regularize(flat, 2).data) EXPECT_NEAR(x, 1.75f, 1e-6);
  EXPECT_LE(max_abs_diff(view(pipeline::box3d_regularize(v, 1)), view(box3d_oracle(v, 1))), 1e-6);
  EXPECT_THROW(pipeline::box3d_regularize(v, -1), std::invalid_argument);
}

TEST(Compress, PairProductMean) {
  CostVolume v(4, 1, 1, 1);
  v.data = {1, 2, 3, 5};
  EXPECT_FLOAT_EQ(pipeline::compress_concat_volume(v).data[0], (1 * 3 + 2 * 5) / 2.0f);
}

TEST(UpsampleDisparity, ScalesValues) {
  const DisparityMap d(4, 4, 1, 2.0f);
  const DisparityMap up = pipeline::upsample_disparity(d, 16, 16);
  EXPECT_EQ(up.height, 16);
  for (Real x : up.data) EXPECT_FLOAT_EQ(x, 8.0f);
}

TEST(NormalizePeak, ScalesEachProfileToUnitPeak) {
  CostVolume v(1, 3, 1, 3);
  // Pixel 0 peaks at 4, pixel 1 at |-8|, pixel 2 is all zero.
  v.at(0, 0, 0, 0) = 1, v.at(0, 1, 0, 0) = 4, v.at(0, 2, 0, 0) = -2;
  v.at(0, 0, 0, 1) = -8, v.at(0, 1, 0, 1) = 2, v.at(0, 2, 0, 1) = 6;
  const CostVolume n = pipeline::normalize_peak(v);
  EXPECT_EQ(n.at(0, 1, 0, 0), 1.0f);
  EXPECT_EQ(n.at(0, 2, 0, 0), -0.5f);
  EXPECT_EQ(n.at(0, 0, 0, 1), -1.0f);
  EXPECT_EQ(n.at(0, 2, 0, 1), 0.75f);
  for (int d = 0; d < 3; ++d) EXPECT_EQ(n.at(0, d, 0, 2), 0.0f);
}

TEST(NormalizePeak, ScaleInvariantAndArgmaxPreserving) {
  std::mt19937_64 rng(5);
  const CostVolume v = random_volume(rng, 1, 9, 4, 6);
  CostVolume scaled = v;
  for (Real& x : scaled.data) x *= 8.0f;
  const CostVolume a = pipeline::normalize_peak(v), b = pipeline::normalize_peak(scaled);
  EXPECT_LE(max_abs_diff(view(a), view(b)), 1e-6);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      int best_in = 0, best_out = 0;
      for (int d = 1; d < 9; ++d) {
        if (v.at(0, d, y, x) > v.at(0, best_in, y, x)) best_in = d;
        if (a.at(0, d, y, x) > a.at(0, best_out, y, x)) best_out = d;
        EXPECT_LE(std::abs(a.at(0, d, y, x)), 1.0f);
      }
      EXPECT_EQ(best_in, best_out);
    }
  EXPECT_THROW(pipeline::normalize_peak(CostVolume(2, 3, 1, 1)), std::invalid_argument);
}

TEST(Config, Validation) {
  EXPECT_THROW(config(Mode::acv, 63).validate(), std::invalid_argument);
  EXPECT_THROW(config(Mode::fast_acv, 36).validate(), std::invalid_argument);
  EXPECT_NO_THROW(config(Mode::acv, 36).validate());
  EXPECT_EQ(config(Mode::fast_acv, 32, 24).effective_k(), 8);
}

TEST(Recovery, AcvStereogram) {
  const double epe = interior_epe(acv_on_scene8(), scene8(), 32);
  RecordProperty("epe", std::to_string(epe));
  EXPECT_LT(epe, 0.5);
}

TEST(Recovery, FastStereogram) {
  const double epe = interior_epe(fast_on_scene8(24), scene8(), 32);
  EXPECT_LT(epe, 0.7);
}

TEST(Recovery, FullKMatchesDefaultK) {
  const double full = interior_epe(fast_on_scene8(8), scene8(), 32);
  const double smaller = interior_epe(fast_on_scene8(4), scene8(), 32);
  const double fixed24 = interior_epe(fast_on_scene8(24), scene8(), 32);
  EXPECT_LE(std::fabs(full - fixed24), 0.2);
  EXPECT_LT(smaller, 0.7);
}

TEST(Recovery, IdenticalImagesGiveZero) {
  for (Mode mode : {Mode::acv, Mode::fast_acv}) {
    const io::Stereogram sg = stereogram(0, 11);
    const pipeline::PipelineOutput out = pipeline::run_pipeline(sg.left, sg.left, config(mode, 32));
    EXPECT_LT(masked_median(out.disparity, EvalMask(128, 256)), 1.0) << pipeline::to_string(mode);
  }
}

TEST(Recovery, SwappedImagesCollapseToZero) {
  for (Mode mode : {Mode::acv, Mode::fast_acv}) {
    const pipeline::PipelineOutput out = pipeline::run_pipeline(scene8().right, scene8().left, config(mode, 32));
    for (Real x : out.disparity.data) EXPECT_GE(x, 0.0f);
    EXPECT_LT(masked_median(out.disparity, interior_mask(EvalMask(128, 256), 32)), 2.0) << pipeline::to_string(mode);
  }
}

TEST(Recovery, ShiftEquivariance) {
  const io::Stereogram sg12 = stereogram(12);
  for (Mode mode : {Mode::acv, Mode::fast_acv}) {
    const PipelineConfig cfg = config(mode, 32);
    const pipeline::PipelineOutput at8 = mode == Mode::acv ? acv_on_scene8() : fast_on_scene8(24);
    const pipeline::PipelineOutput at12 = pipeline::run_pipeline(sg12.left, sg12.right, cfg);
    const EvalMask inner = interior_mask(EvalMask(128, 256), 32);
    const double shift = masked_median(at12.disparity, inner) - masked_median(at8.disparity, inner);
    EXPECT_NEAR(shift, 4.0, 0.5) << pipeline::to_string(mode);
  }
}

TEST(Recovery, OutputWithinSearchRange) {
  for (const pipeline::PipelineOutput* out : {&acv_on_scene8(), &fast_on_scene8(24)})
    for (Real x : out->disparity.data) {
      EXPECT_GE(x, 0.0f);
      EXPECT_LE(x, 31.0f);
    }
}

TEST(Determinism, ThreadCountDoesNotChangeBits) {
  for (Mode mode : {Mode::acv, Mode::fast_acv}) {
    DisparityMap one, eight;
    {
      ThreadLimit limit(1);
      one = pipeline::run_pipeline(scene8().left, scene8().right, config(mode, 32)).disparity;
    }
    {
      ThreadLimit limit(8);
      eight = pipeline::run_pipeline(scene8().left, scene8().right, config(mode, 32)).disparity;
    }
    EXPECT_TRUE(bitwise_equal(view(one), view(eight))) << pipeline::to_string(mode);
  }
}

TEST(Counts, CompactIsHalfAtDefaultK) {
  const pipeline::VolumeCounts acv = pipeline::analytic_volume_counts(config(Mode::acv, 192), 512, 960);
  const pipeline::VolumeCounts fast = pipeline::analytic_volume_counts(config(Mode::fast_acv, 192, 24), 512, 960);
  EXPECT_EQ(2 * fast.concat, acv.concat);
  EXPECT_EQ(acv.correlation, 40u * 48 * 128 * 240);
  EXPECT_EQ(fast.correlation, 12u * 24 * 64 * 120);
}

TEST(Counts, CompactScalesLinearlyInK) {
  const std::size_t base = pipeline::analytic_volume_counts(config(Mode::fast_acv, 192, 1), 512, 960).concat;
  for (int k : {16, 24, 32, 48})
    EXPECT_EQ(pipeline::analytic_volume_counts(config(Mode::fast_acv, 192, k), 512, 960).concat, base * k);
}

TEST(Counts, MeasuredMatchesAnalytic) {
  for (const auto& [out, cfg] : {std::pair{&acv_on_scene8(), config(Mode::acv, 32)},
                                 std::pair{&fast_on_scene8(4), config(Mode::fast_acv, 32, 4)}}) {
    const pipeline::VolumeCounts want = pipeline::analytic_volume_counts(cfg, 128, 256);
    EXPECT_EQ(out->volumes.correlation, want.correlation);
    EXPECT_EQ(out->volumes.concat, want.concat);
    EXPECT_EQ(out->volumes.filtered, want.filtered);
  }
}

TEST(Counts, FastPeakBelowAcvPeak) {
  EXPECT_LT(fast_on_scene8(8).volumes.peak_live, acv_on_scene8().volumes.peak_live);
  const io::Stereogram sg = stereogram(8, 5);
  const auto acv = pipeline::run_pipeline(sg.left, sg.right, config(Mode::acv, 192));
  const auto fast = pipeline::run_pipeline(sg.left, sg.right, config(Mode::fast_acv, 192, 24));
  EXPECT_LT(fast.volumes.peak_live, acv.volumes.peak_live);
}

TEST(Pipeline, RejectsMismatchedImages) {
  EXPECT_THROW(pipeline::run_pipeline(GrayImage(64, 64), GrayImage(64, 72), config(Mode::acv, 32)),
               std::invalid_argument);
}
