#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>

#include "costvol/acv.hpp"
#include "costvol/fast_acv.hpp"
#include "costvol/tensor.hpp"

namespace costvol::pipeline {

enum class Mode { acv, fast_acv };
enum class FeatureBackend { census, gradient };
enum class RegularizerKind { identity, box3d };

std::string_view to_string(Mode m);
std::string_view to_string(FeatureBackend b);
std::string_view to_string(RegularizerKind r);
Mode parse_mode(std::string_view s);
FeatureBackend parse_feature_backend(std::string_view s);
RegularizerKind parse_regularizer(std::string_view s);

struct PipelineConfig {
  Mode mode = Mode::fast_acv;
  int d_max = 192;
  acv::AcvConfig acv;          // d_max is taken from the field above
  // Pixel-grid alignment keeps upsampled disparity bins at exact multiples
  // of the coarse ones, which the rescaled regression relies on.
  fast_acv::VapConfig vap{.alignment = UpsampleAlignment::pixel_grid};
  int k = 24;                  // clamped to d_max / 4
  FeatureBackend feature_backend = FeatureBackend::census;
  int census_window = 5;
  RegularizerKind regularizer = RegularizerKind::identity;
  int box_radius = 1;

  // Layout of the hand-crafted features fed to the correlation stages.
  int acv_channels_per_group = 3;   // channels per group in l1/l2/l3
  int fast_groups = 12;             // groups of the 1/8-resolution correlation
  int fast_channels_per_group = 2;

  // Multiplies matching costs before every softmax; stands in for the
  // sharpening a trained aggregation network learns.
  Real logit_scale = 64.0f;
  // Same for the coarse fast_acv volume feeding propagation and top-K. Kept
  // low so the hypothesis weights stay soft and the fine stage decides.
  Real hypothesis_logit_scale = 1.0f;
  int top = 2;                      // values kept by the final fast prediction

  acv::AcvConfig acv_config() const;
  int effective_k() const;
  void validate() const;
};

/// Census transform with a `window` x `window` neighbourhood: one channel per
/// neighbour (row-major, centre skipped) holding sign(I(nb) - I(centre)) as
/// -1, 0 or +1. Borders are replicated. Throws on an even window.
FeatureMap census_features(const GrayImage& image, int window = 5);

/// Continuous variant: channel values are the raw differences I(nb) - I(centre).
FeatureMap gradient_features(const GrayImage& image, int window = 5);

/// Block-mean downsampling; a trailing partial block averages what it covers.
GrayImage box_downsample(const GrayImage& image, int factor);

/// Half-pixel bilinear resize of every channel.
FeatureMap resize_bilinear(const FeatureMap& f, int height, int width);

/// Cycles through the source channels until `channels` are filled.
FeatureMap tile_channels(const FeatureMap& f, int channels);

struct FeaturePyramid {
  FeatureMap quarter;               // acv.concat_channels at 1/4 resolution
  FeatureMap eighth;                // fast mode only: fast_groups * fast_channels_per_group at 1/8
  std::array<FeatureMap, 3> levels; // acv mode only: l1, l2, l3 at 1/4 resolution
};

/// Features for the configured mode. l1 is computed on the 1/4 image; l2 and
/// l3 on 2x and 4x coarser images, resized back to 1/4. Throws unless both
/// image dimensions are divisible by 8.
FeaturePyramid build_feature_pyramid(const GrayImage& image, const PipelineConfig& cfg);

/// Separable mean filter over disparity, rows and columns with windows of
/// side 2 * radius + 1 and edge replication. radius 0 is the identity.
CostVolume box3d_regularize(const CostVolume& v, int radius);

class Box3dRegularizer final : public acv::VolumeRegularizer {
 public:
  explicit Box3dRegularizer(int radius) : radius_(radius) {}
  CostVolume apply(const CostVolume& v) const override { return box3d_regularize(v, radius_); }

 private:
  int radius_;
};

std::unique_ptr<acv::VolumeRegularizer> make_regularizer(const PipelineConfig& cfg);

/// Reduces a 2C-channel concatenation-style volume to one channel:
/// out(d, y, x) = (1/C) sum_i v(i, d, y, x) * v(C + i, d, y, x).
CostVolume compress_concat_volume(const CostVolume& v);

/// Divides every pixel's single-channel cost profile by its largest
/// magnitude over disparity, so the best match always scores 1 before the
/// logit scale is applied. All-zero profiles stay zero.
CostVolume normalize_peak(const CostVolume& v);

/// Bilinear (half-pixel) upsampling of a low-resolution disparity map to
/// `height` x `width`; values are multiplied by the resolution ratio.
DisparityMap upsample_disparity(const DisparityMap& d, int height, int width);

struct StageTimes {
  double feature_ms = 0;
  double construction_ms = 0;
  double aggregation_ms = 0;
  double prediction_ms = 0;
  double total_ms() const { return feature_ms + construction_ms + aggregation_ms + prediction_ms; }
};

/// Element counts measured with AllocationScope during a run.
struct VolumeCounts {
  std::size_t correlation = 0;  // C_patch (acv) or the 1/8 group correlation (fast)
  std::size_t concat = 0;       // full (acv) or compact (fast) concatenation volume
  std::size_t filtered = 0;     // attention-filtered volume
  std::size_t peak_live = 0;    // high-water mark of live volume elements
};

/// Closed-form element counts of the volumes a run of `cfg` on a
/// `height` x `width` pair allocates; peak_live is left at 0.
VolumeCounts analytic_volume_counts(const PipelineConfig& cfg, int height, int width);

struct PipelineOutput {
  DisparityMap disparity;            // full resolution
  DisparityMap attention_disparity;  // d_att (acv) or hypothesis-weighted d_att^F, full resolution
  StageTimes times;
  VolumeCounts volumes;
};

PipelineOutput run_acv_pipeline(const GrayImage& left, const GrayImage& right, const PipelineConfig& cfg);
PipelineOutput run_fast_acv_pipeline(const GrayImage& left, const GrayImage& right, const PipelineConfig& cfg);

/// Dispatches on cfg.mode.
PipelineOutput run_pipeline(const GrayImage& left, const GrayImage& right, const PipelineConfig& cfg);

}  // namespace costvol::pipeline
