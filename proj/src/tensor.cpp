#include "costvol/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace costvol {

namespace detail {
namespace {
thread_local std::shared_ptr<TrackerNode> t_current;
}

std::shared_ptr<TrackerNode> current_tracker() { return t_current; }

void TrackerNode::on_allocate(std::size_t n) {
  for (TrackerNode* node = this; node != nullptr; node = node->parent_.get()) {
    std::lock_guard lock(node->mutex_);
    node->stats_.live_elements += n;
    node->stats_.total_elements += n;
    node->stats_.allocations += 1;
    node->stats_.peak_elements = std::max(node->stats_.peak_elements, node->stats_.live_elements);
  }
}

void TrackerNode::on_deallocate(std::size_t n) {
  for (TrackerNode* node = this; node != nullptr; node = node->parent_.get()) {
    std::lock_guard lock(node->mutex_);
    node->stats_.live_elements -= std::min(n, node->stats_.live_elements);
  }
}

AllocationStats TrackerNode::snapshot() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

}  // namespace detail

AllocationScope::AllocationScope()
    : node_(std::make_shared<detail::TrackerNode>(detail::t_current)),
      previous_(detail::t_current) {
  detail::t_current = node_;
}

AllocationScope::~AllocationScope() { detail::t_current = previous_; }

namespace {

void require_dims(std::initializer_list<int> dims, const char* what) {
  for (int d : dims) {
    if (d < 0) throw std::invalid_argument(std::string(what) + ": negative dimension");
  }
}

template <class Range>
void require_finite(const Range& values, const char* what) {
  for (Real v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

}  // namespace

FeatureMap::FeatureMap(int c, int h, int w, int scale)
    : channels(c), height(h), width(w), resolution_scale(scale) {
  require_dims({c, h, w}, "FeatureMap");
  data.assign(static_cast<std::size_t>(c) * h * w, Real{0});
}

void FeatureMap::validate() const {
  if (data.size() != static_cast<std::size_t>(channels) * height * width)
    throw std::invalid_argument("FeatureMap: data length does not match shape");
  require_finite(data, "FeatureMap");
}

CostVolume::CostVolume(int c, int d, int h, int w, int scale)
    : channels(c), disparities(d), height(h), width(w), resolution_scale(scale) {
  require_dims({c, d, h, w}, "CostVolume");
  data.assign(static_cast<std::size_t>(c) * d * h * w, Real{0});
}

void CostVolume::validate() const {
  if (data.size() != static_cast<std::size_t>(channels) * disparities * height * width)
    throw std::invalid_argument("CostVolume: data length does not match shape");
  require_finite(data, "CostVolume");
}

ProbabilityVolume::ProbabilityVolume(int d, int h, int w, int scale)
    : disparities(d), height(h), width(w), resolution_scale(scale) {
  require_dims({d, h, w}, "ProbabilityVolume");
  data.assign(static_cast<std::size_t>(d) * h * w, Real{0});
}

void ProbabilityVolume::validate(double tolerance) const {
  if (data.size() != static_cast<std::size_t>(disparities) * height * width)
    throw std::invalid_argument("ProbabilityVolume: data length does not match shape");
  const std::size_t plane = plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    double sum = 0.0;
    for (int d = 0; d < disparities; ++d) {
      const Real v = data[d * plane + p];
      if (!(v >= 0) || !std::isfinite(v))
        throw std::invalid_argument("ProbabilityVolume: negative or non-finite probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance)
      throw std::invalid_argument("ProbabilityVolume: pixel distribution does not sum to 1");
  }
}

DisparityMap::DisparityMap(int h, int w, int scale, Real fill)
    : height(h), width(w), resolution_scale(scale) {
  require_dims({h, w}, "DisparityMap");
  data.assign(static_cast<std::size_t>(h) * w, fill);
}

PlaneStack::PlaneStack(int m, int h, int w, Real fill) : planes(m), height(h), width(w) {
  require_dims({m, h, w}, "PlaneStack");
  data.assign(static_cast<std::size_t>(m) * h * w, fill);
}

GrayImage::GrayImage(int h, int w, Real fill) : height(h), width(w) {
  require_dims({h, w}, "GrayImage");
  data.assign(static_cast<std::size_t>(h) * w, fill);
}

void GrayImage::validate() const {
  if (data.size() != static_cast<std::size_t>(height) * width)
    throw std::invalid_argument("GrayImage: data length does not match shape");
  for (Real v : data) {
    if (!std::isfinite(v) || v < 0 || v > 1)
      throw std::invalid_argument("GrayImage: intensity outside [0, 1]");
  }
}

EvalMask::EvalMask(int h, int w, bool fill) : height(h), width(w) {
  require_dims({h, w}, "EvalMask");
  valid.assign(static_cast<std::size_t>(h) * w, fill ? 1 : 0);
}

std::size_t EvalMask::count() const {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

}  // namespace costvol
