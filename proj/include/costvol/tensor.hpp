#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace costvol {

using Real = float;

// ---------------------------------------------------------------------------
// Volume allocation accounting
//
// CostVolume and ProbabilityVolume buffers are allocated through
// TrackedAllocator, which reports element counts to the innermost
// AllocationScope active on the allocating thread and to all enclosing
// scopes. Allocations made outside any scope are not counted.
// ---------------------------------------------------------------------------

struct AllocationStats {
  std::size_t live_elements = 0;
  std::size_t peak_elements = 0;
  std::size_t total_elements = 0;
  std::size_t allocations = 0;
};

namespace detail {

class TrackerNode {
 public:
  explicit TrackerNode(std::shared_ptr<TrackerNode> parent) : parent_(std::move(parent)) {}

  void on_allocate(std::size_t n);
  void on_deallocate(std::size_t n);
  AllocationStats snapshot() const;

 private:
  std::shared_ptr<TrackerNode> parent_;
  mutable std::mutex mutex_;
  AllocationStats stats_;
};

std::shared_ptr<TrackerNode> current_tracker();

}  // namespace detail

/// RAII scope that counts volume allocations made on this thread while alive.
/// Scopes nest; an allocation is charged to every enclosing scope.
class AllocationScope {
 public:
  AllocationScope();
  ~AllocationScope();
  AllocationScope(const AllocationScope&) = delete;
  AllocationScope& operator=(const AllocationScope&) = delete;

  AllocationStats stats() const { return node_->snapshot(); }

  // Elements allocated inside the scope that are still alive: the storage of
  // whatever the scoped computation returned.
  std::size_t retained_elements() const { return stats().live_elements; }

 private:
  std::shared_ptr<detail::TrackerNode> node_;
  std::shared_ptr<detail::TrackerNode> previous_;
};

template <class T>
class TrackedAllocator {
 public:
  using value_type = T;
  using propagate_on_container_move_assignment = std::true_type;
  using propagate_on_container_copy_assignment = std::true_type;
  using propagate_on_container_swap = std::true_type;
  using is_always_equal = std::false_type;

  TrackedAllocator() : node_(detail::current_tracker()) {}
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>& other) noexcept : node_(other.node()) {}

  // Copies of a volume are charged to whoever is tracking at copy time.
  TrackedAllocator select_on_container_copy_construction() const { return TrackedAllocator(); }

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>().allocate(n);
    if (node_) node_->on_allocate(n);
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    if (node_) node_->on_deallocate(n);
    std::allocator<T>().deallocate(p, n);
  }

  const std::shared_ptr<detail::TrackerNode>& node() const noexcept { return node_; }

  template <class U>
  bool operator==(const TrackedAllocator<U>& other) const noexcept {
    return node_ == other.node();
  }

 private:
  std::shared_ptr<detail::TrackerNode> node_;
};

using VolumeBuffer = std::vector<Real, TrackedAllocator<Real>>;

// ---------------------------------------------------------------------------
// Domain containers. All are row-major with width as the fastest axis.
// ---------------------------------------------------------------------------

/// Per-pixel feature vectors, laid out (channel, row, col).
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  int resolution_scale = 1;
  std::vector<Real> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, int scale = 1);

  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  Real& at(int c, int y, int x) { return data[index(c, y, x)]; }
  Real at(int c, int y, int x) const { return data[index(c, y, x)]; }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  void validate() const;
};

/// 4D volume laid out (channel, disparity, row, col).
struct CostVolume {
  int channels = 0;
  int disparities = 0;
  int height = 0;
  int width = 0;
  int resolution_scale = 1;
  VolumeBuffer data;

  CostVolume() = default;
  CostVolume(int c, int d, int h, int w, int scale = 1);

  std::size_t index(int c, int d, int y, int x) const {
    return ((static_cast<std::size_t>(c) * disparities + d) * height + y) * width + x;
  }
  Real& at(int c, int d, int y, int x) { return data[index(c, d, y, x)]; }
  Real at(int c, int d, int y, int x) const { return data[index(c, d, y, x)]; }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t element_count() const { return data.size(); }
  bool same_shape(const CostVolume& o) const {
    return channels == o.channels && disparities == o.disparities && height == o.height &&
           width == o.width;
  }
  void validate() const;
};

/// Per-pixel distribution over disparities, laid out (disparity, row, col).
struct ProbabilityVolume {
  int disparities = 0;
  int height = 0;
  int width = 0;
  int resolution_scale = 1;
  VolumeBuffer data;

  ProbabilityVolume() = default;
  ProbabilityVolume(int d, int h, int w, int scale = 1);

  std::size_t index(int d, int y, int x) const {
    return (static_cast<std::size_t>(d) * height + y) * width + x;
  }
  Real& at(int d, int y, int x) { return data[index(d, y, x)]; }
  Real at(int d, int y, int x) const { return data[index(d, y, x)]; }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  // Throws unless each pixel sums to 1 within `tolerance`.
  void validate(double tolerance = 1e-5) const;
};

/// Disparities in pixels of the grid at `resolution_scale`.
struct DisparityMap {
  int height = 0;
  int width = 0;
  int resolution_scale = 1;
  std::vector<Real> data;

  DisparityMap() = default;
  DisparityMap(int h, int w, int scale = 1, Real fill = 0);

  Real& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  Real at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
};

/// A stack of same-sized scalar planes, laid out (plane, row, col). Holds the
/// per-pixel cross samples (disparities, scores, confidences) and single
/// scalar maps such as uncertainty.
struct PlaneStack {
  int planes = 0;
  int height = 0;
  int width = 0;
  std::vector<Real> data;

  PlaneStack() = default;
  PlaneStack(int m, int h, int w, Real fill = 0);

  std::size_t index(int m, int y, int x) const {
    return (static_cast<std::size_t>(m) * height + y) * width + x;
  }
  Real& at(int m, int y, int x) { return data[index(m, y, x)]; }
  Real at(int m, int y, int x) const { return data[index(m, y, x)]; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
};

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<Real> data;  // intensities in [0, 1]

  GrayImage() = default;
  GrayImage(int h, int w, Real fill = 0);

  Real& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  Real at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  void validate() const;
};

struct EvalMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> valid;

  EvalMask() = default;
  EvalMask(int h, int w, bool fill = true);

  bool at(int y, int x) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { valid[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
};

}  // namespace costvol
