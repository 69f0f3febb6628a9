#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "costvol/tensor.hpp"

namespace costvol::io {

using Bytes = std::vector<std::uint8_t>;

enum class FormatErrorKind { bad_magic, unsupported, bad_header, truncated, io };

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Portable Float Map, single channel ("Pf"). Rows are stored bottom-to-top;
// a negative scale marks little-endian samples. The writer always emits
// little-endian with scale -1.
DisparityMap read_pfm(std::span<const std::uint8_t> bytes);
Bytes write_pfm(const DisparityMap& map);

// KITTI disparity PNG: 16-bit grayscale, disparity = raw / 256, raw 0 = invalid.
struct MaskedDisparity {
  DisparityMap disparity;
  EvalMask mask;
};
MaskedDisparity read_kitti_disp_png(std::span<const std::uint8_t> bytes);
// Valid pixels are rounded to the nearest 1/256 and clamped to [1, 65535] so
// they never collide with the invalid sentinel.
Bytes write_kitti_disp_png(const DisparityMap& map, const EvalMask& mask);

// Grayscale input images: binary/ASCII PGM or 8/16-bit grayscale PNG.
GrayImage read_gray_image(std::span<const std::uint8_t> bytes);
Bytes write_pgm(const GrayImage& image);
Bytes write_png_gray8(const GrayImage& image);

// Disparity file by content: PFM (non-finite samples masked out) or KITTI PNG.
MaskedDisparity read_disparity(std::span<const std::uint8_t> bytes);
// Mask image: any grayscale image, non-zero = valid.
EvalMask read_mask(std::span<const std::uint8_t> bytes);

/// Random-dot stereogram description. `disparity` is a per-pixel integer map
/// (row-major, height * width); when empty, `constant_disparity` is used.
struct StereogramSpec {
  int height = 128;
  int width = 256;
  std::vector<int> disparity;
  int constant_disparity = 0;
  double dot_density = 1.0;
  std::uint64_t seed = 0;

  static StereogramSpec constant(int height, int width, int disparity, std::uint64_t seed);
  /// Columns < boundary get `left_disparity`, the rest `right_disparity`.
  static StereogramSpec two_region(int height, int width, int left_disparity, int right_disparity, int boundary,
                                   std::uint64_t seed);

  int disparity_at(int y, int x) const;
  void validate() const;
};

struct Stereogram {
  GrayImage left;
  GrayImage right;
  DisparityMap gt;
  EvalMask mask;  // false where the left pixel is occluded or leaves the frame
};

/// Left-referenced synthesis: right(y, x - gt(y, x)) = left(y, x) on valid
/// pixels. Nearer (larger disparity) surfaces win when they collide; right
/// pixels no left pixel reaches get independent texture. Reproducible per seed.
Stereogram generate_stereogram(const StereogramSpec& spec);

}  // namespace costvol::io
