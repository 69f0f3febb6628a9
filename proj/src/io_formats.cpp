#include "costvol/io_formats.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

namespace costvol::io {
namespace {

// ---------------------------------------------------------------- helpers --

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Next whitespace-delimited token, skipping '#' comments (PGM).
  std::string token(bool allow_comments) {
    skip_space(allow_comments);
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
    if (out.empty()) throw FormatError(FormatErrorKind::truncated, "truncated header");
    return out;
  }

  // Consumes the single whitespace byte that terminates a header.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw FormatError(FormatErrorKind::bad_header, "malformed header terminator");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

 private:
  void skip_space(bool allow_comments) {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (allow_comments && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

int parse_dim(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size() || v <= 0) throw std::invalid_argument(what);
    return v;
  } catch (const std::exception&) {
    throw FormatError(FormatErrorKind::bad_header, std::string("invalid ") + what + " in header");
  }
}

int parse_sample(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(FormatErrorKind::bad_header, "invalid PGM sample");
}

std::uint32_t load_u32(const std::uint8_t* p, bool little) {
  return little ? (std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                   std::uint32_t(p[3]) << 24)
                : (std::uint32_t(p[3]) | std::uint32_t(p[2]) << 8 | std::uint32_t(p[1]) << 16 |
                   std::uint32_t(p[0]) << 24);
}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

// ------------------------------------------------------------------- PNG --

struct PngRaster {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint8_t> pixels;  // rows packed as stored (16-bit big-endian)
};

struct PngSource {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->offset + n > src->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, src->bytes.data() + src->offset, n);
  src->offset += n;
}

void png_write_callback(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_callback(png_structp) {}

// libpng reports errors by longjmp; nothing with a destructor is created
// between setjmp and the libpng calls below.
bool decode_png(std::span<const std::uint8_t> bytes, PngRaster& raster, std::vector<png_bytep>& rows) {
  PngSource src{bytes, 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &src, png_read_callback);
  png_read_info(png, info);
  raster.width = static_cast<int>(png_get_image_width(png, info));
  raster.height = static_cast<int>(png_get_image_height(png, info));
  raster.bit_depth = png_get_bit_depth(png, info);
  raster.color_type = png_get_color_type(png, info);
  if (raster.color_type == PNG_COLOR_TYPE_GRAY && raster.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  raster.pixels.resize(stride * raster.height);
  rows.resize(raster.height);
  for (int y = 0; y < raster.height; ++y) rows[y] = raster.pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (raster.bit_depth < 8) raster.bit_depth = 8;
  return true;
}

PngRaster read_png(std::span<const std::uint8_t> bytes) {
  PngRaster raster;
  std::vector<png_bytep> rows;
  if (!decode_png(bytes, raster, rows)) throw FormatError(FormatErrorKind::truncated, "corrupt or truncated PNG");
  return raster;
}

bool encode_png(Bytes& out, int width, int height, int bit_depth, std::vector<png_bytep>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_callback, png_flush_callback);
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

Bytes write_png_gray(int width, int height, int bit_depth, std::vector<std::uint8_t>& packed) {
  const std::size_t stride = static_cast<std::size_t>(width) * (bit_depth / 8);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = packed.data() + stride * y;
  Bytes out;
  if (!encode_png(out, width, height, bit_depth, rows)) throw FormatError(FormatErrorKind::io, "PNG encoding failed");
  return out;
}

// ------------------------------------------------------------------- RNG --

// Stateless counter-based generator: each (seed, stream, counter) triple maps
// to an independent uniform sample.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  const std::uint64_t bits = mix64(mix64(seed ^ mix64(stream)) ^ counter);
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

Real texture(const StereogramSpec& spec, std::uint64_t stream, std::uint64_t counter) {
  const bool dot = counter_uniform(spec.seed, stream * 2, counter) < spec.dot_density;
  return dot ? static_cast<Real>(counter_uniform(spec.seed, stream * 2 + 1, counter)) : Real{0};
}

}  // namespace

// ------------------------------------------------------------- file I/O --

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::io, "write failed for " + path.string());
}

// ------------------------------------------------------------------- PFM --

DisparityMap read_pfm(std::span<const std::uint8_t> bytes) {
  HeaderReader header(bytes);
  const std::string magic = header.token(false);
  if (magic == "PF") throw FormatError(FormatErrorKind::unsupported, "color PFM unsupported");
  if (magic != "Pf") throw FormatError(FormatErrorKind::bad_magic, "not a PFM file");
  const int width = parse_dim(header.token(false), "width");
  const int height = parse_dim(header.token(false), "height");
  const std::string scale_text = header.token(false);
  double scale = 0;
  try {
    scale = std::stod(scale_text);
  } catch (const std::exception&) {
    throw FormatError(FormatErrorKind::bad_header, "invalid PFM scale");
  }
  if (scale == 0 || !std::isfinite(scale)) throw FormatError(FormatErrorKind::bad_header, "invalid PFM scale");
  header.end_of_header();

  const bool little = scale < 0;
  const std::size_t count = static_cast<std::size_t>(width) * height;
  const std::size_t start = header.position();
  if (bytes.size() - start < count * 4) throw FormatError(FormatErrorKind::truncated, "truncated PFM payload");

  DisparityMap out(height, width);
  const std::uint8_t* p = bytes.data() + start;
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x, p += 4) out.at(y, x) = std::bit_cast<float>(load_u32(p, little));
  }
  return out;
}

Bytes write_pfm(const DisparityMap& map) {
  const std::string header = "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1\n";
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + map.size() * 4);
  for (int y = map.height - 1; y >= 0; --y) {
    for (int x = 0; x < map.width; ++x) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(map.at(y, x)));
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

// ------------------------------------------------------------ KITTI PNG --

MaskedDisparity read_kitti_disp_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) throw FormatError(FormatErrorKind::bad_magic, "not a PNG file");
  const PngRaster raster = read_png(bytes);
  if (raster.color_type != PNG_COLOR_TYPE_GRAY || raster.bit_depth != 16)
    throw FormatError(FormatErrorKind::unsupported, "KITTI disparity must be a 16-bit single-channel PNG");
  MaskedDisparity out{DisparityMap(raster.height, raster.width), EvalMask(raster.height, raster.width)};
  for (std::size_t i = 0; i < out.disparity.size(); ++i) {
    const unsigned raw = unsigned(raster.pixels[2 * i]) << 8 | raster.pixels[2 * i + 1];
    out.disparity.data[i] = static_cast<Real>(raw / 256.0);
    out.mask.valid[i] = raw != 0;
  }
  return out;
}

Bytes write_kitti_disp_png(const DisparityMap& map, const EvalMask& mask) {
  if (mask.height != map.height || mask.width != map.width)
    throw std::invalid_argument("write_kitti_disp_png: mask shape mismatch");
  std::vector<std::uint8_t> packed(map.size() * 2);
  for (std::size_t i = 0; i < map.size(); ++i) {
    unsigned raw = 0;
    if (mask.valid[i]) {
      const double scaled = std::round(static_cast<double>(map.data[i]) * 256.0);
      raw = static_cast<unsigned>(std::clamp(std::isfinite(scaled) ? scaled : 65535.0, 1.0, 65535.0));
    }
    packed[2 * i] = static_cast<std::uint8_t>(raw >> 8);
    packed[2 * i + 1] = static_cast<std::uint8_t>(raw & 0xff);
  }
  return write_png_gray(map.width, map.height, 16, packed);
}

// ------------------------------------------------------------ grayscale --

GrayImage read_gray_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) {
    const PngRaster raster = read_png(bytes);
    if (raster.color_type != PNG_COLOR_TYPE_GRAY)
      throw FormatError(FormatErrorKind::unsupported, "only grayscale PNG input is supported");
    GrayImage img(raster.height, raster.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      img.data[i] = raster.bit_depth == 16
                        ? static_cast<Real>((unsigned(raster.pixels[2 * i]) << 8 | raster.pixels[2 * i + 1]) / 65535.0)
                        : static_cast<Real>(raster.pixels[i] / 255.0);
    }
    return img;
  }

  HeaderReader header(bytes);
  const std::string magic = header.token(true);
  if (magic != "P5" && magic != "P2") throw FormatError(FormatErrorKind::bad_magic, "not a PGM or PNG image");
  const int width = parse_dim(header.token(true), "width");
  const int height = parse_dim(header.token(true), "height");
  const int maxval = parse_dim(header.token(true), "maxval");
  if (maxval > 65535) throw FormatError(FormatErrorKind::bad_header, "PGM maxval above 65535");

  GrayImage img(height, width);
  const std::size_t count = img.data.size();
  if (magic == "P2") {
    for (std::size_t i = 0; i < count; ++i)
      img.data[i] = static_cast<Real>(std::min(1.0, parse_sample(header.token(true)) / double(maxval)));
    return img;
  }
  header.end_of_header();
  const std::size_t depth = maxval > 255 ? 2 : 1;
  const std::size_t start = header.position();
  if (bytes.size() - start < count * depth) throw FormatError(FormatErrorKind::truncated, "truncated PGM payload");
  const std::uint8_t* p = bytes.data() + start;
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = depth == 2 ? (unsigned(p[2 * i]) << 8 | p[2 * i + 1]) : p[i];
    img.data[i] = static_cast<Real>(std::min(1.0, v / double(maxval)));
  }
  return img;
}

Bytes write_pgm(const GrayImage& image) {
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  for (Real v : image.data)
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0)));
  return out;
}

Bytes write_png_gray8(const GrayImage& image) {
  std::vector<std::uint8_t> packed(image.data.size());
  for (std::size_t i = 0; i < packed.size(); ++i)
    packed[i] = static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(image.data[i]), 0.0, 1.0) * 255.0));
  return write_png_gray(image.width, image.height, 8, packed);
}

MaskedDisparity read_disparity(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return read_kitti_disp_png(bytes);
  MaskedDisparity out{read_pfm(bytes), EvalMask()};
  out.mask = EvalMask(out.disparity.height, out.disparity.width);
  for (std::size_t i = 0; i < out.disparity.size(); ++i) out.mask.valid[i] = std::isfinite(out.disparity.data[i]);
  return out;
}

EvalMask read_mask(std::span<const std::uint8_t> bytes) {
  const GrayImage img = read_gray_image(bytes);
  EvalMask mask(img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i) mask.valid[i] = img.data[i] > 0;
  return mask;
}

// ----------------------------------------------------------- stereogram --

StereogramSpec StereogramSpec::constant(int height, int width, int disparity, std::uint64_t seed) {
  StereogramSpec s;
  s.height = height;
  s.width = width;
  s.constant_disparity = disparity;
  s.seed = seed;
  return s;
}

StereogramSpec StereogramSpec::two_region(int height, int width, int left_disparity, int right_disparity,
                                          int boundary, std::uint64_t seed) {
  StereogramSpec s = constant(height, width, 0, seed);
  s.disparity.resize(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      s.disparity[static_cast<std::size_t>(y) * width + x] = x < boundary ? left_disparity : right_disparity;
  return s;
}

int StereogramSpec::disparity_at(int y, int x) const {
  return disparity.empty() ? constant_disparity : disparity[static_cast<std::size_t>(y) * width + x];
}

void StereogramSpec::validate() const {
  if (height <= 0 || width <= 0) throw std::invalid_argument("StereogramSpec: dimensions must be positive");
  if (!(dot_density > 0 && dot_density <= 1)) throw std::invalid_argument("StereogramSpec: dot_density must be in (0, 1]");
  if (!disparity.empty() && disparity.size() != static_cast<std::size_t>(height) * width)
    throw std::invalid_argument("StereogramSpec: disparity map size mismatch");
  int max_d = constant_disparity, min_d = constant_disparity;
  if (!disparity.empty()) {
    const auto [lo, hi] = std::minmax_element(disparity.begin(), disparity.end());
    min_d = *lo;
    max_d = *hi;
  }
  if (min_d < 0) throw std::invalid_argument("StereogramSpec: negative disparity");
  if (4 * max_d >= width) throw std::invalid_argument("StereogramSpec: max disparity must be below width / 4");
}

Stereogram generate_stereogram(const StereogramSpec& spec) {
  spec.validate();
  const int H = spec.height, W = spec.width;
  Stereogram s{GrayImage(H, W), GrayImage(H, W), DisparityMap(H, W), EvalMask(H, W, false)};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::uint64_t counter = static_cast<std::uint64_t>(y) * W + x;
      s.left.at(y, x) = texture(spec, 0, counter);
      s.right.at(y, x) = texture(spec, 1, counter);
      s.gt.at(y, x) = static_cast<Real>(spec.disparity_at(y, x));
    }
  }

  std::vector<int> order(W), owner(W);
  for (int y = 0; y < H; ++y) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return spec.disparity_at(y, a) < spec.disparity_at(y, b); });
    std::fill(owner.begin(), owner.end(), -1);
    for (int x : order) {
      const int xr = x - spec.disparity_at(y, x);
      if (xr < 0) continue;
      s.right.at(y, xr) = s.left.at(y, x);
      owner[xr] = x;
    }
    for (int x = 0; x < W; ++x) {
      const int xr = x - spec.disparity_at(y, x);
      s.mask.set(y, x, xr >= 0 && owner[xr] == x);
    }
  }
  return s;
}

}  // namespace costvol::io
