#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "costvol/acv.hpp"
#include "costvol/cli.hpp"
#include "costvol/fast_acv.hpp"
#include "costvol/io_formats.hpp"
#include "costvol/metrics.hpp"
#include "costvol/parallel.hpp"
#include "costvol/pipeline.hpp"
#include "costvol/testing/selftest.hpp"
#include "costvol/volume_core.hpp"

namespace py = pybind11;
using namespace costvol;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

void require_ndim(const FloatArray& a, int ndim, const char* what) {
  if (a.ndim() != ndim) throw py::value_error(std::string(what) + ": expected a " + std::to_string(ndim) + "-d array");
}

FeatureMap to_features(const FloatArray& a) {
  require_ndim(a, 3, "features");
  FeatureMap f(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), f.data.begin());
  return f;
}

DisparityMap to_disparity(const FloatArray& a) {
  require_ndim(a, 2, "disparity");
  DisparityMap d(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), d.data.begin());
  return d;
}

GrayImage to_image(const FloatArray& a) {
  require_ndim(a, 2, "image");
  GrayImage img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  img.validate();
  return img;
}

EvalMask to_mask(const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& a, int h, int w) {
  if (!a) return EvalMask(h, w);
  if (a->ndim() != 2 || a->shape(0) != h || a->shape(1) != w) throw py::value_error("mask shape mismatch");
  EvalMask m(h, w, false);
  for (py::ssize_t i = 0; i < a->size(); ++i) m.valid[i] = a->data()[i] ? 1 : 0;
  return m;
}

CostVolume to_probability_source(const FloatArray& a) {
  require_ndim(a, 3, "volume");
  CostVolume v(1, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), v.data.begin());
  return v;
}

template <class Container>
py::array_t<float> to_array(const Container& data, std::vector<py::ssize_t> shape) {
  py::array_t<float> out(shape);
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

py::array_t<float> volume_array(const CostVolume& v) {
  return to_array(v.data, {v.channels, v.disparities, v.height, v.width});
}

py::array_t<float> map_array(const DisparityMap& d) { return to_array(d.data, {d.height, d.width}); }

py::array_t<bool> mask_array(const EvalMask& m) {
  py::array_t<bool> out({m.height, m.width});
  for (std::size_t i = 0; i < m.valid.size(); ++i) out.mutable_data()[i] = m.valid[i] != 0;
  return out;
}

py::bytes as_bytes(const io::Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

io::Bytes from_bytes(const py::bytes& b) {
  const std::string s = b;
  return io::Bytes(s.begin(), s.end());
}

using MaskArg = std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>;

template <class Fn>
double metric(Fn fn, const FloatArray& pred, const FloatArray& gt, const MaskArg& mask) {
  const DisparityMap p = to_disparity(pred), g = to_disparity(gt);
  return fn(p, g, to_mask(mask, g.height, g.width));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attention concatenation cost volumes for stereo matching";

  py::register_exception<io::FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("group_correlation",
        [](const FloatArray& l, const FloatArray& r, int d_max, int n_groups) {
          return volume_array(group_correlation(to_features(l), to_features(r), d_max, n_groups));
        },
        py::arg("left"), py::arg("right"), py::arg("d_max"), py::arg("n_groups"));
  m.def("build_concat_volume",
        [](const FloatArray& l, const FloatArray& r, int d_max) {
          return volume_array(build_concat_volume(to_features(l), to_features(r), d_max));
        },
        py::arg("left"), py::arg("right"), py::arg("d_max"));
  m.def("mapm_level",
        [](const FloatArray& l, const FloatArray& r, int level, const std::array<float, 9>& weights, int d_max,
           int n_groups) {
          return volume_array(acv::mapm_level(to_features(l), to_features(r), level, acv::PatchWeights{level, weights},
                                              d_max, n_groups));
        },
        py::arg("left"), py::arg("right"), py::arg("level"), py::arg("weights"), py::arg("d_max"), py::arg("n_groups"));
  m.def("softmax_over_disparity",
        [](const FloatArray& v) {
          const ProbabilityVolume p = softmax_over_disparity(to_probability_source(v));
          return to_array(p.data, {p.disparities, p.height, p.width});
        },
        py::arg("costs"), "Softmax along axis 0 of a (D, H, W) array");
  m.def("soft_argmin",
        [](const FloatArray& p) {
          require_ndim(p, 3, "probabilities");
          ProbabilityVolume pv(static_cast<int>(p.shape(0)), static_cast<int>(p.shape(1)), static_cast<int>(p.shape(2)));
          std::copy(p.data(), p.data() + p.size(), pv.data.begin());
          return map_array(soft_argmin(pv));
        },
        py::arg("probabilities"));
  m.def("f2i_topk",
        [](const FloatArray& p, int k) {
          require_ndim(p, 3, "probabilities");
          ProbabilityVolume pv(static_cast<int>(p.shape(0)), static_cast<int>(p.shape(1)), static_cast<int>(p.shape(2)));
          std::copy(p.data(), p.data() + p.size(), pv.data.begin());
          const fast_acv::HypothesisSet h = fast_acv::f2i_topk(pv, k);
          py::array_t<std::int32_t> d({h.k, h.height, h.width});
          std::copy(h.d_hyp.begin(), h.d_hyp.end(), d.mutable_data());
          return py::make_tuple(d, to_array(h.a_f, {h.k, h.height, h.width}));
        },
        py::arg("probabilities"), py::arg("k"), "Returns (disparity indices, probabilities), each (K, H, W)");
  m.def("census_features",
        [](const FloatArray& img, int window) {
          const FeatureMap f = pipeline::census_features(to_image(img), window);
          return to_array(f.data, {f.channels, f.height, f.width});
        },
        py::arg("image"), py::arg("window") = 5);

  m.def("match",
        [](const FloatArray& left, const FloatArray& right, const std::string& mode, int dmax, int k, float alpha,
           float beta, int radius, const std::string& regularizer, int box_radius, float logit_scale,
           float hypothesis_scale, int threads) {
          pipeline::PipelineConfig cfg;
          cfg.mode = pipeline::parse_mode(mode);
          cfg.d_max = dmax;
          cfg.k = k;
          cfg.vap.alpha = alpha;
          cfg.vap.beta = beta;
          cfg.vap.radius = radius;
          cfg.regularizer = pipeline::parse_regularizer(regularizer);
          cfg.box_radius = box_radius;
          cfg.logit_scale = logit_scale;
          cfg.hypothesis_logit_scale = hypothesis_scale;
          const GrayImage l = to_image(left), r = to_image(right);
          pipeline::PipelineOutput out;
          {
            py::gil_scoped_release release;
            std::optional<ThreadLimit> limit;
            if (threads > 0) limit.emplace(threads);
            out = pipeline::run_pipeline(l, r, cfg);
          }
          cli::RunReport report;
          report.config = cfg;
          report.height = l.height;
          report.width = l.width;
          report.threads = threads > 0 ? threads : max_threads();
          report.times = out.times;
          report.measured = out.volumes;
          report.analytic = pipeline::analytic_volume_counts(cfg, l.height, l.width);
          py::object json = py::module_::import("json");
          return py::make_tuple(map_array(out.disparity), json.attr("loads")(report.to_json().dump()));
        },
        py::arg("left"), py::arg("right"), py::arg("mode") = "fast_acv", py::arg("dmax") = 192, py::arg("k") = 24,
        py::arg("alpha") = 1.0f, py::arg("beta") = -1.0f, py::arg("radius") = 1, py::arg("regularizer") = "identity",
        py::arg("box_radius") = 1, py::arg("logit_scale") = 64.0f, py::arg("hypothesis_scale") = 1.0f,
        py::arg("threads") = 0,
        "Full-resolution disparity and the run report (dict) for a rectified pair");

  m.def("epe", [](const FloatArray& p, const FloatArray& g, const MaskArg& mask) { return metric(metrics::epe, p, g, mask); },
        py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none());
  m.def("d1", [](const FloatArray& p, const FloatArray& g, const MaskArg& mask) { return metric(metrics::d1, p, g, mask); },
        py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none());
  m.def("smooth_l1",
        [](const FloatArray& p, const FloatArray& g, const MaskArg& mask) { return metric(metrics::smooth_l1, p, g, mask); },
        py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none());
  m.def("bad_x",
        [](const FloatArray& p, const FloatArray& g, double x, const MaskArg& mask) {
          const DisparityMap pm = to_disparity(p), gm = to_disparity(g);
          return metrics::bad_x(pm, gm, to_mask(mask, gm.height, gm.width), x);
        },
        py::arg("pred"), py::arg("gt"), py::arg("x"), py::arg("mask") = py::none());

  m.def("write_pfm", [](const FloatArray& d) { return as_bytes(io::write_pfm(to_disparity(d))); }, py::arg("disparity"));
  m.def("read_pfm", [](const py::bytes& b) { return map_array(io::read_pfm(from_bytes(b))); }, py::arg("data"));
  m.def("write_kitti_disp_png",
        [](const FloatArray& d, const MaskArg& mask) {
          const DisparityMap dm = to_disparity(d);
          return as_bytes(io::write_kitti_disp_png(dm, to_mask(mask, dm.height, dm.width)));
        },
        py::arg("disparity"), py::arg("mask") = py::none());
  m.def("read_kitti_disp_png",
        [](const py::bytes& b) {
          const io::MaskedDisparity md = io::read_kitti_disp_png(from_bytes(b));
          return py::make_tuple(map_array(md.disparity), mask_array(md.mask));
        },
        py::arg("data"), "Returns (disparity, valid mask)");

  m.def("generate_stereogram",
        [](int height, int width, int disparity, std::uint64_t seed) {
          const io::Stereogram sg = io::generate_stereogram(io::StereogramSpec::constant(height, width, disparity, seed));
          py::dict out;
          out["left"] = to_array(sg.left.data, {sg.left.height, sg.left.width});
          out["right"] = to_array(sg.right.data, {sg.right.height, sg.right.width});
          out["gt"] = map_array(sg.gt);
          out["mask"] = mask_array(sg.mask);
          return out;
        },
        py::arg("height") = 128, py::arg("width") = 256, py::arg("disparity") = 8, py::arg("seed") = 1);

  m.def("selftest",
        [](int trials, std::uint64_t seed) {
          const testing::SelftestSummary s = testing::run_selftest(trials, seed);
          py::dict counts;
          for (const auto& r : s.results) counts[py::str(r.name)] = py::make_tuple(r.passed, r.trials);
          return py::make_tuple(s.ok(), counts);
        },
        py::arg("trials") = 5, py::arg("seed") = 20240611, "Returns (all passed, {op: (passed, trials)})");
}
