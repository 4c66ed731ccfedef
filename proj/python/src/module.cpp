#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "xprospect/activations.hpp"
#include "xprospect/cli.hpp"
#include "xprospect/dataset.hpp"
#include "xprospect/io.hpp"
#include "xprospect/projection.hpp"
#include "xprospect/reconnet.hpp"
#include "xprospect/styler.hpp"
#include "xprospect/trainer.hpp"

namespace py = pybind11;
using namespace xprospect;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Domain parse_domain(const std::string& s) {
  if (s == "hu") return Domain::HU;
  if (s == "unit") return Domain::Unit;
  throw InvalidInput("domain must be 'hu' or 'unit'");
}

View parse_view(const std::string& s) {
  if (s == "frontal") return View::Frontal;
  if (s == "lateral") return View::Lateral;
  if (s == "slice") return View::Slice;
  throw InvalidInput("view must be 'frontal', 'lateral' or 'slice'");
}

SliceAxis parse_axis(const std::string& s) {
  if (s == "axial") return SliceAxis::Axial;
  if (s == "coronal") return SliceAxis::Coronal;
  if (s == "sagittal") return SliceAxis::Sagittal;
  throw InvalidInput("axis must be 'axial', 'coronal' or 'sagittal'");
}

std::vector<float> copy_values(const FloatArray& a) { return {a.data(), a.data() + a.size()}; }

Volume3D to_volume(const FloatArray& a, const std::string& domain) {
  if (a.ndim() != 3) throw InvalidInput("volume must be a 3-D array (z, y, x)");
  return Volume3D(a.shape(0), a.shape(1), a.shape(2), copy_values(a), parse_domain(domain));
}

Image2D to_image(const FloatArray& a, const std::string& view) {
  if (a.ndim() != 2) throw InvalidInput("image must be a 2-D array (rows, cols)");
  return Image2D(a.shape(0), a.shape(1), copy_values(a), parse_view(view));
}

FloatArray from_volume(const Volume3D& v) {
  FloatArray out({v.dz(), v.dy(), v.dx()});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

FloatArray from_image(const Image2D& img) {
  FloatArray out({img.rows(), img.cols()});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

FloatArray from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict from_params(const ParamStore& p) {
  py::dict d;
  for (const auto& [name, t] : p) d[py::str(name)] = from_tensor(t);
  return d;
}

ParamStore to_params(const py::dict& d) {
  ParamStore p;
  for (const auto& [k, v] : d) {
    const auto a = FloatArray::ensure(v);
    if (!a) throw InvalidInput("parameter '" + k.cast<std::string>() + "' is not a float array");
    Shape shape(a.shape(), a.shape() + a.ndim());
    p.add(k.cast<std::string>(), Tensor(std::move(shape), copy_values(a)));
  }
  return p;
}

std::vector<TrainingSample> to_samples(const std::vector<FloatArray>& frontal, const std::vector<FloatArray>& lateral,
                                       const std::vector<FloatArray>& labels) {
  if (frontal.size() != lateral.size() || frontal.size() != labels.size()) {
    throw InvalidInput("frontal, lateral and labels must have the same length");
  }
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < frontal.size(); ++i) {
    out.push_back({std::to_string(i), to_image(frontal[i], "frontal"), to_image(lateral[i], "lateral"),
                   to_volume(labels[i], "unit")});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Biplanar X-ray to CT reconstruction toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());

  m.def("make_phantom", [](std::uint64_t seed, std::size_t size) { return from_volume(make_phantom(seed, size)); },
        py::arg("seed"), py::arg("size"));
  m.def(
      "normalize_hu",
      [](const FloatArray& v, float hu_min, float hu_max) {
        return from_volume(normalize_hu(to_volume(v, "hu"), {hu_min, hu_max}));
      },
      py::arg("volume"), py::arg("hu_min") = -1000.0f, py::arg("hu_max") = 1000.0f);
  m.def(
      "resize_volume",
      [](const FloatArray& v, std::size_t target, const std::string& domain) {
        return from_volume(resize_volume(to_volume(v, domain), target));
      },
      py::arg("volume"), py::arg("target"), py::arg("domain") = "unit");
  m.def(
      "mean_project",
      [](const FloatArray& v, const std::string& view) {
        return from_image(mean_project(to_volume(v, "unit"), parse_view(view)));
      },
      py::arg("volume"), py::arg("view"));
  m.def(
      "back_project",
      [](const FloatArray& img, const std::string& view) {
        return from_volume(back_project(to_image(img, view), parse_view(view)));
      },
      py::arg("image"), py::arg("view"));
  m.def(
      "fuse_backprojections",
      [](const FloatArray& f, const FloatArray& l) {
        return from_volume(fuse_backprojections(to_image(f, "frontal"), to_image(l, "lateral")));
      },
      py::arg("frontal"), py::arg("lateral"));
  m.def(
      "export_slice",
      [](const FloatArray& v, const std::string& axis, std::size_t index, const std::string& domain) {
        return from_image(export_slice(to_volume(v, domain), parse_axis(axis), index));
      },
      py::arg("volume"), py::arg("axis"), py::arg("index"), py::arg("domain") = "unit");

  m.def("selu", [](double x) { return selu(x); }, py::arg("x"));

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](std::size_t input_size, std::size_t dense_units, std::size_t base_channels,
                       bool use_backprojection, std::uint64_t seed) {
             ModelConfig c;
             c.input_size = input_size;
             c.dense_units = dense_units;
             c.base_channels = base_channels;
             c.use_backprojection = use_backprojection;
             c.seed = seed;
             c.validate();
             return c;
           }),
           py::arg("input_size") = 64, py::arg("dense_units") = 64, py::arg("base_channels") = 16,
           py::arg("use_backprojection") = false, py::arg("seed") = 0)
      .def_readwrite("input_size", &ModelConfig::input_size)
      .def_readwrite("dense_units", &ModelConfig::dense_units)
      .def_readwrite("base_channels", &ModelConfig::base_channels)
      .def_readwrite("use_backprojection", &ModelConfig::use_backprojection)
      .def_readwrite("seed", &ModelConfig::seed)
      .def_property_readonly("stages", &ModelConfig::stages)
      .def_property_readonly("cube_side", &ModelConfig::cube_side);

  m.def("init_params", [](const ModelConfig& c) { return from_params(init_params(c)); }, py::arg("config"));
  m.def(
      "forward",
      [](const py::dict& params, const ModelConfig& c, const FloatArray& f, const FloatArray& l) {
        const ParamStore p = to_params(params);
        const Image2D fi = to_image(f, "frontal"), li = to_image(l, "lateral");
        Volume3D out;
        {
          py::gil_scoped_release release;
          out = forward(p, c, fi, li);
        }
        return from_volume(out);
      },
      py::arg("params"), py::arg("config"), py::arg("frontal"), py::arg("lateral"));

  m.def(
      "train",
      [](const ModelConfig& c, const std::vector<FloatArray>& frontal, const std::vector<FloatArray>& lateral,
         const std::vector<FloatArray>& labels, const std::string& loss, const std::string& optimizer,
         double learning_rate, std::size_t epochs, std::uint64_t seed, bool prior_head_bias) {
        TrainConfig t;
        t.loss = parse_loss(loss);
        t.epochs = epochs;
        t.seed = seed;
        t.prior_head_bias = prior_head_bias;
        OptimizerConfig o;
        o.kind = parse_optimizer(optimizer);
        o.learning_rate = learning_rate;
        const auto samples = to_samples(frontal, lateral, labels);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(c, t, o, samples);
        }
        std::vector<double> losses;
        for (const auto& rec : r.log) losses.push_back(rec.value);
        return py::make_tuple(from_params(r.params), losses);
      },
      py::arg("config"), py::arg("frontal"), py::arg("lateral"), py::arg("labels"), py::arg("loss") = "MAE",
      py::arg("optimizer") = "Adam", py::arg("learning_rate") = 1e-4, py::arg("epochs") = 1, py::arg("seed") = 0,
      py::arg("prior_head_bias") = false);

  m.def(
      "grad_check",
      [](const ModelConfig& c, double tolerance, std::size_t samples, std::uint64_t seed) {
        GradCheckOptions opts;
        opts.samples_per_tensor = samples;
        opts.seed = seed;
        GradCheckReport r;
        {
          py::gil_scoped_release release;
          r = grad_check(c, tolerance, opts);
        }
        py::list out;
        for (const auto& t : r.tensors) out.append(py::make_tuple(t.name, t.sampled, t.max_error, t.passed));
        return out;
      },
      py::arg("config"), py::arg("tolerance") = 1e-3, py::arg("samples") = 32, py::arg("seed") = 0);

  m.def(
      "cycle_loss",
      [](const DoubleArray& x, const DoubleArray& fgx, const DoubleArray& y, const DoubleArray& gfy, double lambda) {
        auto span = [](const DoubleArray& a) { return std::span<const double>(a.data(), a.size()); };
        return cycle_loss(span(x), span(fgx), span(y), span(gfy), lambda);
      },
      py::arg("x"), py::arg("fgx"), py::arg("y"), py::arg("gfy"), py::arg("lam") = 20.0);

  m.def(
      "save_volume",
      [](const FloatArray& v, const std::string& path, const std::string& domain) {
        save_volume(to_volume(v, domain), path);
      },
      py::arg("volume"), py::arg("path"), py::arg("domain") = "unit");
  m.def(
      "load_volume",
      [](const std::string& path) {
        const Volume3D v = load_volume(path);
        return py::make_tuple(from_volume(v), v.domain() == Domain::HU ? "hu" : "unit");
      },
      py::arg("path"));
  m.def(
      "save_image",
      [](const FloatArray& img, const std::string& path, const std::string& view) {
        save_image(to_image(img, view), path);
      },
      py::arg("image"), py::arg("path"), py::arg("view") = "frontal");
  m.def("load_image", [](const std::string& path) { return from_image(load_image(path)); }, py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
