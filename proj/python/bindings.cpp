#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "paramshift/checkpoint.hpp"
#include "paramshift/cli.hpp"
#include "paramshift/discovery.hpp"
#include "paramshift/evaluation.hpp"
#include "paramshift/png.hpp"
#include "paramshift/runtime.hpp"

namespace py = pybind11;
using namespace paramshift;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> out(shape);
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

py::bytes as_bytes(const std::string& s) { return py::bytes(s); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Parameter-space direction discovery for small generators";
  configure_allocator();

  py::register_exception<Error>(m, "Error");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line interface; returns (exit code, stdout, stderr).");

  py::class_<GeneratorModel>(m, "Generator")
      .def_static("initialize", &GeneratorModel::initialize, py::arg("seed"))
      .def_static("load", [](const std::string& path) { return load_model(path); }, py::arg("path"))
      .def("save", [](const GeneratorModel& g, const std::string& path) { save_checkpoint(to_checkpoint(g), path); })
      .def("generate", [](const GeneratorModel& g, const FloatArray& z) { return to_array(g.generate(to_tensor(z))); },
           py::arg("z"), "Latents (N, 8) to images (N, 32, 32, 1).")
      .def("weight", [](const GeneratorModel& g, int layer) { return to_array(g.weight(layer)); })
      .def_property_readonly("hash", &GeneratorModel::hash)
      .def_property_readonly("meta", [](const GeneratorModel& g) { return g.meta.dump(); });

  py::class_<DirectionSet>(m, "Directions")
      .def_static("load", [](const std::string& path) { return load_directions(path); }, py::arg("path"))
      .def_readonly("layer", &DirectionSet::layer)
      .def_readonly("T", &DirectionSet::T)
      .def_property_readonly("kind", [](const DirectionSet& d) { return std::string(parametrization_name(d.kind)); })
      .def_property_readonly("count", &DirectionSet::count)
      .def_property_readonly("coeffs", [](const DirectionSet& d) { return to_array(d.coeffs); })
      .def("raw_direction", &DirectionSet::raw_direction, py::arg("k"))
      .def("apply", [](const DirectionSet& d, const GeneratorModel& g, std::size_t k,
                       double t) { return apply_direction(g, d, k, t); },
           py::arg("model"), py::arg("k"), py::arg("t"), "Copy of the model shifted by t along direction k.");

  m.def(
      "generate_dataset",
      [](std::size_t count, std::uint64_t seed, const std::string& radius_mode, std::size_t size) {
        DatasetSpec spec;
        spec.count = count;
        spec.seed = seed;
        spec.size = size;
        spec.radius_mode = parse_radius_mode(radius_mode);
        return to_array(generate_dataset(spec).images);
      },
      py::arg("count"), py::arg("seed") = 0, py::arg("radius_mode") = "fixed", py::arg("size") = 32);

  m.def(
      "spectrum",
      [](const GeneratorModel& g, int layer, std::size_t count, const std::string& metric, std::size_t hessian_batch,
         std::size_t power_iterations, std::uint64_t seed) {
        DiscoveryConfig cfg;
        cfg.hessian_batch = hessian_batch;
        cfg.power_iterations = power_iterations;
        cfg.seed = seed;
        const LayerView view(g, layer);
        const auto s = top_k_eigendirections(view, PerceptualMetric::make(parse_metric(metric), seed), cfg, count);
        return py::make_tuple(s.eigenvalues, s.vectors);
      },
      py::arg("model"), py::arg("layer"), py::arg("count"), py::arg("metric") = "pixel_mse",
      py::arg("hessian_batch") = 512, py::arg("power_iterations") = 10, py::arg("seed") = 0,
      "Top Hessian eigendirections of the expected displacement at a layer: (eigenvalues, vectors).");

  m.def(
      "encode_png",
      [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a) {
        if (a.ndim() != 2) throw ValueError("encode_png expects a 2-d uint8 array");
        GrayImage img{static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)),
                      std::vector<std::uint8_t>(a.data(), a.data() + a.size())};
        return as_bytes(encode_png(img));
      },
      py::arg("pixels"));
  m.def(
      "decode_png",
      [](const py::bytes& b) {
        const GrayImage img = decode_png(std::string(b));
        py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width)});
        std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
        return out;
      },
      py::arg("data"));
}
