#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sal/sal.hpp"

namespace py = pybind11;
using namespace sal;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return Matrix(rows, cols, std::vector<Real>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

std::vector<Label> to_labels(const LabelArray& y) {
    if (y.ndim() != 1) throw std::invalid_argument("expected a 1-D label array");
    return {y.data(), y.data() + y.shape(0)};
}

py::dict dataset_dict(const Dataset& ds) {
    py::dict d;
    d["features"] = to_array(ds.features);
    d["labels"] = py::array_t<int>(static_cast<py::ssize_t>(ds.labels.size()), ds.labels.data());
    d["class_count"] = ds.class_count;
    d["name"] = ds.name;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Selective Adaptive Learning: networks, data loading and experiments";

    py::enum_<Method>(m, "Method")
        .value("SAL", Method::SAL)
        .value("BP", Method::BP)
        .value("MoE", Method::MoE);
    py::enum_<Activation>(m, "Activation")
        .value("ReLU", Activation::ReLU)
        .value("Tanh", Activation::Tanh)
        .value("Linear", Activation::Linear);

    py::class_<NetworkConfig>(m, "NetworkConfig")
        .def(py::init<>())
        .def_readwrite("method", &NetworkConfig::method)
        .def_readwrite("depth", &NetworkConfig::depth)
        .def_readwrite("input_dim", &NetworkConfig::input_dim)
        .def_readwrite("hidden_dim", &NetworkConfig::hidden_dim)
        .def_readwrite("output_dim", &NetworkConfig::output_dim)
        .def_readwrite("n_areas", &NetworkConfig::n_areas)
        .def_readwrite("activations", &NetworkConfig::activations)
        .def_readwrite("residual", &NetworkConfig::residual)
        .def_readwrite("lr_net", &NetworkConfig::lr_net)
        .def_readwrite("lr_sel", &NetworkConfig::lr_sel)
        .def_readwrite("local_weight", &NetworkConfig::local_weight)
        .def("validate", &NetworkConfig::validate);

    m.def("shallow_config", &shallow_config, py::arg("method"), py::arg("input_dim"),
          py::arg("classes"), py::arg("areas"), py::arg("hidden") = 256);
    m.def("deep_config", &deep_config, py::arg("method"), py::arg("depth"), py::arg("input_dim"),
          py::arg("classes"), py::arg("areas"), py::arg("hidden") = 256);

    py::class_<Network>(m, "Network")
        .def(py::init([](const NetworkConfig& c, std::uint64_t seed) { return build(c, seed); }),
             py::arg("config"), py::arg("seed"))
        .def_readonly("config", &Network::config)
        .def("train_step",
             [](Network& n, const Array& x, const LabelArray& y) {
                 const Matrix xm = to_matrix(x);
                 const auto labels = to_labels(y);
                 py::gil_scoped_release release;
                 return train_step(n, xm, labels);
             },
             py::arg("x"), py::arg("y"), "one mini-batch step; returns the pre-update loss")
        .def("predict", [](const Network& n, const Array& x) { return to_array(predict(n, to_matrix(x))); })
        .def("evaluate",
             [](const Network& n, const Array& x, const LabelArray& y) {
                 const Evaluation e = evaluate(n, to_matrix(x), to_labels(y));
                 return py::make_tuple(e.loss, e.accuracy);
             })
        .def("selected_areas",
             [](const Network& n, const Array& x) {
                 std::vector<std::vector<std::size_t>> out;
                 for (const auto& c : forward(n, to_matrix(x)))
                     out.push_back(c.routing ? c.routing->selected : std::vector<std::size_t>{});
                 return out;
             },
             "area (or expert) chosen per sample, one list per layer")
        .def_property_readonly("parameter_count", [](const Network& n) { return parameter_count(n); });

    m.def("load_benchmark",
          [](const std::string& name, const std::filesystem::path& path, std::uint64_t split_seed,
             double train_fraction) {
              BenchmarkOptions o;
              o.split_seed = split_seed;
              o.train_fraction = train_fraction;
              const BenchmarkData d = load_benchmark(parse_benchmark(name), path, o);
              return py::make_tuple(dataset_dict(d.train), dataset_dict(d.test));
          },
          py::arg("name"), py::arg("path"), py::arg("split_seed") = BenchmarkOptions{}.split_seed,
          py::arg("train_fraction") = BenchmarkOptions{}.train_fraction,
          "(train, test) dicts with normalised features and labels");

    m.def("grad_check_suite",
          [](std::uint64_t seed) {
              py::list out;
              for (const auto& c : grad_check_suite(seed).checks) {
                  py::dict d;
                  d["name"] = c.name;
                  d["max_rel_error"] = c.max_rel_error;
                  d["tolerance"] = c.tolerance;
                  d["passed"] = c.passed;
                  out.append(d);
              }
              return out;
          },
          py::arg("seed") = 7);

    m.def("run_cli",
          [](const std::vector<std::string>& args) {
              std::ostringstream out, err;
              const int code = parse_and_dispatch(args, out, err);
              return py::make_tuple(code, out.str(), err.str());
          },
          "run the command-line tool in-process; returns (exit_code, stdout, stderr)");
}
