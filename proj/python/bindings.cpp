#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "freejac/errors.hpp"
#include "freejac/free_calculus.hpp"
#include "freejac/harness.hpp"
#include "freejac/linalg.hpp"
#include "freejac/mlp.hpp"
#include "freejac/series.hpp"
#include "freejac/spectral.hpp"

namespace py = pybind11;
using namespace freejac;

namespace {

MlpConfig make_config(const std::string& activation, double sigma_w2, int depth, int width, double alpha,
                      double input_radius) {
  MlpConfig cfg = MlpConfig::uniform(depth, width, std::sqrt(sigma_w2), parse_activation(activation, alpha));
  cfg.input_radius = input_radius;
  cfg.validate();
  return cfg;
}

MomentSeries series(std::vector<double> m) { return MomentSeries{std::move(m)}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Free-probability spectra of deep-network Jacobians and Fisher information";
  m.attr("__version__") = FREEJAC_VERSION;

  auto precondition = py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<UndefinedTransformError>(m, "UndefinedTransformError", precondition.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", precondition.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("haar_orthogonal", [](int n, std::uint64_t seed) {
    SeededRng rng(seed);
    return sample_haar_orthogonal(rng, n);
  }, py::arg("n"), py::arg("seed") = 0);

  m.def("symmetric_eigenvalues", &symmetric_eigenvalues, py::arg("a"));
  m.def("singular_values", &singular_values, py::arg("a"));
  m.def("schatten_norm", &schatten_norm, py::arg("a"), py::arg("p"));
  m.def("trace_moments", [](const Matrix& a, int order) { return trace_moments(a, order).moments; },
        py::arg("a"), py::arg("order"));

  m.def("s_transform", [](std::vector<double> moments) { return s_transform(series(std::move(moments))).coeffs; },
        py::arg("moments"), "Coefficients s_0..s_{K-1} of S(z) from moments m_1..m_K.");
  m.def("moments_from_s", [](std::vector<double> coeffs) { return moments_from_s(STransform{std::move(coeffs)}).moments; },
        py::arg("coeffs"));
  m.def("free_multiplicative_convolution", [](std::vector<double> a, std::vector<double> b) {
    return free_multiplicative_convolution(series(std::move(a)), series(std::move(b))).moments;
  }, py::arg("mu"), py::arg("nu"));

  m.def("theory_profile", [](const std::string& activation, double sigma_w2, int depth, double alpha,
                             double input_radius) {
    const TheoryProfile p = theory_profile(make_config(activation, sigma_w2, depth, 2, alpha, input_radius));
    py::dict out;
    std::vector<double> q, r;
    for (int l = 1; l <= depth; ++l) q.push_back(p.q(l));
    for (int l = 0; l <= depth; ++l) r.push_back(p.r(l));
    out["q"] = q;
    out["r"] = r;
    return out;
  }, py::arg("activation"), py::arg("sigma_w2"), py::arg("depth"), py::arg("alpha") = 0.5,
     py::arg("input_radius") = 1.0);

  m.def("predict_xi", [](const std::string& activation, double sigma_w2, int depth, int layer, int order,
                         double alpha, double input_radius) {
    return predict_xi(make_config(activation, sigma_w2, depth, 2, alpha, input_radius), layer, order).moments;
  }, py::arg("activation"), py::arg("sigma_w2"), py::arg("depth"), py::arg("layer"), py::arg("order") = 4,
     py::arg("alpha") = 0.5, py::arg("input_radius") = 1.0,
     "Limiting moments of the spectrum of J_l J_l^T.");

  m.def("predict_mu", [](const std::string& activation, double sigma_w2, int depth, int layer, int order,
                         double alpha, double input_radius) {
    return predict_mu(make_config(activation, sigma_w2, depth, 2, alpha, input_radius), layer, order).moments;
  }, py::arg("activation"), py::arg("sigma_w2"), py::arg("depth"), py::arg("layer"), py::arg("order") = 4,
     py::arg("alpha") = 0.5, py::arg("input_radius") = 1.0,
     "Limiting moments of the spectrum of H_l.");

  m.def("jacobian", [](const std::string& activation, double sigma_w2, int depth, int width, int layer,
                       std::uint64_t seed, double alpha, double input_radius) {
    const NetworkState state = sample_network(make_config(activation, sigma_w2, depth, width, alpha, input_radius),
                                              SeededRng(seed));
    return input_jacobian_chain(state, layer);
  }, py::arg("activation"), py::arg("sigma_w2"), py::arg("depth"), py::arg("width"), py::arg("layer"),
     py::arg("seed") = 0, py::arg("alpha") = 0.5, py::arg("input_radius") = 1.0);

  m.def("run_experiment_json", [](const std::string& config, int threads) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(config);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    const ExperimentConfig cfg = parse_config(doc);
    ExperimentReport report;
    {
      py::gil_scoped_release release;
      report = run_experiment(cfg, threads);
    }
    py::dict tables;
    for (const Table& t : report.tables) tables[py::str(t.name)] = to_csv(t);
    return py::make_tuple(report.payload.dump(), tables);
  }, py::arg("config"), py::arg("threads") = 1);
}
