#include "freejac/activations.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>

#include "freejac/errors.hpp"

namespace freejac {
namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double Activation::eval(double x) const {
  switch (kind) {
    case ActivationKind::relu: return x >= 0.0 ? x : 0.0;
    case ActivationKind::shifted_relu: return x >= alpha ? x : alpha;
    case ActivationKind::hard_tanh: return x <= -1.0 ? -1.0 : (x >= 1.0 ? 1.0 : x);
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::sigmoid: return logistic(x);
    case ActivationKind::silu: return x * logistic(x);
    case ActivationKind::erf: return std::erf(x);
  }
  return 0.0;
}

double Activation::deriv(double x) const {
  switch (kind) {
    case ActivationKind::relu: return x >= 0.0 ? 1.0 : 0.0;
    case ActivationKind::shifted_relu: return x >= alpha ? 1.0 : 0.0;
    case ActivationKind::hard_tanh: return (x >= -1.0 && x < 1.0) ? 1.0 : 0.0;
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::sigmoid: {
      const double s = logistic(x);
      return s * (1.0 - s);
    }
    case ActivationKind::silu: {
      const double s = logistic(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case ActivationKind::erf: return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
  }
  return 0.0;
}

double Activation::deriv_bound() const {
  switch (kind) {
    case ActivationKind::sigmoid: return 0.25;
    case ActivationKind::silu: return 1.0998393292;  // attained near x = 2.3994
    case ActivationKind::erf: return 2.0 / std::sqrt(std::numbers::pi);
    default: return 1.0;
  }
}

std::vector<double> Activation::kinks() const {
  switch (kind) {
    case ActivationKind::relu: return {0.0};
    case ActivationKind::shifted_relu: return {alpha};
    case ActivationKind::hard_tanh: return {-1.0, 1.0};
    default: return {};
  }
}

std::string Activation::name() const {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::shifted_relu: return "shifted_relu";
    case ActivationKind::hard_tanh: return "hard_tanh";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::silu: return "silu";
    case ActivationKind::erf: return "erf";
  }
  return "";
}

std::optional<std::vector<Activation::LinearPiece>> Activation::linear_pieces() const {
  switch (kind) {
    case ActivationKind::relu: return std::vector<LinearPiece>{{-kInf, 0.0, 0.0, 0.0}, {0.0, kInf, 0.0, 1.0}};
    case ActivationKind::shifted_relu:
      return std::vector<LinearPiece>{{-kInf, alpha, alpha, 0.0}, {alpha, kInf, 0.0, 1.0}};
    case ActivationKind::hard_tanh:
      return std::vector<LinearPiece>{
          {-kInf, -1.0, -1.0, 0.0}, {-1.0, 1.0, 0.0, 1.0}, {1.0, kInf, 1.0, 0.0}};
    default: return std::nullopt;
  }
}

Activation parse_activation(const std::string& name, double alpha) {
  if (name == "relu") return Activation::relu();
  if (name == "shifted_relu") return Activation::shifted_relu(alpha);
  if (name == "hard_tanh") return Activation::hard_tanh();
  if (name == "tanh") return Activation::tanh();
  if (name == "sigmoid") return Activation::sigmoid();
  if (name == "silu") return Activation::silu();
  if (name == "erf") return Activation::erf();
  throw PreconditionError("unknown activation '" + name + "'");
}

GaussHermiteRule gauss_hermite(int order) {
  require(order >= 1, "gauss_hermite: order must be >= 1");
  // Probabilists' Hermite recurrence: x He_k = He_{k+1} + k He_{k-1}.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(std::max(order - 1, 0));
  for (int k = 1; k < order; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalError("gauss_hermite: eigensolver failed");

  // Eigenvector components lose relative accuracy on the tiny tail weights, so
  // polish each node by Newton on the orthonormal recurrence and take weights
  // from the Christoffel function 1 / sum_k p_k(x)^2.
  GaussHermiteRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const auto evaluate = [order](double x, double& p_n, double& p_prev, double& christoffel) {
    double p0 = 1.0, p1 = 0.0;
    christoffel = 1.0;
    for (int k = 0; k < order; ++k) {
      const double next = (x * p0 - std::sqrt(static_cast<double>(k)) * p1) / std::sqrt(k + 1.0);
      p1 = p0;
      p0 = next;
      if (k + 1 < order) christoffel += p0 * p0;
    }
    p_n = p0;
    p_prev = p1;
  };
  double total = 0.0;
  for (int i = 0; i < order; ++i) {
    double x = solver.eigenvalues()(i);
    double p_n = 0.0, p_prev = 0.0, christoffel = 1.0;
    for (int it = 0; it < 3; ++it) {
      evaluate(x, p_n, p_prev, christoffel);
      if (p_prev == 0.0) break;
      x -= p_n / (std::sqrt(static_cast<double>(order)) * p_prev);
    }
    evaluate(x, p_n, p_prev, christoffel);
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / christoffel;
    total += rule.weights[i];
  }
  for (double& w : rule.weights) w /= total;
  // The Jacobi matrix has zero diagonal, so the nodes are symmetric; enforce
  // it exactly so odd integrands vanish and half-line integrals split evenly.
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  return rule;
}

const GaussHermiteRule& default_rule() {
  static const GaussHermiteRule rule = gauss_hermite(kDefaultQuadratureOrder);
  return rule;
}

double gaussian_expectation(const std::function<double(double)>& f, double q,
                            const GaussHermiteRule& rule) {
  require(q > 0.0 && std::isfinite(q), "gaussian_expectation: variance must be positive");
  const double s = std::sqrt(q);
  double acc = 0.0;
  for (int i = 0; i < rule.order(); ++i) acc += rule.weights[i] * f(s * rule.nodes[i]);
  return acc;
}

namespace {

// Integrals over [lo, hi) of h^k times the N(0, q) density, k = 0, 1, 2.
struct TruncatedMoments {
  double m0, m1, m2;
};

TruncatedMoments truncated_gaussian_moments(double lo, double hi, double q) {
  const double s = std::sqrt(q);
  const auto density = [&](double x) {
    if (std::isinf(x)) return 0.0;
    const double z = x / s;
    return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
  };
  const auto x_density = [&](double x) { return std::isinf(x) ? 0.0 : x * density(x); };
  const double mass = normal_cdf(hi / s) - normal_cdf(lo / s);
  const double first = q * (density(lo) - density(hi));
  const double second = q * (mass + x_density(lo) - x_density(hi));
  return {mass, first, second};
}

}  // namespace

double activation_second_moment(const Activation& a, double q, const GaussHermiteRule& rule) {
  require(q > 0.0 && std::isfinite(q), "activation_second_moment: variance must be positive");
  if (const auto pieces = a.linear_pieces()) {
    double acc = 0.0;
    for (const auto& p : *pieces) {
      const auto t = truncated_gaussian_moments(p.lo, p.hi, q);
      acc += p.intercept * p.intercept * t.m0 + 2.0 * p.intercept * p.slope * t.m1 +
             p.slope * p.slope * t.m2;
    }
    return acc;
  }
  return gaussian_expectation([&](double x) { const double v = a.eval(x); return v * v; }, q, rule);
}

MomentSeries derivative_square_moments(const Activation& a, double q, int max_order,
                                       const GaussHermiteRule& rule) {
  require(q > 0.0 && std::isfinite(q), "derivative_square_moments: variance must be positive");
  require(max_order >= 1, "derivative_square_moments: max_order must be >= 1");
  MomentSeries m;
  m.moments.resize(max_order);
  if (const auto pieces = a.linear_pieces()) {
    for (int k = 1; k <= max_order; ++k) {
      double acc = 0.0;
      for (const auto& p : *pieces)
        acc += std::pow(p.slope * p.slope, k) * truncated_gaussian_moments(p.lo, p.hi, q).m0;
      m.moments[k - 1] = acc;
    }
    return m;
  }
  for (int k = 1; k <= max_order; ++k) {
    m.moments[k - 1] = gaussian_expectation(
        [&](double x) { const double d = a.deriv(x); return std::pow(d * d, k); }, q, rule);
  }
  return m;
}

}  // namespace freejac
