#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "freejac/series.hpp"

namespace freejac {

enum class ActivationKind { relu, shifted_relu, hard_tanh, tanh, sigmoid, silu, erf };

/// One of the seven activations. Derivatives at kink points return the
/// right-limit: relu'(0) = 1, shifted_relu'(alpha) = 1, hard_tanh'(-1) = 1,
/// hard_tanh'(1) = 0.
struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double alpha = 0.5;  // shifted_relu only

  double eval(double x) const;
  double deriv(double x) const;
  /// sup |phi'| over the real line.
  double deriv_bound() const;
  std::vector<double> kinks() const;
  std::string name() const;

  /// Piece of a piecewise-linear activation: phi(x) = intercept + slope x on [lo, hi).
  struct LinearPiece {
    double lo, hi, intercept, slope;
  };
  /// Pieces covering the real line for relu, shifted_relu and hard_tanh;
  /// nullopt for the smooth activations.
  std::optional<std::vector<LinearPiece>> linear_pieces() const;

  static Activation relu() { return {ActivationKind::relu}; }
  static Activation shifted_relu(double alpha = 0.5) { return {ActivationKind::shifted_relu, alpha}; }
  static Activation hard_tanh() { return {ActivationKind::hard_tanh}; }
  static Activation tanh() { return {ActivationKind::tanh}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid}; }
  static Activation silu() { return {ActivationKind::silu}; }
  static Activation erf() { return {ActivationKind::erf}; }
};

/// Parses the lowercase identifiers relu, shifted_relu, hard_tanh, tanh,
/// sigmoid, silu, erf. Throws PreconditionError on anything else.
Activation parse_activation(const std::string& name, double alpha = 0.5);

/// Gauss-Hermite rule normalized for E[f(Z)], Z ~ N(0, 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order() const { return static_cast<int>(nodes.size()); }
};

inline constexpr int kDefaultQuadratureOrder = 201;

/// Golub-Welsch on the probabilists' Hermite Jacobi matrix.
GaussHermiteRule gauss_hermite(int order = kDefaultQuadratureOrder);
const GaussHermiteRule& default_rule();

/// sum_i w_i f(sqrt(q) x_i) ~ E[f(h)], h ~ N(0, q).
double gaussian_expectation(const std::function<double(double)>& f, double q,
                            const GaussHermiteRule& rule);

/// E[phi(h)^2], h ~ N(0, q). Exact for piecewise-linear activations,
/// quadrature otherwise.
double activation_second_moment(const Activation& a, double q, const GaussHermiteRule& rule);

/// Moments m_k = E[(phi'(h))^(2k)], k = 1..max_order, h ~ N(0, q): the
/// moments of the law of phi'(h)^2. Piecewise-linear activations have a
/// piecewise-constant derivative, so their moments are evaluated exactly from
/// Gaussian interval masses; a jump in the integrand would otherwise limit
/// quadrature accuracy to a few digits.
MomentSeries derivative_square_moments(const Activation& a, double q, int max_order,
                                       const GaussHermiteRule& rule);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace freejac
