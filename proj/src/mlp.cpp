#include "freejac/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "freejac/errors.hpp"

namespace freejac {

MlpConfig MlpConfig::uniform(int depth, int width, double sigma_w, Activation act) {
  MlpConfig cfg;
  cfg.depth = depth;
  cfg.width = width;
  cfg.sigma_w.assign(depth, sigma_w);
  cfg.activations.assign(depth, act);
  return cfg;
}

void MlpConfig::validate() const {
  require(depth >= 1, "depth: must be >= 1");
  require(width >= 2, "width: must be >= 2");
  require(static_cast<int>(sigma_w.size()) == depth, "sigma_w: need one value per layer");
  require(static_cast<int>(activations.size()) == depth, "activation: need one per layer");
  for (double s : sigma_w) require(s > 0.0 && std::isfinite(s), "sigma_w: must be positive");
  require(input_radius > 0.0 && std::isfinite(input_radius), "input_radius: must be positive");
  if (input_mode == InputMode::fixed_vector && !fixed_direction.empty())
    require(static_cast<int>(fixed_direction.size()) == width,
            "fixed_direction: length must equal width");
}

MlpConfig MlpConfig::with_width(int n) const {
  MlpConfig cfg = *this;
  cfg.width = n;
  if (!cfg.fixed_direction.empty() && static_cast<int>(cfg.fixed_direction.size()) != n)
    cfg.fixed_direction.clear();
  return cfg;
}

namespace {

Vector sample_input(const MlpConfig& cfg, SeededRng rng) {
  const int n = cfg.width;
  Vector x(n);
  if (cfg.input_mode == InputMode::unit_sphere_scaled) {
    for (int i = 0; i < n; ++i) x(i) = rng.normal();
  } else if (cfg.fixed_direction.empty()) {
    x.setOnes();
  } else {
    for (int i = 0; i < n; ++i) x(i) = cfg.fixed_direction[i];
  }
  const double norm = x.norm();
  require(norm > 0.0, "fixed_direction: must be nonzero");
  return x * (cfg.input_radius * std::sqrt(static_cast<double>(n)) / norm);
}

template <typename ApplyWeight>
LayerSignals propagate(const MlpConfig& cfg, Vector x0, ApplyWeight&& apply_weight) {
  LayerSignals s;
  const double n = cfg.width;
  s.post.push_back(std::move(x0));
  s.qhat.push_back(s.post.back().squaredNorm() / n);
  for (int layer = 1; layer <= cfg.depth; ++layer) {
    Vector h = apply_weight(layer, s.post.back());
    if (!h.allFinite())
      throw NumericalError("forward pass overflowed at layer " + std::to_string(layer));
    const Activation& act = cfg.activation(layer);
    Vector x(h.size());
    Vector d(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      x(i) = act.eval(h(i));
      d(i) = act.deriv(h(i));
    }
    s.qhat.push_back(x.squaredNorm() / n);
    s.pre.push_back(std::move(h));
    s.post.push_back(std::move(x));
    s.jac_diag.push_back(std::move(d));
  }
  return s;
}

}  // namespace

NetworkState sample_network(const MlpConfig& cfg, const SeededRng& rng) {
  cfg.validate();
  NetworkState state;
  state.config = cfg;
  for (int layer = 1; layer <= cfg.depth; ++layer) {
    SeededRng stream = rng.child(layer);
    state.weights.push_back(cfg.sigma(layer) * sample_haar_orthogonal(stream, cfg.width));
  }
  state.signals = propagate(cfg, sample_input(cfg, rng.child(0)),
                            [&](int layer, const Vector& x) -> Vector { return state.W(layer) * x; });
  return state;
}

LayerSignals sample_forward(const MlpConfig& cfg, const SeededRng& rng) {
  cfg.validate();
  return propagate(cfg, sample_input(cfg, rng.child(0)), [&](int layer, const Vector& x) -> Vector {
    SeededRng stream = rng.child(layer);
    return cfg.sigma(layer) * sample_haar_reflectors(stream, cfg.width).apply(x);
  });
}

TheoryProfile theory_profile(const MlpConfig& cfg, const GaussHermiteRule& rule) {
  cfg.validate();
  std::vector<double> q;
  std::vector<double> r{cfg.input_radius};
  for (int layer = 1; layer <= cfg.depth; ++layer) {
    const double s = cfg.sigma(layer);
    q.push_back(s * s * r.back() * r.back());
    const double r_sq = activation_second_moment(cfg.activation(layer), q.back(), rule);
    if (!(r_sq > 0.0) || !std::isfinite(r_sq))
      throw NumericalError("theory_profile: E[phi(h)^2] is not positive at layer " +
                           std::to_string(layer));
    r.push_back(std::sqrt(r_sq));
  }
  return TheoryProfile(std::move(q), std::move(r));
}

namespace {

void require_layer(const NetworkState& state, int layer, const char* op) {
  require(layer >= 1 && layer <= state.depth(), std::string(op) + ": layer out of range");
  require(static_cast<int>(state.weights.size()) == state.depth(),
          std::string(op) + ": state has no materialized weights");
}

}  // namespace

Matrix input_jacobian_chain(const NetworkState& state, int layer) {
  require_layer(state, layer, "input_jacobian_chain");
  const LayerSignals& s = state.signals;
  Matrix j = s.d(1).asDiagonal() * state.W(1);
  for (int k = 2; k <= layer; ++k) {
    Matrix next = state.W(k) * j;
    j = s.d(k).asDiagonal() * next;
  }
  return j;
}

std::vector<Matrix> fim_recursion(const NetworkState& state) {
  require_layer(state, 1, "fim_recursion");
  const LayerSignals& s = state.signals;
  const Eigen::Index n = state.width();
  std::vector<Matrix> hs;
  hs.push_back(Matrix::Identity(n, n));
  for (int layer = 1; layer < state.depth(); ++layer) {
    const Vector& d = s.d(layer);
    const Matrix inner = d.asDiagonal() * hs.back() * d.asDiagonal();
    const Matrix& w = state.W(layer + 1);
    Matrix left = w * inner;
    Matrix h = left * w.transpose();
    // W M W^T is symmetric in exact arithmetic; remove rounding asymmetry.
    h = 0.5 * (h + h.transpose()).eval();
    h.diagonal().array() += s.q_hat(layer);
    hs.push_back(std::move(h));
  }
  return hs;
}

std::vector<Matrix> delta_chains(const NetworkState& state) {
  require_layer(state, 1, "delta_chains");
  const int depth = state.depth();
  const Eigen::Index n = state.width();
  std::vector<Matrix> deltas(depth);
  deltas[depth - 1] = Matrix::Identity(n, n);
  // dh^{l+1}/dh^l = W_{l+1} D_l
  for (int layer = depth - 1; layer >= 1; --layer) {
    Matrix next = deltas[layer] * state.W(layer + 1);
    deltas[layer - 1] = next * state.signals.d(layer).asDiagonal();
  }
  return deltas;
}

Matrix delta_chain_sum(const NetworkState& state) {
  const std::vector<Matrix> deltas = delta_chains(state);
  const Eigen::Index n = state.width();
  Matrix sum = Matrix::Zero(n, n);
  for (int layer = 1; layer <= state.depth(); ++layer) {
    const Matrix& d = deltas[layer - 1];
    sum.noalias() += state.signals.q_hat(layer - 1) * (d * d.transpose());
  }
  return sum;
}

Matrix parameter_jacobian_oracle(const NetworkState& state) {
  require_layer(state, 1, "parameter_jacobian_oracle");
  const Eigen::Index n = state.width();
  require(n <= kParameterJacobianMaxWidth,
          "parameter_jacobian_oracle: width exceeds the dense oracle envelope (128)");
  const int depth = state.depth();
  const std::vector<Matrix> deltas = delta_chains(state);
  const Vector& d_out = state.signals.d(depth);
  Matrix jac(n, depth * n * n);
  for (int layer = 1; layer <= depth; ++layer) {
    // d x^L / d (W_l)_{ij} = D_L delta_{L->l} e_i x^{l-1}_j
    const Matrix back = d_out.asDiagonal() * deltas[layer - 1];
    const Vector& x_prev = state.signals.x(layer - 1);
    const Eigen::Index offset = (layer - 1) * n * n;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) jac.col(offset + i * n + j) = back.col(i) * x_prev(j);
  }
  return jac;
}

Matrix conditional_fim_dual(const NetworkState& state) {
  const std::vector<Matrix> hs = fim_recursion(state);
  const Vector& d = state.signals.d(state.depth());
  return d.asDiagonal() * hs.back() * d.asDiagonal();
}

DualSpectrumCheck fim_dual_spectrum_check(const NetworkState& state) {
  const Matrix jac = parameter_jacobian_oracle(state);
  const double n = state.width();
  const Matrix fim = jac.transpose() * jac / n;
  Vector full = symmetric_eigenvalues(0.5 * (fim + fim.transpose()));
  Vector dual = symmetric_eigenvalues(conditional_fim_dual(state));

  std::vector<double> expected(full.size(), 0.0);
  std::copy(dual.begin(), dual.end(), expected.end() - dual.size());
  std::sort(expected.begin(), expected.end());

  DualSpectrumCheck out;
  out.scale = std::max(full.cwiseAbs().maxCoeff(), dual.cwiseAbs().maxCoeff());
  const double zero_tol = 1e-9 * std::max(out.scale, 1.0);
  for (Eigen::Index i = 0; i < full.size(); ++i) {
    out.max_abs_diff = std::max(out.max_abs_diff, std::abs(full(i) - expected[i]));
    if (std::abs(full(i)) <= zero_tol) ++out.zero_count;
    if (std::abs(expected[i]) <= zero_tol) ++out.expected_zero_count;
  }
  return out;
}

}  // namespace freejac
