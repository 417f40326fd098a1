#pragma once

#include <optional>
#include <vector>

#include "freejac/activations.hpp"
#include "freejac/linalg.hpp"
#include "freejac/rng.hpp"

namespace freejac {

enum class InputMode { unit_sphere_scaled, fixed_vector };

/// Architecture of a bias-free, width-N, depth-L perceptron with
/// W_l = sigma_w[l-1] * (Haar orthogonal).
struct MlpConfig {
  int depth = 1;
  int width = 2;
  std::vector<double> sigma_w;          // one per layer
  std::vector<Activation> activations;  // one per layer
  double input_radius = 1.0;            // ||x^0||_2 / sqrt(N)
  InputMode input_mode = InputMode::unit_sphere_scaled;
  /// Direction used by InputMode::fixed_vector (rescaled to radius r); the
  /// all-ones vector when empty.
  std::vector<double> fixed_direction;

  /// Same sigma and activation in every layer.
  static MlpConfig uniform(int depth, int width, double sigma_w, Activation act);

  double sigma(int layer) const { return sigma_w.at(layer - 1); }
  const Activation& activation(int layer) const { return activations.at(layer - 1); }

  /// Throws PreconditionError naming the offending field.
  void validate() const;
  MlpConfig with_width(int n) const;
};

/// Forward signals of one realization. Layer indices are 1-based; x(0) is the
/// input.
struct LayerSignals {
  std::vector<Vector> pre;       // h^1..h^L
  std::vector<Vector> post;      // x^0..x^L
  std::vector<Vector> jac_diag;  // diagonal of D_1..D_L
  std::vector<double> qhat;      // qhat_0..qhat_L, ||x^l||^2 / N

  int depth() const { return static_cast<int>(pre.size()); }
  const Vector& h(int layer) const { return pre.at(layer - 1); }
  const Vector& x(int layer) const { return post.at(layer); }
  const Vector& d(int layer) const { return jac_diag.at(layer - 1); }
  double q_hat(int layer) const { return qhat.at(layer); }
};

struct NetworkState {
  MlpConfig config;
  std::vector<Matrix> weights;  // W_1..W_L
  LayerSignals signals;

  int depth() const { return config.depth; }
  int width() const { return config.width; }
  const Matrix& W(int layer) const { return weights.at(layer - 1); }
};

/// Draws x^0 and W_1..W_L from disjoint child streams of `rng` (stream 0 for
/// the input, stream l for W_l) and propagates.
NetworkState sample_network(const MlpConfig& cfg, const SeededRng& rng);

/// Same realization as sample_network with the same rng, but the weights are
/// applied through their Householder factors and never materialized.
/// Memory O(N^2) transient, time O(L N^2).
LayerSignals sample_forward(const MlpConfig& cfg, const SeededRng& rng);

/// Deterministic r_l and q_l recurrences.
class TheoryProfile {
 public:
  TheoryProfile(std::vector<double> q, std::vector<double> r) : q_(std::move(q)), r_(std::move(r)) {}

  int depth() const { return static_cast<int>(q_.size()); }
  /// Variance of the hidden units h^l, l = 1..L.
  double q(int layer) const { return q_.at(layer - 1); }
  /// r_l, l = 0..L; r_l^2 is the limit of qhat_l.
  double r(int layer) const { return r_.at(layer); }

 private:
  std::vector<double> q_;
  std::vector<double> r_;
};

TheoryProfile theory_profile(const MlpConfig& cfg, const GaussHermiteRule& rule = default_rule());

/// J_l = D_l W_l ... D_1 W_1.
Matrix input_jacobian_chain(const NetworkState& state, int layer);

/// H_1 = I, H_{l+1} = qhat_l I + W_{l+1} D_l H_l D_l W_{l+1}^T.
std::vector<Matrix> fim_recursion(const NetworkState& state);

/// delta_{L->l} = dh^L/dh^l for l = 1..L (index l-1).
std::vector<Matrix> delta_chains(const NetworkState& state);

/// sum_l qhat_{l-1} delta_{L->l} delta_{L->l}^T.
Matrix delta_chain_sum(const NetworkState& state);

inline constexpr int kParameterJacobianMaxWidth = 128;

/// Dense Jacobian of x^L with respect to (vec W_1, ..., vec W_L), N x L N^2.
/// Column (l-1) N^2 + i N + j is d x^L / d (W_l)_{ij}. Test oracle only; throws
/// PreconditionError above kParameterJacobianMaxWidth.
Matrix parameter_jacobian_oracle(const NetworkState& state);

/// D_L H_L D_L, the dual of the conditional Fisher information.
Matrix conditional_fim_dual(const NetworkState& state);

/// Compares the spectrum of the conditional FIM (1/N) J_theta^T J_theta
/// (L N^2 eigenvalues, from the dense oracle) with the multiset made of the N
/// eigenvalues of D_L H_L D_L plus L N^2 - N zeros.
struct DualSpectrumCheck {
  double max_abs_diff = 0.0;
  double scale = 0.0;              // largest |eigenvalue|
  std::size_t zero_count = 0;      // FIM eigenvalues with |lambda| <= 1e-9 * max(scale, 1)
  std::size_t expected_zero_count = 0;  // L N^2 - N plus zeros of D_L H_L D_L
};

DualSpectrumCheck fim_dual_spectrum_check(const NetworkState& state);

}  // namespace freejac
