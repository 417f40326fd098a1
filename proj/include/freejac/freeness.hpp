#pragma once

#include <string>
#include <vector>

#include "freejac/linalg.hpp"
#include "freejac/mlp.hpp"
#include "freejac/rng.hpp"

namespace freejac {

// ---------------------------------------------------------------------------
// Invariance construction

/// Y maps the reverse Gram-Schmidt basis (f_1, ..., f_N = x/|x|) to the
/// standard basis; U = Y^T diag(V, 1) Y fixes x and rotates x-perp by the
/// Haar matrix V.
struct InvarianceArtifacts {
  Matrix Y;
  Matrix U;
  Matrix V;
  int nhat = 0;  // 1-based index of the first coordinate with |x_n| > 1e-12 |x|
};

InvarianceArtifacts build_invariance(const Vector& x, SeededRng& rng);

// ---------------------------------------------------------------------------
// Reports

/// Mean of one probe statistic under the original and the rotated weights.
struct ProbeResult {
  std::string probe;
  int layer = 0;
  double mean_original = 0.0;
  double mean_rotated = 0.0;
  double standard_error = 0.0;  // of the difference
  double z = 0.0;               // |difference| / standard_error
};

struct MomentRow {
  int width = 0;
  int k = 0;
  double empirical = 0.0;
  double standard_error = 0.0;
  double theory = 0.0;
  double rel_err = 0.0;
  bool within = false;
};

struct FreenessReport {
  std::string test_name;
  std::vector<int> sweep;
  std::vector<double> statistic;        // per width
  std::vector<double> standard_error;   // per width
  std::vector<std::string> words;
  double tolerance = 0.0;
  bool monotone = true;
  bool pass = false;
  std::vector<ProbeResult> probes;      // invariance tests
  std::vector<MomentRow> moments;       // moment-prediction tests
};

// ---------------------------------------------------------------------------
// Structural checks

enum class RotationControl {
  fixing,       // U_{l-1} from build_invariance: fixes x^{l-1}
  non_fixing,   // negative control: independent Haar rotation of R^N
};

inline constexpr double kInvarianceZThreshold = 4.0;

/// Compares Monte-Carlo means of probe statistics of (W_l, h^l) against
/// (W_l U_{l-1}, h^l) across `trials` independent networks. Probes per layer:
/// Tr(T^T W), <xi, W x^{l-1}><xi, h^l>, cos and sin of Tr(T^T W) + <xi, h^l>,
/// and the entry statistics W_11, W_11^2, W_11 h^l_1 (all normalized to
/// unit scale). pass iff every |difference| <= 4 standard errors.
FreenessReport invariance_statistical_test(const MlpConfig& cfg, int trials, const SeededRng& rng,
                                           RotationControl control = RotationControl::fixing,
                                           double z_threshold = kInvarianceZThreshold,
                                           int threads = 1);

struct CutoffTraceResult {
  double lhs = 0.0;           // |tr[P X_1 P ... P X_n P] - tr[X_1 ... X_n]|
  double bound = 0.0;         // n C^n / N^(1/n)
  double stated_bound = 0.0;  // n C^n / N^n
  bool holds = false;
  bool stated_holds = false;
};

/// P = diag(1, ..., 1, 0). Every ||X_j||_n (normalized Schatten norm) must be
/// at most C.
CutoffTraceResult cutoff_trace_check(const std::vector<Matrix>& matrices, double C);

struct CutoffApproxResult {
  Matrix approx;       // the (N-1) x (N-1) orthogonal matrix U_1 U_2
  double error = 0.0;  // Schatten-p norm of corner(P W P) - approx, normalized over N - 1
  double bound = 0.0;  // (N - 1)^(-1/p)
  bool holds = false;
};

CutoffApproxResult cutoff_orthogonal_approx(const Matrix& w, int p);

// ---------------------------------------------------------------------------
// Asymptotic freeness

/// A letter of a word: a matrix built from one network realization plus the
/// family it is claimed to belong to. Expressions (l is a layer index):
///   W<l>      W_l / sigma_l          W<l>T    its transpose
///   D<l>^<k>  D_l^k                  JJ<l>    J_l J_l^T
///   WJJW<l>   W_{l+1} J_l J_l^T W_{l+1}^T
///   H<l>      H_l from fim_recursion
struct Letter {
  std::string family;
  std::string expr;
};

using Word = std::vector<Letter>;

std::string describe(const Word& word);

/// Throws PreconditionError for an empty word, an unknown expression, a layer
/// outside the config, or two adjacent letters from the same family.
void validate_word(const Word& word, const MlpConfig& cfg);

/// tr of the product of centered letters (A - tr(A) I) for one realization.
double centered_word_trace(const Word& word, const NetworkState& state);

inline constexpr double kFreenessTolerance = 0.02;

/// For each width in `sweep`, mean over trials of |tr(centered word)|. pass
/// iff the statistic is nonincreasing across the sweep within 2 standard
/// errors and the last value is below `tolerance`.
FreenessReport alternating_freeness_test(const Word& word, const MlpConfig& cfg,
                                         const std::vector<int>& sweep, int trials,
                                         const SeededRng& rng,
                                         double tolerance = kFreenessTolerance, int threads = 1);

enum class PredictionTarget { jacobian, fim };

inline constexpr double kMomentRelTolerance = 0.05;
inline constexpr double kMomentSeTolerance = 3.0;

/// Empirical moments m_1..m_order of J_l J_l^T (jacobian) or H_l (fim)
/// against predict_xi / predict_mu. pass iff at the largest width every
/// moment is within max(rel_tol relative, se_tol standard errors) of the
/// prediction.
FreenessReport freeness_moment_prediction_test(PredictionTarget target, int layer,
                                               const MlpConfig& cfg, const std::vector<int>& sweep,
                                               int trials, int order, const SeededRng& rng,
                                               double rel_tol = kMomentRelTolerance,
                                               double se_tol = kMomentSeTolerance, int threads = 1);

}  // namespace freejac
