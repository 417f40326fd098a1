#include "freejac/freeness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>

#include "freejac/errors.hpp"
#include "freejac/free_calculus.hpp"
#include "freejac/parallel.hpp"
#include "freejac/spectral.hpp"

namespace freejac {

// ---------------------------------------------------------------------------
// Invariance construction

InvarianceArtifacts build_invariance(const Vector& x, SeededRng& rng) {
  const Eigen::Index n = x.size();
  require(n >= 2, "build_invariance: dimension must be >= 2");
  const double norm = x.norm();
  require(norm > 0.0 && std::isfinite(norm), "build_invariance: x is numerically zero");

  InvarianceArtifacts out;
  Eigen::Index nhat = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(x(i)) > 1e-12 * norm) {
      nhat = i;
      break;
    }
  }
  if (nhat < 0) throw PreconditionError("build_invariance: x is numerically zero");
  out.nhat = static_cast<int>(nhat) + 1;

  // Basis (e_1, ..., e_{nhat-1}, e_{nhat+1}, ..., e_N, x/|x|), orthonormalized
  // from the last element backwards.
  Matrix f(n, n);
  f.col(n - 1) = x / norm;
  std::vector<Eigen::Index> coords;
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != nhat) coords.push_back(i);
  for (Eigen::Index k = n - 2; k >= 0; --k) {
    Vector v = Vector::Unit(n, coords[k]);
    const auto done = f.rightCols(n - 1 - k);
    v -= done * (done.transpose() * v);
    double vnorm = v.norm();
    if ((done.transpose() * v).cwiseAbs().maxCoeff() > 1e-10 * vnorm) {
      v -= done * (done.transpose() * v);
      vnorm = v.norm();
    }
    if (!(vnorm > 0.0)) throw NumericalError("build_invariance: Gram-Schmidt breakdown");
    f.col(k) = v / vnorm;
  }

  out.Y = f.transpose();
  out.V = sample_haar_orthogonal(rng, n - 1);
  Matrix block = Matrix::Zero(n, n);
  block.topLeftCorner(n - 1, n - 1) = out.V;
  block(n - 1, n - 1) = 1.0;
  out.U = out.Y.transpose() * block * out.Y;
  return out;
}

// ---------------------------------------------------------------------------
// Invariance statistical test

namespace {

constexpr std::uint64_t kProbeStream = 0x70726f6265ULL;

const std::vector<std::string>& probe_names() {
  static const std::vector<std::string> names{"trace",        "hidden",      "charfn_cos",
                                              "charfn_sin",   "entry_first", "entry_second",
                                              "entry_joint"};
  return names;
}

void evaluate_probes(const Matrix& w, double sigma, const Vector& x_prev, const Vector& h,
                     double qhat_prev, const Matrix& probe_t, const Vector& probe_xi,
                     double* out) {
  const double n = static_cast<double>(w.rows());
  const double trace = probe_t.cwiseProduct(w).sum() / sigma;
  const double h_scale = qhat_prev > 0.0 ? sigma * std::sqrt(qhat_prev) : 1.0;  // h = 0 on a dead layer
  const double xi_h = probe_xi.dot(h) / h_scale;
  const double xi_wx = probe_xi.dot(w * x_prev) / h_scale;
  const double w11 = std::sqrt(n) * w(0, 0) / sigma;
  out[0] = trace;
  out[1] = xi_wx * xi_h;
  out[2] = std::cos(trace + xi_h);
  out[3] = std::sin(trace + xi_h);
  out[4] = w11;
  out[5] = w11 * w11;
  out[6] = w11 * h(0) / h_scale;
}

}  // namespace

FreenessReport invariance_statistical_test(const MlpConfig& cfg, int trials, const SeededRng& rng,
                                           RotationControl control, double z_threshold,
                                           int threads) {
  cfg.validate();
  require(trials >= 2, "invariance_statistical_test: need at least 2 trials");
  const int depth = cfg.depth;
  const int n = cfg.width;
  const std::size_t probes = probe_names().size();

  SeededRng probe_rng = rng.child(kProbeStream);
  const Matrix probe_t = sample_gaussian_matrix(probe_rng, n, n, 1.0 / std::sqrt(static_cast<double>(n)));
  Vector probe_xi(n);
  for (int i = 0; i < n; ++i) probe_xi(i) = probe_rng.normal();
  probe_xi.normalize();

  // Per trial: [layer][probe][original, rotated]
  const std::size_t stride = static_cast<std::size_t>(depth) * probes * 2;
  std::vector<double> values(static_cast<std::size_t>(trials) * stride);
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
    const SeededRng trial = rng.child(t);
    const NetworkState state = sample_network(cfg, trial.child(0));
    double* row = values.data() + t * stride;
    for (int layer = 1; layer <= depth; ++layer) {
      const Vector& x_prev = state.signals.x(layer - 1);
      SeededRng rot_rng = trial.child(control == RotationControl::fixing ? 1 : 2).child(layer);
      // A dead layer (x = 0 under relu at small N) is fixed by every rotation.
      const bool dead = x_prev.norm() == 0.0;
      const Matrix u = control == RotationControl::fixing && !dead
                           ? build_invariance(x_prev, rot_rng).U
                           : sample_haar_orthogonal(rot_rng, n);
      const Matrix& w = state.W(layer);
      const Matrix rotated = w * u;
      std::vector<double> orig(probes), rot(probes);
      evaluate_probes(w, cfg.sigma(layer), x_prev, state.signals.h(layer),
                      state.signals.q_hat(layer - 1), probe_t, probe_xi, orig.data());
      evaluate_probes(rotated, cfg.sigma(layer), x_prev, state.signals.h(layer),
                      state.signals.q_hat(layer - 1), probe_t, probe_xi, rot.data());
      for (std::size_t p = 0; p < probes; ++p) {
        row[((layer - 1) * probes + p) * 2] = orig[p];
        row[((layer - 1) * probes + p) * 2 + 1] = rot[p];
      }
    }
  });

  FreenessReport report;
  report.test_name = control == RotationControl::fixing ? "invariance" : "invariance_negative_control";
  report.sweep = {n};
  report.tolerance = z_threshold;
  double max_z = 0.0;
  double max_se = 0.0;
  for (int layer = 1; layer <= depth; ++layer) {
    for (std::size_t p = 0; p < probes; ++p) {
      RunningStats a, b;
      for (int t = 0; t < trials; ++t) {
        const double* row = values.data() + static_cast<std::size_t>(t) * stride;
        a.add(row[((layer - 1) * probes + p) * 2]);
        b.add(row[((layer - 1) * probes + p) * 2 + 1]);
      }
      ProbeResult r;
      r.probe = probe_names()[p];
      r.layer = layer;
      r.mean_original = a.mean();
      r.mean_rotated = b.mean();
      r.standard_error = std::sqrt(a.variance() / trials + b.variance() / trials);
      const double diff = std::abs(a.mean() - b.mean());
      // Identical samples on both sides (e.g. the hidden probe with a fixing
      // rotation) differ only by rounding.
      r.z = r.standard_error > 0.0 ? diff / r.standard_error : (diff > 1e-12 ? INFINITY : 0.0);
      if (r.z >= max_z) {
        max_z = r.z;
        max_se = r.standard_error;
      }
      report.probes.push_back(r);
    }
  }
  report.statistic = {max_z};
  report.standard_error = {max_se};
  report.pass = max_z <= z_threshold;
  return report;
}

// ---------------------------------------------------------------------------
// Cutoff

CutoffTraceResult cutoff_trace_check(const std::vector<Matrix>& matrices, double C) {
  require(!matrices.empty(), "cutoff_trace_check: need at least one matrix");
  require(C > 0.0, "cutoff_trace_check: C must be positive");
  const Eigen::Index n = matrices.front().rows();
  require(n >= 2, "cutoff_trace_check: matrices must be at least 2x2");
  const int count = static_cast<int>(matrices.size());
  for (const Matrix& x : matrices) {
    require(x.rows() == n && x.cols() == n, "cutoff_trace_check: matrices must be square of equal size");
    require(schatten_norm(x, count) <= C * (1.0 + 1e-9),
            "cutoff_trace_check: a matrix exceeds the Schatten-n bound C");
  }
  const auto cut = [n](Matrix m) {
    m.row(n - 1).setZero();
    m.col(n - 1).setZero();
    return m;
  };
  Matrix full = matrices.front();
  Matrix compressed = cut(matrices.front());
  for (int j = 1; j < count; ++j) {
    Matrix next = full * matrices[j];
    full = std::move(next);
    Matrix next_c = compressed * cut(matrices[j]);
    compressed = std::move(next_c);
  }
  CutoffTraceResult r;
  const double dn = static_cast<double>(n);
  r.lhs = std::abs(normalized_trace(compressed) - normalized_trace(full));
  r.bound = count * std::pow(C, count) / std::pow(dn, 1.0 / count);
  r.stated_bound = count * std::pow(C, count) / std::pow(dn, count);
  r.holds = r.lhs <= r.bound;
  r.stated_holds = r.lhs <= r.stated_bound;
  return r;
}

CutoffApproxResult cutoff_orthogonal_approx(const Matrix& w, int p) {
  const Eigen::Index n = w.rows();
  require(n >= 2 && w.cols() == n, "cutoff_orthogonal_approx: need a square matrix with N >= 2");
  require(p >= 1, "cutoff_orthogonal_approx: p must be >= 1");
  const double orth = (w.transpose() * w - Matrix::Identity(n, n)).norm();
  require(orth <= 1e-8 * static_cast<double>(n), "cutoff_orthogonal_approx: w is not orthogonal");
  const Matrix corner = w.topLeftCorner(n - 1, n - 1);
  const SvdResult dec = svd(corner);
  CutoffApproxResult r;
  r.approx = dec.u * dec.v.transpose();
  r.error = schatten_norm(corner - r.approx, p);
  r.bound = std::pow(static_cast<double>(n - 1), -1.0 / p);
  // A few ulps of slack: the corner can be exactly orthogonal up to rounding.
  r.holds = r.error <= r.bound * (1.0 + 1e-12);
  return r;
}

// ---------------------------------------------------------------------------
// Alternating freeness

namespace {

enum class LetterKind { weight, weight_transpose, jac_power, jacobian_gram, conjugated_gram, fim };

struct ParsedLetter {
  LetterKind kind;
  int layer = 0;
  int power = 1;
};

ParsedLetter parse_letter(const std::string& expr) {
  static const std::regex weight(R"(W(\d+)(T?))");
  static const std::regex diag(R"(D(\d+)(?:\^(\d+))?)");
  static const std::regex gram(R"(JJ(\d+))");
  static const std::regex conj(R"(WJJW(\d+))");
  static const std::regex fim(R"(H(\d+))");
  std::smatch m;
  if (std::regex_match(expr, m, conj)) return {LetterKind::conjugated_gram, std::stoi(m[1])};
  if (std::regex_match(expr, m, weight))
    return {m[2].length() ? LetterKind::weight_transpose : LetterKind::weight, std::stoi(m[1])};
  if (std::regex_match(expr, m, diag))
    return {LetterKind::jac_power, std::stoi(m[1]), m[2].matched ? std::stoi(m[2]) : 1};
  if (std::regex_match(expr, m, gram)) return {LetterKind::jacobian_gram, std::stoi(m[1])};
  if (std::regex_match(expr, m, fim)) return {LetterKind::fim, std::stoi(m[1])};
  throw PreconditionError("unknown letter expression '" + expr + "'");
}

int max_layer_needed(const ParsedLetter& l) {
  return l.kind == LetterKind::conjugated_gram ? l.layer + 1 : l.layer;
}

// Either a diagonal (stored as a vector) or a dense matrix.
struct LetterValue {
  std::optional<Vector> diagonal;
  Matrix dense;
};

class LetterEvaluator {
 public:
  explicit LetterEvaluator(const NetworkState& state) : state_(state) {}

  LetterValue centered(const ParsedLetter& l) {
    LetterValue v = raw(l);
    if (v.diagonal) {
      v.diagonal->array() -= v.diagonal->mean();
    } else {
      const double t = normalized_trace(v.dense);
      v.dense.diagonal().array() -= t;
    }
    return v;
  }

 private:
  LetterValue raw(const ParsedLetter& l) {
    switch (l.kind) {
      case LetterKind::weight: return {std::nullopt, state_.W(l.layer) / state_.config.sigma(l.layer)};
      case LetterKind::weight_transpose:
        return {std::nullopt, state_.W(l.layer).transpose() / state_.config.sigma(l.layer)};
      case LetterKind::jac_power: return {state_.signals.d(l.layer).array().pow(l.power).matrix(), {}};
      case LetterKind::jacobian_gram: return {std::nullopt, gram(l.layer)};
      case LetterKind::conjugated_gram: {
        const Matrix& w = state_.W(l.layer + 1);
        Matrix left = w * gram(l.layer);
        return {std::nullopt, left * w.transpose()};
      }
      case LetterKind::fim: {
        if (fims_.empty()) fims_ = fim_recursion(state_);
        return {std::nullopt, fims_.at(l.layer - 1)};
      }
    }
    return {};
  }

  const Matrix& gram(int layer) {
    auto it = grams_.find(layer);
    if (it == grams_.end()) {
      const Matrix j = input_jacobian_chain(state_, layer);
      it = grams_.emplace(layer, j * j.transpose()).first;
    }
    return it->second;
  }

  const NetworkState& state_;
  std::map<int, Matrix> grams_;
  std::vector<Matrix> fims_;
};

}  // namespace

std::string describe(const Word& word) {
  std::string out;
  for (const Letter& l : word) {
    if (!out.empty()) out += ' ';
    out += "(" + l.expr + ")[" + l.family + "]";
  }
  return out;
}

void validate_word(const Word& word, const MlpConfig& cfg) {
  require(!word.empty(), "word: must contain at least one letter");
  for (std::size_t i = 0; i < word.size(); ++i) {
    const ParsedLetter l = parse_letter(word[i].expr);
    require(l.layer >= 1 && max_layer_needed(l) <= cfg.depth,
            "word: letter '" + word[i].expr + "' refers to a layer outside the network");
    require(l.power >= 1, "word: diagonal power must be >= 1");
    if (i > 0 && word[i].family == word[i - 1].family)
      throw PreconditionError("word: adjacent letters " + std::to_string(i) + " and " +
                              std::to_string(i + 1) + " belong to the same family '" +
                              word[i].family + "'");
  }
}

double centered_word_trace(const Word& word, const NetworkState& state) {
  validate_word(word, state.config);
  LetterEvaluator eval(state);
  std::optional<Matrix> acc;
  std::optional<Vector> diag_acc;  // product so far while every letter is diagonal
  for (const Letter& letter : word) {
    LetterValue v = eval.centered(parse_letter(letter.expr));
    if (!acc) {
      if (v.diagonal) {
        diag_acc = diag_acc ? Vector(diag_acc->cwiseProduct(*v.diagonal)) : *v.diagonal;
        continue;
      }
      acc = diag_acc ? Matrix(diag_acc->asDiagonal() * v.dense) : std::move(v.dense);
      continue;
    }
    if (v.diagonal) {
      *acc = *acc * v.diagonal->asDiagonal();
    } else {
      Matrix next = *acc * v.dense;
      acc = std::move(next);
    }
  }
  if (!acc) return diag_acc->mean();
  return normalized_trace(*acc);
}

FreenessReport alternating_freeness_test(const Word& word, const MlpConfig& cfg,
                                         const std::vector<int>& sweep, int trials,
                                         const SeededRng& rng, double tolerance, int threads) {
  cfg.validate();
  validate_word(word, cfg);
  require(!sweep.empty(), "alternating_freeness_test: empty width sweep");
  require(std::is_sorted(sweep.begin(), sweep.end()), "alternating_freeness_test: sweep must ascend");
  require(trials >= 2, "alternating_freeness_test: need at least 2 trials");

  FreenessReport report;
  report.test_name = "alternating_freeness";
  report.sweep = sweep;
  report.words = {describe(word)};
  report.tolerance = tolerance;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const MlpConfig sized = cfg.with_width(sweep[i]);
    const SeededRng width_rng = rng.child(static_cast<std::uint64_t>(sweep[i]));
    std::vector<double> values(trials);
    parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
      const NetworkState state = sample_network(sized, width_rng.child(t));
      values[t] = std::abs(centered_word_trace(word, state));
    });
    RunningStats stats;
    for (double v : values) stats.add(v);
    report.statistic.push_back(stats.mean());
    report.standard_error.push_back(stats.standard_error());
  }
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    const double se = std::hypot(report.standard_error[i - 1], report.standard_error[i]);
    if (report.statistic[i] > report.statistic[i - 1] + 2.0 * se) report.monotone = false;
  }
  report.pass = report.monotone && report.statistic.back() < tolerance;
  return report;
}

FreenessReport freeness_moment_prediction_test(PredictionTarget target, int layer,
                                               const MlpConfig& cfg, const std::vector<int>& sweep,
                                               int trials, int order, const SeededRng& rng,
                                               double rel_tol, double se_tol, int threads) {
  cfg.validate();
  require(layer >= 1 && layer <= cfg.depth, "freeness_moment_prediction_test: layer out of range");
  require(order >= 1, "freeness_moment_prediction_test: order must be >= 1");
  require(!sweep.empty(), "freeness_moment_prediction_test: empty width sweep");
  require(trials >= 2, "freeness_moment_prediction_test: need at least 2 trials");

  const MomentSeries theory =
      target == PredictionTarget::jacobian ? predict_xi(cfg, layer, order) : predict_mu(cfg, layer, order);

  FreenessReport report;
  report.test_name = target == PredictionTarget::jacobian ? "jacobian_moments" : "fim_moments";
  report.sweep = sweep;
  report.tolerance = rel_tol;
  bool last_pass = true;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const MlpConfig sized = cfg.with_width(sweep[i]);
    const SeededRng width_rng = rng.child(static_cast<std::uint64_t>(sweep[i]));
    std::vector<MomentSeries> samples(trials);
    parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
      const NetworkState state = sample_network(sized, width_rng.child(t));
      Matrix a;
      if (target == PredictionTarget::jacobian) {
        const Matrix j = input_jacobian_chain(state, layer);
        a = j * j.transpose();
      } else {
        a = fim_recursion(state).at(layer - 1);
      }
      samples[t] = trace_moments(a, order);
    });
    double worst = 0.0;
    double worst_se = 0.0;
    bool all_within = true;
    for (int k = 1; k <= order; ++k) {
      RunningStats stats;
      for (const MomentSeries& m : samples) stats.add(m[k]);
      MomentRow row;
      row.width = sweep[i];
      row.k = k;
      row.empirical = stats.mean();
      row.standard_error = stats.standard_error();
      row.theory = theory[k];
      const double diff = std::abs(row.empirical - row.theory);
      row.rel_err = row.theory != 0.0 ? diff / std::abs(row.theory) : diff;
      row.within = diff <= std::max(rel_tol * std::abs(row.theory), se_tol * row.standard_error);
      all_within = all_within && row.within;
      if (row.rel_err >= worst) {
        worst = row.rel_err;
        worst_se = row.standard_error;
      }
      report.moments.push_back(row);
    }
    report.statistic.push_back(worst);
    report.standard_error.push_back(worst_se);
    last_pass = all_within;
  }
  report.pass = last_pass;
  return report;
}

}  // namespace freejac
