#include "freejac/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "freejac/free_calculus.hpp"
#include "freejac/freeness.hpp"
#include "freejac/parallel.hpp"
#include "freejac/spectral.hpp"

namespace freejac {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

template <typename T>
T get_field(const json& doc, const std::string& key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": wrong type");
  }
}

std::vector<double> scalar_or_list(const json& doc, const std::string& key, int depth,
                                   double fallback) {
  if (!doc.contains(key)) return std::vector<double>(depth, fallback);
  const json& v = doc.at(key);
  if (v.is_number()) return std::vector<double>(depth, v.get<double>());
  if (!v.is_array()) throw ConfigError(key + ": expected a number or a list");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) throw ConfigError(key + ": list entries must be numbers");
    out.push_back(e.get<double>());
  }
  if (static_cast<int>(out.size()) != depth) throw ConfigError(key + ": need one value per layer");
  return out;
}

const std::vector<std::string> kKnownKeys{
    "command", "depth", "width", "sigma_w", "sigma_w2", "activation", "shifted_relu_alpha",
    "input_radius", "input_mode", "fixed_direction", "sweep", "trials", "seed", "moment_order",
    "output_dir", "tolerances", "layer", "matrix", "bins", "words", "orders", "p_values"};

}  // namespace

double ExperimentConfig::tolerance(const std::string& key, double fallback) const {
  const auto it = tolerances.find(key);
  return it == tolerances.end() ? fallback : it->second;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end())
      throw ConfigError(key + ": unknown field");

  ExperimentConfig cfg;
  if (!doc.contains("command")) throw ConfigError("command: missing");
  cfg.command = get_field<std::string>(doc, "command", "");
  const auto& cmds = known_commands();
  if (std::find(cmds.begin(), cmds.end(), cfg.command) == cmds.end())
    throw ConfigError("command: unknown command '" + cfg.command + "'");

  MlpConfig& net = cfg.network;
  net.depth = get_field<int>(doc, "depth", 3);
  if (net.depth < 1) throw ConfigError("depth: must be >= 1");
  net.width = get_field<int>(doc, "width", 256);
  if (net.width < 2) throw ConfigError("width: must be >= 2");

  if (doc.contains("sigma_w") && doc.contains("sigma_w2"))
    throw ConfigError("sigma_w: give either sigma_w or sigma_w2, not both");
  if (doc.contains("sigma_w2")) {
    const auto sq = scalar_or_list(doc, "sigma_w2", net.depth, 1.0);
    for (double v : sq)
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("sigma_w2: must be positive");
    for (double v : sq) net.sigma_w.push_back(std::sqrt(v));
  } else {
    net.sigma_w = scalar_or_list(doc, "sigma_w", net.depth, 1.0);
    for (double v : net.sigma_w)
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("sigma_w: must be positive");
  }

  const double alpha = get_field<double>(doc, "shifted_relu_alpha", 0.5);
  if (!std::isfinite(alpha)) throw ConfigError("shifted_relu_alpha: must be finite");
  std::vector<std::string> acts;
  if (!doc.contains("activation")) {
    acts.assign(net.depth, "tanh");
  } else if (doc.at("activation").is_string()) {
    acts.assign(net.depth, doc.at("activation").get<std::string>());
  } else {
    acts = get_field<std::vector<std::string>>(doc, "activation", {});
    if (static_cast<int>(acts.size()) != net.depth)
      throw ConfigError("activation: need one value per layer");
  }
  for (const auto& a : acts) {
    try {
      net.activations.push_back(parse_activation(a, alpha));
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("activation: ") + e.what());
    }
  }

  net.input_radius = get_field<double>(doc, "input_radius", 1.0);
  if (!(net.input_radius > 0.0)) throw ConfigError("input_radius: must be positive");
  const std::string mode = get_field<std::string>(doc, "input_mode", "unit_sphere_scaled");
  if (mode == "unit_sphere_scaled") {
    net.input_mode = InputMode::unit_sphere_scaled;
  } else if (mode == "fixed_vector") {
    net.input_mode = InputMode::fixed_vector;
  } else {
    throw ConfigError("input_mode: expected unit_sphere_scaled or fixed_vector");
  }
  net.fixed_direction = get_field<std::vector<double>>(doc, "fixed_direction", {});
  try {
    net.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }

  cfg.sweep = get_field<std::vector<int>>(doc, "sweep", {net.width});
  if (cfg.sweep.empty()) throw ConfigError("sweep: must be nonempty");
  for (std::size_t i = 0; i < cfg.sweep.size(); ++i) {
    if (cfg.sweep[i] < 2) throw ConfigError("sweep: widths must be >= 2");
    if (i > 0 && cfg.sweep[i] <= cfg.sweep[i - 1]) throw ConfigError("sweep: must be strictly ascending");
  }
  cfg.trials = get_field<int>(doc, "trials", 10);
  if (cfg.trials < 1) throw ConfigError("trials: must be >= 1");
  if (doc.contains("seed") && !doc.at("seed").is_number_integer())
    throw ConfigError("seed: must be an integer");
  cfg.seed = get_field<std::uint64_t>(doc, "seed", 0);
  cfg.moment_order = get_field<int>(doc, "moment_order", 4);
  if (cfg.moment_order < 1) throw ConfigError("moment_order: must be >= 1");
  cfg.output_dir = get_field<std::string>(doc, "output_dir", "freejac_out");
  if (doc.contains("tolerances")) {
    if (!doc.at("tolerances").is_object()) throw ConfigError("tolerances: must be an object");
    for (const auto& [key, value] : doc.at("tolerances").items()) {
      if (!value.is_number()) throw ConfigError("tolerances." + key + ": must be a number");
      cfg.tolerances[key] = value.get<double>();
    }
  }
  for (const char* key : {"layer", "matrix", "bins", "words", "orders", "p_values"})
    if (doc.contains(key)) cfg.params[key] = doc.at(key);
  if (cfg.params.is_null()) cfg.params = json::object();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

json ExperimentConfig::echo() const {
  json j;
  j["command"] = command;
  j["depth"] = network.depth;
  j["width"] = network.width;
  j["sigma_w"] = network.sigma_w;
  std::vector<std::string> acts;
  for (const auto& a : network.activations) acts.push_back(a.name());
  j["activation"] = acts;
  j["shifted_relu_alpha"] = network.activations.front().alpha;
  j["input_radius"] = network.input_radius;
  j["input_mode"] = network.input_mode == InputMode::unit_sphere_scaled ? "unit_sphere_scaled" : "fixed_vector";
  if (!network.fixed_direction.empty()) j["fixed_direction"] = network.fixed_direction;
  j["sweep"] = sweep;
  j["trials"] = trials;
  j["seed"] = seed;
  j["moment_order"] = moment_order;
  j["tolerances"] = tolerances;
  for (const auto& [key, value] : params.items()) j[key] = value;
  return j;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_cell(const Cell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  const std::string& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + "\"";
}

Cell cell(int v) { return static_cast<long long>(v); }
Cell cell(std::size_t v) { return static_cast<long long>(v); }
Cell cell(double v) { return v; }
Cell cell(const std::string& v) { return v; }
Cell cell(const char* v) { return std::string(v); }

}  // namespace

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out += ',';
    out += table.columns[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_cell(row[i]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

json to_json(const FreenessReport& r) {
  json j;
  j["test"] = r.test_name;
  j["sweep"] = r.sweep;
  j["statistic"] = r.statistic;
  j["standard_error"] = r.standard_error;
  if (!r.words.empty()) j["words"] = r.words;
  j["tolerance"] = r.tolerance;
  j["monotone"] = r.monotone;
  j["pass"] = r.pass;
  if (!r.probes.empty()) {
    json probes = json::array();
    for (const auto& p : r.probes)
      probes.push_back({{"probe", p.probe}, {"layer", p.layer}, {"mean_original", p.mean_original},
                        {"mean_rotated", p.mean_rotated}, {"standard_error", p.standard_error},
                        {"z", p.z}});
    j["probes"] = probes;
  }
  if (!r.moments.empty()) {
    json rows = json::array();
    for (const auto& m : r.moments)
      rows.push_back({{"width", m.width}, {"k", m.k}, {"empirical", m.empirical},
                      {"standard_error", m.standard_error}, {"theory", m.theory},
                      {"rel_err", m.rel_err}, {"within", m.within}});
    j["moments"] = rows;
  }
  return j;
}

int param_int(const ExperimentConfig& cfg, const std::string& key, int fallback) {
  if (!cfg.params.contains(key)) return fallback;
  if (!cfg.params.at(key).is_number_integer()) throw ConfigError(key + ": must be an integer");
  return cfg.params.at(key).get<int>();
}

std::vector<int> param_ints(const ExperimentConfig& cfg, const std::string& key, std::vector<int> fallback) {
  if (!cfg.params.contains(key)) return fallback;
  try {
    return cfg.params.at(key).get<std::vector<int>>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": must be a list of integers");
  }
}

struct CommandResult {
  json results;
  std::vector<Table> tables;
  bool pass = true;
};

std::optional<MomentSeries> try_predict(bool jacobian, const MlpConfig& net, int layer, int order) {
  try {
    return jacobian ? predict_xi(net, layer, order) : predict_mu(net, layer, order);
  } catch (const UndefinedTransformError&) {
    return std::nullopt;
  }
}

CommandResult simulate_spectrum(const ExperimentConfig& cfg, const SeededRng& rng, int threads) {
  const MlpConfig& net = cfg.network;
  const std::string matrix = cfg.params.value("matrix", std::string("jacobian"));
  const int bins = param_int(cfg, "bins", 40);
  if (bins < 1) throw ConfigError("bins: must be >= 1");
  if (matrix != "jacobian" && matrix != "fim" && matrix != "fim_dual" && matrix != "conditional_fim")
    throw ConfigError("matrix: expected jacobian, fim, fim_dual or conditional_fim");
  if (matrix == "conditional_fim" && net.width > kParameterJacobianMaxWidth)
    throw ConfigError("width: conditional_fim requires width <= 128");

  std::vector<int> layers;
  if (cfg.params.contains("layer")) {
    const int layer = param_int(cfg, "layer", net.depth);
    if (layer < 1 || layer > net.depth) throw ConfigError("layer: must be in 1..depth");
    if (matrix != "jacobian" && matrix != "fim" && layer != net.depth)
      throw ConfigError("layer: " + matrix + " is defined at the last layer only");
    layers.push_back(layer);
  } else if (matrix == "jacobian" || matrix == "fim") {
    for (int l = 1; l <= net.depth; ++l) layers.push_back(l);
  } else {
    layers.push_back(net.depth);
  }

  // spectra[trial][layer index]
  std::vector<std::vector<std::vector<double>>> spectra(cfg.trials);
  parallel_for(static_cast<std::size_t>(cfg.trials), threads, [&](std::size_t t) {
    const NetworkState state = sample_network(net, rng.child(t));
    std::vector<Matrix> hs;
    if (matrix == "fim") hs = fim_recursion(state);
    for (int layer : layers) {
      std::vector<double> values;
      if (matrix == "jacobian") {
        const Matrix j = input_jacobian_chain(state, layer);
        values = spectrum_of(j * j.transpose()).eigenvalues;
      } else if (matrix == "fim") {
        values = spectrum_of(hs[layer - 1]).eigenvalues;
      } else if (matrix == "fim_dual") {
        values = spectrum_of(conditional_fim_dual(state)).eigenvalues;
      } else {
        // (1/N) J^T J has the squared singular values of J / sqrt(N) and L N^2 - N zeros.
        const Matrix jac = parameter_jacobian_oracle(state);
        const Vector s = singular_values(jac);
        values.assign(static_cast<std::size_t>(net.depth) * net.width * net.width, 0.0);
        for (Eigen::Index i = 0; i < s.size(); ++i) values[i] = s(i) * s(i) / net.width;
      }
      spectra[t].push_back(std::move(values));
    }
  });

  CommandResult out;
  Table hist{"histogram", {"layer", "bin_lo", "bin_hi", "count"}, {}};
  Table moments{"moments", {"layer", "k", "empirical", "theory"}, {}};
  json per_layer = json::array();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const int layer = layers[li];
    std::vector<double> pooled;
    std::vector<RunningStats> stats(cfg.moment_order);
    for (int t = 0; t < cfg.trials; ++t) {
      const auto& values = spectra[t][li];
      pooled.insert(pooled.end(), values.begin(), values.end());
      const MomentSeries m = empirical_moments(EmpiricalSpectrum::from_values(values), cfg.moment_order);
      for (int k = 1; k <= cfg.moment_order; ++k) stats[k - 1].add(m[k]);
    }
    const EmpiricalSpectrum spec = EmpiricalSpectrum::from_values(std::move(pooled));
    const Histogram h = histogram(spec, bins);
    for (int b = 0; b < bins; ++b)
      hist.rows.push_back({cell(layer), cell(h.edges[b]), cell(h.edges[b + 1]), cell(h.counts[b])});

    std::optional<MomentSeries> theory;
    if (matrix == "jacobian") theory = try_predict(true, net, layer, cfg.moment_order);
    if (matrix == "fim") theory = try_predict(false, net, layer, cfg.moment_order);
    if (matrix == "fim_dual") {
      // spectrum(D_L H_L D_L) = spectrum(H_L D_L^2) -> mu_L [x] nu_L
      const auto mu = try_predict(false, net, layer, cfg.moment_order);
      if (mu) {
        try {
          theory = free_multiplicative_convolution(*mu, derivative_laws(net, cfg.moment_order).back());
        } catch (const UndefinedTransformError&) {
        }
      }
    }
    json layer_json{{"layer", layer}, {"min", spec.eigenvalues.front()}, {"max", spec.eigenvalues.back()}};
    json emp = json::array(), th = json::array();
    for (int k = 1; k <= cfg.moment_order; ++k) {
      emp.push_back(stats[k - 1].mean());
      if (theory) th.push_back((*theory)[k]);
      moments.rows.push_back({cell(layer), cell(k), cell(stats[k - 1].mean()),
                              theory ? cell((*theory)[k]) : cell("")});
    }
    layer_json["empirical_moments"] = emp;
    if (theory) layer_json["theory_moments"] = th;
    per_layer.push_back(layer_json);
  }
  out.results = {{"matrix", matrix}, {"bins", bins}, {"layers", per_layer}};
  out.tables = {hist, moments};
  return out;
}

CommandResult theory_profile_cmd(const ExperimentConfig& cfg) {
  const MlpConfig& net = cfg.network;
  const TheoryProfile profile = theory_profile(net);
  CommandResult out;
  Table prof{"profile", {"layer", "q", "r", "r_squared"}, {}};
  prof.rows.push_back({cell(0), cell(""), cell(profile.r(0)), cell(profile.r(0) * profile.r(0))});
  json layers = json::array();
  layers.push_back({{"layer", 0}, {"r", profile.r(0)}});
  for (int l = 1; l <= net.depth; ++l) {
    prof.rows.push_back({cell(l), cell(profile.q(l)), cell(profile.r(l)), cell(profile.r(l) * profile.r(l))});
    layers.push_back({{"layer", l}, {"q", profile.q(l)}, {"r", profile.r(l)}});
  }
  const auto nu = derivative_laws(net, cfg.moment_order);
  Table moments{"moments", {"layer", "k", "nu", "xi", "mu"}, {}};
  json predictions = json::array();
  for (int l = 1; l <= net.depth; ++l) {
    const auto xi = try_predict(true, net, l, cfg.moment_order);
    const auto mu = try_predict(false, net, l, cfg.moment_order);
    json entry{{"layer", l}, {"nu", nu[l - 1].moments}};
    entry["xi"] = xi ? json(xi->moments) : json(nullptr);
    entry["mu"] = mu ? json(mu->moments) : json(nullptr);
    predictions.push_back(entry);
    for (int k = 1; k <= cfg.moment_order; ++k)
      moments.rows.push_back({cell(l), cell(k), cell(nu[l - 1][k]), xi ? cell((*xi)[k]) : cell(""),
                              mu ? cell((*mu)[k]) : cell("")});
  }
  out.results = {{"profile", layers}, {"predictions", predictions}};
  out.tables = {prof, moments};
  return out;
}

CommandResult predict_vs_empirical(const ExperimentConfig& cfg, const SeededRng& rng, int threads) {
  const MlpConfig& net = cfg.network;
  const double rel = cfg.tolerance("moment_rel", kMomentRelTolerance);
  const double se = cfg.tolerance("moment_se", kMomentSeTolerance);
  CommandResult out;
  json results = json::object();
  for (const auto target : {PredictionTarget::jacobian, PredictionTarget::fim}) {
    const bool jac = target == PredictionTarget::jacobian;
    Table table{jac ? "jacobian" : "fim", {"layer", "k", "empirical", "theory", "rel_err"}, {}};
    json reports = json::array();
    for (int l = 1; l <= net.depth; ++l) {
      if (!try_predict(jac, net, l, cfg.moment_order)) {
        reports.push_back({{"layer", l}, {"skipped", "undefined S-transform (zero-mean derivative law)"}});
        out.pass = false;
        continue;
      }
      const FreenessReport r = freeness_moment_prediction_test(
          target, l, net, cfg.sweep, std::max(cfg.trials, 2), cfg.moment_order,
          rng.child(jac ? 1 : 2).child(l), rel, se, threads);
      json rj = to_json(r);
      rj["layer"] = l;
      reports.push_back(rj);
      out.pass = out.pass && r.pass;
      for (const auto& m : r.moments)
        if (m.width == cfg.sweep.back())
          table.rows.push_back({cell(l), cell(m.k), cell(m.empirical), cell(m.theory), cell(m.rel_err)});
    }
    results[jac ? "jacobian" : "fim"] = reports;
    out.tables.push_back(table);
  }
  out.results = results;
  return out;
}

struct WordSpec {
  std::string name;
  Word word;
  bool expect_free = true;
};

std::vector<WordSpec> default_words(int depth) {
  std::vector<WordSpec> words{
      {"w1_d1", {{"W1", "W1"}, {"D1", "D1^2"}}, true},
      {"w1_d1_w1t_d1", {{"W1", "W1"}, {"D1", "D1^2"}, {"W1", "W1T"}, {"D1", "D1^2"}}, true},
  };
  if (depth >= 2) {
    words.push_back({"wjjw1_d2", {{"WJJW1", "WJJW1"}, {"D2", "D2^2"}}, true});
    words.push_back({"wjjw1_d2_x2", {{"WJJW1", "WJJW1"}, {"D2", "D2^2"}, {"WJJW1", "WJJW1"}, {"D2", "D2^2"}}, true});
    words.push_back({"h2_d2_x2", {{"H2", "H2"}, {"D2", "D2^2"}, {"H2", "H2"}, {"D2", "D2^2"}}, true});
  }
  words.push_back({"dependent_d1sq_d1quad", {{"a", "D1^2"}, {"b", "D1^4"}}, false});
  return words;
}

std::vector<WordSpec> parse_words(const json& doc) {
  if (!doc.is_array() || doc.empty()) throw ConfigError("words: must be a nonempty list");
  std::vector<WordSpec> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& w = doc[i];
    WordSpec spec;
    spec.name = w.value("name", "word" + std::to_string(i + 1));
    const std::string expect = w.value("expect", std::string("free"));
    if (expect != "free" && expect != "dependent") throw ConfigError("words.expect: free or dependent");
    spec.expect_free = expect == "free";
    if (!w.contains("letters") || !w.at("letters").is_array()) throw ConfigError("words.letters: missing");
    for (const json& l : w.at("letters")) {
      if (!l.contains("family") || !l.contains("expr")) throw ConfigError("words.letters: need family and expr");
      spec.word.push_back({l.at("family").get<std::string>(), l.at("expr").get<std::string>()});
    }
    out.push_back(std::move(spec));
  }
  return out;
}

CommandResult verify_freeness(const ExperimentConfig& cfg, const SeededRng& rng, int threads) {
  const double tol = cfg.tolerance("freeness", kFreenessTolerance);
  const double floor = cfg.tolerance("dependent_floor", 0.1);
  const auto words = cfg.params.contains("words") ? parse_words(cfg.params.at("words"))
                                                  : default_words(cfg.network.depth);
  CommandResult out;
  Table table{"statistics", {"word", "width", "mean_abs_trace", "standard_error"}, {}};
  json reports = json::array();
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& spec = words[i];
    try {
      validate_word(spec.word, cfg.network);
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("words: ") + e.what());
    }
    const FreenessReport r = alternating_freeness_test(spec.word, cfg.network, cfg.sweep,
                                                       std::max(cfg.trials, 2), rng.child(i), tol, threads);
    const double lowest = *std::min_element(r.statistic.begin(), r.statistic.end());
    const bool ok = spec.expect_free ? r.pass : lowest > floor;
    json rj = to_json(r);
    rj["name"] = spec.name;
    rj["expect"] = spec.expect_free ? "free" : "dependent";
    rj["verdict"] = ok;
    reports.push_back(rj);
    out.pass = out.pass && ok;
    for (std::size_t k = 0; k < r.sweep.size(); ++k)
      table.rows.push_back({cell(spec.name), cell(r.sweep[k]), cell(r.statistic[k]), cell(r.standard_error[k])});
  }
  out.results = {{"words", reports}, {"tolerance", tol}, {"dependent_floor", floor}};
  out.tables = {table};
  return out;
}

CommandResult verify_invariance(const ExperimentConfig& cfg, const SeededRng& rng, int threads) {
  const double z = cfg.tolerance("invariance_z", kInvarianceZThreshold);
  const int trials = std::max(cfg.trials, 2);
  const FreenessReport fixing =
      invariance_statistical_test(cfg.network, trials, rng.child(1), RotationControl::fixing, z, threads);
  const FreenessReport control =
      invariance_statistical_test(cfg.network, trials, rng.child(1), RotationControl::non_fixing, z, threads);
  CommandResult out;
  Table table{"probes", {"control", "layer", "probe", "mean_original", "mean_rotated", "standard_error", "z"}, {}};
  for (const auto* r : {&fixing, &control})
    for (const auto& p : r->probes)
      table.rows.push_back({cell(r == &fixing ? "fixing" : "non_fixing"), cell(p.layer), cell(p.probe),
                            cell(p.mean_original), cell(p.mean_rotated), cell(p.standard_error), cell(p.z)});
  out.pass = fixing.pass && !control.pass;
  out.results = {{"invariance", to_json(fixing)}, {"negative_control", to_json(control)},
                 {"negative_control_detected", !control.pass}};
  out.tables = {table};
  return out;
}

CommandResult verify_cutoff(const ExperimentConfig& cfg, const SeededRng& rng, int threads) {
  const auto orders = param_ints(cfg, "orders", {1, 2, 3});
  const auto ps = param_ints(cfg, "p_values", {1, 2, 4});
  for (int n : orders)
    if (n < 1) throw ConfigError("orders: entries must be >= 1");
  for (int p : ps)
    if (p < 1) throw ConfigError("p_values: entries must be >= 1");
  CommandResult out;
  Table trace{"trace", {"family", "n", "width", "max_lhs", "bound", "stated_bound", "holds_fraction",
                        "stated_holds_fraction"}, {}};
  Table approx{"orthogonal_approx", {"p", "width", "max_error", "bound", "holds_fraction"}, {}};
  json trace_json = json::array(), approx_json = json::array();

  for (std::size_t wi = 0; wi < cfg.sweep.size(); ++wi) {
    const int n_width = cfg.sweep[wi];
    for (const std::string family : {"orthogonal", "gaussian"}) {
      for (int n : orders) {
        std::vector<CutoffTraceResult> results(cfg.trials);
        parallel_for(static_cast<std::size_t>(cfg.trials), threads, [&](std::size_t t) {
          SeededRng r = rng.child(1).child(static_cast<std::uint64_t>(n_width)).child(n).child(family == "gaussian").child(t);
          std::vector<Matrix> xs;
          double c = 1.0;
          for (int j = 0; j < n; ++j) {
            if (family == "orthogonal") {
              xs.push_back(sample_haar_orthogonal(r, n_width));
            } else {
              xs.push_back(sample_gaussian_matrix(r, n_width, n_width, 1.0 / std::sqrt(double(n_width))));
            }
          }
          if (family == "gaussian") {
            c = 0.0;
            for (const Matrix& x : xs) c = std::max(c, schatten_norm(x, n));
          }
          results[t] = cutoff_trace_check(xs, c);
        });
        double max_lhs = 0.0, bound = 0.0, stated = 0.0;
        std::size_t holds = 0, stated_holds = 0;
        for (const auto& res : results) {
          if (res.lhs >= max_lhs) {
            max_lhs = res.lhs;
            bound = res.bound;
            stated = res.stated_bound;
          }
          holds += res.holds;
          stated_holds += res.stated_holds;
        }
        const double frac = static_cast<double>(holds) / results.size();
        const double sfrac = static_cast<double>(stated_holds) / results.size();
        out.pass = out.pass && holds == results.size();
        trace.rows.push_back({cell(family), cell(n), cell(n_width), cell(max_lhs), cell(bound), cell(stated),
                              cell(frac), cell(sfrac)});
        trace_json.push_back({{"family", family}, {"n", n}, {"width", n_width}, {"max_lhs", max_lhs},
                              {"holds_fraction", frac}, {"stated_holds_fraction", sfrac}});
      }
    }
    for (int p : ps) {
      std::vector<CutoffApproxResult> results(cfg.trials);
      parallel_for(static_cast<std::size_t>(cfg.trials), threads, [&](std::size_t t) {
        SeededRng r = rng.child(2).child(static_cast<std::uint64_t>(n_width)).child(p).child(t);
        results[t] = cutoff_orthogonal_approx(sample_haar_orthogonal(r, n_width), p);
      });
      double max_err = 0.0;
      std::size_t holds = 0;
      for (const auto& res : results) {
        max_err = std::max(max_err, res.error);
        holds += res.holds;
      }
      const double bound = std::pow(static_cast<double>(n_width - 1), -1.0 / p);
      const double frac = static_cast<double>(holds) / results.size();
      out.pass = out.pass && holds == results.size();
      approx.rows.push_back({cell(p), cell(n_width), cell(max_err), cell(bound), cell(frac)});
      approx_json.push_back({{"p", p}, {"width", n_width}, {"max_error", max_err}, {"bound", bound},
                             {"holds_fraction", frac}});
    }
  }
  out.results = {{"trace", trace_json}, {"orthogonal_approx", approx_json}};
  out.tables = {trace, approx};
  return out;
}

CommandResult gaussian_propagation(const ExperimentConfig& cfg, const SeededRng& rng, int threads) {
  const MlpConfig& net = cfg.network;
  const double tol = cfg.tolerance("ks", 0.05);
  const int layers = std::min(net.depth, 4);
  const TheoryProfile profile = theory_profile(net);
  CommandResult out;
  Table table{"ks", {"width", "layer", "ks_mean", "standard_error"}, {}};
  std::vector<std::vector<double>> means(cfg.sweep.size(), std::vector<double>(layers));
  for (std::size_t wi = 0; wi < cfg.sweep.size(); ++wi) {
    const MlpConfig sized = net.with_width(cfg.sweep[wi]);
    std::vector<std::vector<double>> ks(cfg.trials, std::vector<double>(layers));
    parallel_for(static_cast<std::size_t>(cfg.trials), threads, [&](std::size_t t) {
      const LayerSignals s = sample_forward(sized, rng.child(t));
      for (int l = 1; l <= layers; ++l) {
        const Vector& h = s.h(l);
        ks[t][l - 1] = ks_distance_to_gaussian(std::span<const double>(h.data(), h.size()), 0.0, profile.q(l));
      }
    });
    for (int l = 1; l <= layers; ++l) {
      RunningStats stats;
      for (int t = 0; t < cfg.trials; ++t) stats.add(ks[t][l - 1]);
      means[wi][l - 1] = stats.mean();
      table.rows.push_back({cell(cfg.sweep[wi]), cell(l), cell(stats.mean()), cell(stats.standard_error())});
    }
  }
  json layer_json = json::array();
  for (int l = 1; l <= layers; ++l) {
    const bool below = means.back()[l - 1] < tol;
    const bool decreased = cfg.sweep.size() < 2 || means.back()[l - 1] < means.front()[l - 1];
    out.pass = out.pass && below && decreased;
    layer_json.push_back({{"layer", l}, {"q", profile.q(l)}, {"ks_smallest_width", means.front()[l - 1]},
                          {"ks_largest_width", means.back()[l - 1]}, {"below_tolerance", below},
                          {"decreased", decreased}});
  }
  out.results = {{"tolerance", tol}, {"layers", layer_json}};
  out.tables = {table};
  return out;
}

CommandResult fim_duality(const ExperimentConfig& cfg, const SeededRng& rng, int threads) {
  const MlpConfig& net = cfg.network;
  if (net.width > kParameterJacobianMaxWidth) throw ConfigError("width: fim-duality requires width <= 128");
  const double tol = cfg.tolerance("identity", 1e-9);
  const double n = net.width;
  struct Row {
    double recursion_vs_delta, oracle_vs_dual, spectrum_diff, scale;
    std::size_t zeros, expected_zeros;
  };
  std::vector<Row> rows(cfg.trials);
  parallel_for(static_cast<std::size_t>(cfg.trials), threads, [&](std::size_t t) {
    const NetworkState state = sample_network(net, rng.child(t));
    const Matrix h_last = fim_recursion(state).back();
    const Matrix jac = parameter_jacobian_oracle(state);
    const DualSpectrumCheck dual = fim_dual_spectrum_check(state);
    rows[t] = {(h_last - delta_chain_sum(state)).norm(),
               (jac * jac.transpose() / n - conditional_fim_dual(state)).norm(),
               dual.max_abs_diff, dual.scale, dual.zero_count, dual.expected_zero_count};
  });
  CommandResult out;
  Table table{"checks", {"trial", "check", "value", "tolerance", "pass"}, {}};
  json trials = json::array();
  for (int t = 0; t < cfg.trials; ++t) {
    const Row& r = rows[t];
    const double id_tol = tol * n;
    const double spec_tol = tol * std::max(r.scale, 1.0);
    const bool a = r.recursion_vs_delta <= id_tol;
    const bool b = r.oracle_vs_dual <= id_tol;
    const bool c = r.spectrum_diff <= spec_tol && r.zeros == r.expected_zeros;
    out.pass = out.pass && a && b && c;
    table.rows.push_back({cell(t), cell("recursion_vs_delta_sum"), cell(r.recursion_vs_delta), cell(id_tol), cell(a ? "true" : "false")});
    table.rows.push_back({cell(t), cell("oracle_vs_dhd"), cell(r.oracle_vs_dual), cell(id_tol), cell(b ? "true" : "false")});
    table.rows.push_back({cell(t), cell("dual_spectrum"), cell(r.spectrum_diff), cell(spec_tol), cell(c ? "true" : "false")});
    trials.push_back({{"trial", t}, {"recursion_vs_delta_sum", r.recursion_vs_delta},
                      {"oracle_vs_dhd", r.oracle_vs_dual}, {"dual_spectrum_max_diff", r.spectrum_diff},
                      {"zero_eigenvalues", r.zeros}, {"expected_zero_eigenvalues", r.expected_zeros}});
  }
  out.results = {{"trials", trials}, {"tolerance", tol}};
  out.tables = {table};
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, int threads) {
  const auto start = std::chrono::steady_clock::now();
  const SeededRng rng(cfg.seed, 0);
  CommandResult result;
  if (cfg.command == "simulate-spectrum") result = simulate_spectrum(cfg, rng, threads);
  else if (cfg.command == "theory-profile") result = theory_profile_cmd(cfg);
  else if (cfg.command == "predict-vs-empirical") result = predict_vs_empirical(cfg, rng, threads);
  else if (cfg.command == "verify-freeness") result = verify_freeness(cfg, rng, threads);
  else if (cfg.command == "verify-invariance") result = verify_invariance(cfg, rng, threads);
  else if (cfg.command == "verify-cutoff") result = verify_cutoff(cfg, rng, threads);
  else if (cfg.command == "gaussian-propagation") result = gaussian_propagation(cfg, rng, threads);
  else if (cfg.command == "fim-duality") result = fim_duality(cfg, rng, threads);
  else throw ConfigError("command: unknown command '" + cfg.command + "'");

  ExperimentReport report;
  report.command = cfg.command;
  report.pass = result.pass;
  report.tables = std::move(result.tables);
  report.payload = {{"tool", "freejac"}, {"version", FREEJAC_VERSION}, {"command", cfg.command},
                    {"seed", cfg.seed}, {"config", cfg.echo()}, {"results", result.results},
                    {"pass", result.pass}};
  json tables = json::array();
  for (const auto& t : report.tables) tables.push_back(cfg.command + "_" + t.name + ".csv");
  report.payload["tables"] = tables;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Output

std::string emit_plot_script(const ExperimentReport& report) {
  if (report.tables.empty()) throw PreconditionError("emit_plot_script: report has no tables to plot");
  std::ostringstream s;
  s << "#!/usr/bin/env python3\n"
    << "# Plots for freejac command '" << report.command << "'. Run from any directory.\n"
    << "import csv\nimport os\nfrom collections import defaultdict\n\n"
    << "import matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
    << "HERE = os.path.dirname(os.path.abspath(__file__))\n\n\n"
    << "def read(name):\n"
    << "    with open(os.path.join(HERE, name), newline='') as f:\n"
    << "        return list(csv.DictReader(f))\n\n\n"
    << "def num(v):\n    return float(v) if v not in ('', None) else float('nan')\n\n\n";
  for (const Table& t : report.tables) {
    const std::string csv = report.command + "_" + t.name + ".csv";
    const std::string png = report.command + "_" + t.name + ".png";
    s << "# " << csv << "\n";
    s << "rows = read('" << csv << "')\n";
    if (t.name == "histogram") {
      s << "layers = sorted({int(r['layer']) for r in rows})\n"
        << "fig, axes = plt.subplots(len(layers), 1, figsize=(6, 2.5 * len(layers)), squeeze=False)\n"
        << "for ax, layer in zip(axes[:, 0], layers):\n"
        << "    rs = [r for r in rows if int(r['layer']) == layer]\n"
        << "    lo = [num(r['bin_lo']) for r in rs]\n"
        << "    width = [num(r['bin_hi']) - num(r['bin_lo']) for r in rs]\n"
        << "    ax.bar(lo, [int(r['count']) for r in rs], width=width, align='edge')\n"
        << "    ax.set_title(f'layer {layer}')\n"
        << "fig.tight_layout()\nfig.savefig(os.path.join(HERE, '" << png << "'))\n\n";
    } else if (std::find(t.columns.begin(), t.columns.end(), "empirical") != t.columns.end()) {
      s << "fig, ax = plt.subplots(figsize=(6, 4))\n"
        << "groups = defaultdict(list)\n"
        << "for r in rows:\n    groups[int(r['layer'])].append(r)\n"
        << "for layer, rs in sorted(groups.items()):\n"
        << "    ks = [int(r['k']) for r in rs]\n"
        << "    ax.plot(ks, [num(r['empirical']) for r in rs], 'o', label=f'empirical l={layer}')\n"
        << "    ax.plot(ks, [num(r['theory']) for r in rs], '-', label=f'theory l={layer}')\n"
        << "    for k, r in zip(ks, rs):\n"
        << "        ax.annotate(r['theory'], (k, num(r['empirical'])), fontsize=6)\n"
        << "ax.set_yscale('log')\nax.set_xlabel('k')\nax.set_ylabel('m_k')\nax.legend(fontsize=6)\n"
        << "fig.tight_layout()\nfig.savefig(os.path.join(HERE, '" << png << "'))\n\n";
    } else if (t.name == "statistics" || t.name == "ks") {
      const std::string key = t.name == "statistics" ? "word" : "layer";
      const std::string y = t.name == "statistics" ? "mean_abs_trace" : "ks_mean";
      s << "fig, ax = plt.subplots(figsize=(6, 4))\n"
        << "groups = defaultdict(list)\n"
        << "for r in rows:\n    groups[r['" << key << "']].append(r)\n"
        << "for name, rs in groups.items():\n"
        << "    ax.errorbar([int(r['width']) for r in rs], [num(r['" << y << "']) for r in rs],\n"
        << "                yerr=[num(r['standard_error']) for r in rs], marker='o', label=str(name))\n"
        << "ax.set_xscale('log')\nax.set_yscale('log')\nax.set_xlabel('N')\nax.set_ylabel('" << y << "')\n"
        << "ax.legend(fontsize=6)\nfig.tight_layout()\nfig.savefig(os.path.join(HERE, '" << png << "'))\n\n";
    } else {
      s << "print('" << csv << "')\n"
        << "for r in rows:\n    print(dict(r))\n\n";
    }
  }
  return s.str();
}

void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
    out << text;
  };
  nlohmann::json doc = report.payload;
  doc["wall_clock_seconds"] = report.wall_clock_seconds;
  write(report.command + "_report.json", doc.dump(2) + "\n");
  for (const Table& t : report.tables) write(report.command + "_" + t.name + ".csv", to_csv(t));
  if (!report.tables.empty()) write(report.command + "_plot.py", emit_plot_script(report));
}

int run(const std::filesystem::path& config_path, const RunOptions& options) {
  try {
    ExperimentConfig cfg = load_config(config_path);
    if (options.out_dir) cfg.output_dir = *options.out_dir;
    if (options.seed) cfg.seed = *options.seed;
    int threads = 1;
    if (options.threads) {
      threads = *options.threads;
    } else if (const char* env = std::getenv("FREEJAC_THREADS")) {
      int parsed = 0;
      const auto res = std::from_chars(env, env + std::char_traits<char>::length(env), parsed);
      if (res.ec != std::errc() || parsed < 1) throw ConfigError("FREEJAC_THREADS: must be a positive integer");
      threads = parsed;
    }
    if (threads < 1) throw ConfigError("threads: must be >= 1");
    const ExperimentReport report = run_experiment(cfg, threads);
    write_outputs(report, cfg.output_dir);
    std::cerr << cfg.command << ": " << (report.pass ? "PASS" : "FAIL") << " (report in "
              << cfg.output_dir.string() << ")\n";
    return report.pass ? kExitPass : kExitFail;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const PreconditionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace freejac
