#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "freejac/errors.hpp"
#include "freejac/mlp.hpp"

namespace freejac {

/// Invalid or missing configuration field. The message names the field.
class ConfigError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitConfig = 2, kExitNumerical = 3 };

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> commands{
      "simulate-spectrum", "theory-profile",  "predict-vs-empirical", "verify-freeness",
      "verify-invariance", "verify-cutoff",   "gaussian-propagation", "fim-duality"};
  return commands;
}

struct ExperimentConfig {
  std::string command;
  MlpConfig network;
  std::vector<int> sweep;  // defaults to {network.width}
  int trials = 10;
  std::uint64_t seed = 0;
  int moment_order = 4;
  std::filesystem::path output_dir = "freejac_out";
  std::map<std::string, double> tolerances;
  nlohmann::json params;  // command-specific keys (layer, matrix, bins, words, ...)

  double tolerance(const std::string& key, double fallback) const;
  /// Normalized echo written into every report.
  nlohmann::json echo() const;
};

/// Validates and fills defaults; throws ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

using Cell = std::variant<long long, double, std::string>;

/// One CSV table, written to <command>_<name>.csv.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

struct ExperimentReport {
  std::string command;
  nlohmann::json payload;  // config echo, results, pass flag; reproducible byte for byte
  std::vector<Table> tables;
  bool pass = false;
  double wall_clock_seconds = 0.0;  // not part of the payload
};

/// Executes the configured command in memory. Throws ConfigError,
/// PreconditionError or NumericalError.
ExperimentReport run_experiment(const ExperimentConfig& cfg, int threads = 1);

/// CSV text with a header row, ',' separators and shortest round-trip
/// numbers independent of the locale.
std::string to_csv(const Table& table);

/// Writes <command>_report.json, one CSV per table and <command>_plot.py.
void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir);

/// matplotlib script that reads the CSVs by relative path. Throws
/// PreconditionError when the report has no tables.
std::string emit_plot_script(const ExperimentReport& report);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;  // falls back to FREEJAC_THREADS, then 1
};

/// Full CLI pipeline; returns an ExitCode and prints diagnostics to stderr.
int run(const std::filesystem::path& config_path, const RunOptions& options = {});

}  // namespace freejac
