// freejac run <config.json> [--out DIR] [--seed S] [--threads T]
#include <CLI11.hpp>

#include "freejac/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Free-probability spectra of orthogonal MLP Jacobians and Fisher information"};
  app.set_version_flag("--version", FREEJAC_VERSION);
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  run->add_option("config", config, "Experiment config (JSON)")->required();
  auto* out_opt = run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  auto* seed_opt = run->add_option("--seed", seed, "Master seed (overrides seed)");
  auto* thr_opt = run->add_option("--threads", threads, "Worker threads (default FREEJAC_THREADS or 1)")
                      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? freejac::kExitPass : freejac::kExitConfig;
  }

  freejac::RunOptions options;
  if (*out_opt) options.out_dir = out_dir;
  if (*seed_opt) options.seed = seed;
  if (*thr_opt) options.threads = threads;
  return freejac::run(config, options);
}
