// Command-line front end: one subcommand per experiment mode.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "tdbsde/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Delayed BSDE solver and stability laboratory"};
  app.require_subcommand(1, 1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t paths = 0, steps = 0, max_iter = 0;
  unsigned threads = 0;
  double tol = 0.0;

  auto add_global = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--paths", paths, "Number of Monte Carlo paths")->check(CLI::PositiveNumber);
    sub->add_option("--steps", steps, "Number of time steps")->check(CLI::PositiveNumber);
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto* check = app.add_subcommand("check-assumptions", "Evaluate the standing assumptions and (H1)/(H2)");
  auto* solve = app.add_subcommand("solve", "Solve one problem by Picard iteration");
  auto* stability = app.add_subcommand("stability", "Solve a perturbation family and measure solution distances");
  auto* hb = app.add_subcommand("helly-bray", "Run the stochastic Helly-Bray proxy checks");
  for (auto* sub : {check, solve, stability, hb}) add_global(sub);
  for (auto* sub : {solve, stability}) {
    sub->add_option("--tol", tol, "Stop when the squared Picard increment drops below this")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", max_iter, "Picard iteration budget")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  tdbsde::RunOverrides ov;
  CLI::App* sub = app.get_subcommands().front();
  ov.mode = sub->get_name();
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--paths")) ov.paths = paths;
  if (sub->count("--steps")) ov.steps = steps;
  if (sub->count("--threads")) ov.threads = threads;
  if (sub->count("--out")) ov.out = out;
  if (sub->get_option_no_throw("--tol") && sub->count("--tol")) ov.tol = tol;
  if (sub->get_option_no_throw("--max-iter") && sub->count("--max-iter")) ov.max_iter = max_iter;

  try {
    tdbsde::apply_environment(ov);
    const std::filesystem::path cfg_path(config);
    return tdbsde::run(tdbsde::load_json(cfg_path), ov, std::cout, cfg_path.parent_path());
  } catch (const tdbsde::ConfigError& e) {
    std::cerr << "config error at " << e.path() << ": " << e.message() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
