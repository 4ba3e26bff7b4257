// Command-line front end: neurstrat <train|stratify|estimate|compare|sweep> --config FILE [--seed N] [--out DIR] [--threads N]

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "neurstrat/error.hpp"
#include "neurstrat/experiment.hpp"
#include "neurstrat/kernels.hpp"

namespace {

struct Common {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c, bool many_configs) {
  auto* opt = cmd->add_option("--config", c.configs, "experiment config (JSON)")->required();
  if (!many_configs) opt->expected(1);
  cmd->add_option("--seed", c.seed, "master seed, overrides the config");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker threads for repetitions");
}

neurstrat::ExperimentConfig load(const Common& c, const std::string& path) {
  auto config = neurstrat::load_config(path);
  if (c.seed) config.seed = *c.seed;
  if (c.threads) config.threads = *c.threads;
  return config;
}

void print_rows(const std::vector<neurstrat::ReportRow>& rows) {
  std::printf("%-14s %7s %4s %6s %14s %12s %12s %10s\n", "estimator", "N", "S", "R", "mean", "variance", "mse", "ratio");
  for (const auto& r : rows) {
    auto opt = [](const std::optional<double>& v) {
      char buf[32];
      if (!v) return std::string("-");
      std::snprintf(buf, sizeof buf, "%.3e", *v);
      return std::string(buf);
    };
    std::printf("%-14s %7zu %4zu %6zu %14.8f %12s %12s %10s\n", r.label.c_str(), r.N, r.S, r.repetitions, r.mean,
                opt(r.variance).c_str(), opt(r.mse).c_str(), opt(r.ratio_to_mc).c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NeurAM-based stratified Monte Carlo"};
  app.require_subcommand(1);

  Common train, stratify, estimate, compare, sweep;
  auto* train_cmd = app.add_subcommand("train", "train NeurAM models and write bundles");
  add_common(train_cmd, train, false);
  auto* stratify_cmd = app.add_subcommand("stratify", "build a stratification and write it to disk");
  add_common(stratify_cmd, stratify, false);
  auto* estimate_cmd = app.add_subcommand("estimate", "run repeated estimators and write a report");
  add_common(estimate_cmd, estimate, false);
  auto* compare_cmd = app.add_subcommand("compare", "merge several configs into one table");
  add_common(compare_cmd, compare, true);
  auto* sweep_cmd = app.add_subcommand("sweep", "vary N or S as given by the config's sweep section");
  add_common(sweep_cmd, sweep, false);

  CLI11_PARSE(app, argc, argv);

  try {
    std::fprintf(stderr, "kernels: %s\n", std::string(neurstrat::kernels::backend_name(neurstrat::kernels::active_backend())).c_str());
    if (*train_cmd) {
      neurstrat::train_command(load(train, train.configs.front()), train.out);
      std::printf("bundles written to %s\n", train.out.c_str());
    } else if (*stratify_cmd) {
      const auto strat = neurstrat::stratify_command(load(stratify, stratify.configs.front()), stratify.out);
      std::printf("%zu strata:", strat.size());
      for (double b : strat.breakpoints) std::printf(" %.6g", b);
      std::printf("\n");
    } else if (*estimate_cmd) {
      const auto out = neurstrat::run_experiment(load(estimate, estimate.configs.front()), estimate.out);
      print_rows(out.rows);
    } else if (*compare_cmd) {
      std::vector<neurstrat::ExperimentConfig> configs;
      for (const auto& path : compare.configs) configs.push_back(load(compare, path));
      print_rows(neurstrat::compare_experiments(configs, compare.out));
    } else if (*sweep_cmd) {
      print_rows(neurstrat::sweep_experiment(load(sweep, sweep.configs.front()), sweep.out));
    }
  } catch (const neurstrat::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == neurstrat::ErrorKind::Config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
