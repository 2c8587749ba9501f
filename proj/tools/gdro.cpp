#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdro/gdro.hpp"

namespace fs = std::filesystem;
using namespace gdro;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

ExperimentConfig load_with_overrides(const CommonOptions& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.solver.seeds = {*o.seed};
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

int cmd_run(const CommonOptions& o) {
  const ExperimentConfig cfg = load_with_overrides(o);
  const ExperimentResult res = run_experiment(cfg, fs::path(o.out));
  std::printf("%-12s %6s %14s %14s %8s\n", "algorithm", "seed", "objective", "gap", "clips");
  for (const RunRecord& r : res.runs) {
    const Checkpoint& fin = r.trajectory.final();
    std::printf("%-12s %6llu %14.8f %14.6g %8zu\n", r.algorithm.c_str(), static_cast<unsigned long long>(r.seed),
                fin.objective, res.reference ? fin.gap : NAN, r.trajectory.clip_events);
  }
  if (res.reference) std::printf("reference value %.10f (%s)\n", res.reference->value, res.reference->provenance.algorithm.c_str());
  std::printf("wrote %zu trajectories and manifest.json to %s\n", res.runs.size(), o.out.c_str());
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  const ExperimentConfig cfg = load_with_overrides(o);
  const SweepResult res = run_sweep(cfg, fs::path(o.out));
  std::printf("%zu runs\n%-12s %10s %10s %14s\n", res.runs, "algorithm", "c_theta", "c_q", "mean_objective");
  for (const auto& [name, e] : res.best)
    std::printf("%-12s %10.4g %10.4g %14.8f\n", name.c_str(), e.steps.c_theta, e.steps.c_q, e.mean_objective);
  std::printf("wrote sweep_ranking.csv and tuned_config.json to %s\n", o.out.c_str());
  return 0;
}

int cmd_gen_data(const CommonOptions& o) {
  const ExperimentConfig cfg = load_with_overrides(o);
  const LoadedDataset ds = load_dataset(cfg.dataset);
  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + o.out + "'");
  write_dataset_csv(*ds.data, out);
  std::printf("wrote %zu points in %zu groups (n = %zu, fingerprint %s) to %s\n", ds.data->total_points(),
              ds.data->num_groups(), ds.data->dim(), hex64(ds.data->fingerprint()).c_str(), o.out.c_str());
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& theta_path, std::optional<double> reference) {
  const ExperimentConfig cfg = load_with_overrides(o);
  const LoadedDataset ds = load_dataset(cfg.dataset);
  const LinearDroProblem problem = make_problem(cfg, ds.data);
  const Vector theta = read_theta_csv(theta_path);
  const Vector L = problem.group_losses(theta);
  for (std::size_t g = 0; g < ds.data->num_groups(); ++g)
    std::printf("group %-24s L = %.10f\n", ds.data->group(g).name.c_str(), L(static_cast<Eigen::Index>(g)));
  const double obj = robust_objective(L, problem.uncertainty_set());
  std::printf("robust objective %.10f\n", obj);
  if (reference) std::printf("gap %.6g\n", obj - *reference);
  return 0;
}

int cmd_lb_demo(const LbDemoOptions& opt, const std::string& out) {
  const LbDemoReport r = lb_demo(opt);
  std::printf("delta %.6g  m %zu  T %llu  algorithm %s  separation delta/4 = %.6g\n", r.options.delta, r.options.m,
              static_cast<unsigned long long>(r.options.iterations), r.options.algorithm.c_str(), r.separation);
  for (const LbInstanceReport* inst : {&r.p0, &r.p1}) {
    std::printf("%s: minimax %.6f at theta %.4f, mean gap %.6g, max gap %.6g\n", inst->name.c_str(),
                inst->minimax_value, inst->minimax_theta, inst->mean_gap,
                *std::max_element(inst->gaps.begin(), inst->gaps.end()));
    std::printf("  mean queries per group:");
    for (double q : inst->mean_queries) std::printf(" %.1f", q);
    std::printf("\n");
  }
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    f << to_json(r).dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write '" + out + "'");
  }
  return 0;
}

void add_common(CLI::App* app, CommonOptions& o, const char* out_help) {
  app->add_option("-c,--config", o.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
  app->add_option("-o,--out", o.out, out_help)->required();
  app->add_option("--seed", o.seed, "Run a single solver seed instead of solver.seeds");
  app->add_option("-j,--threads", o.threads, "Worker threads for independent runs")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic solvers for generalized group distributionally robust optimization"};
  app.set_version_flag("--version", std::string(kLibraryVersion));
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, gen_opts, eval_opts;
  auto* run = app.add_subcommand("run", "Run the configured solvers and write trajectories");
  add_common(run, run_opts, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Grid search over the step-size constants");
  add_common(sweep, sweep_opts, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Write the configured dataset as CSV");
  add_common(gen, gen_opts, "Output CSV file");

  std::string theta_path;
  std::optional<double> reference;
  auto* eval = app.add_subcommand("eval", "Evaluate group losses and the robust objective of a saved theta");
  eval->add_option("-c,--config", eval_opts.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
  eval->add_option("--theta", theta_path, "Theta file written by run")->required()->check(CLI::ExistingFile);
  eval->add_option("--reference", reference, "Reference value for the gap");

  LbDemoOptions lb;
  std::size_t lb_seed_count = 5;
  std::string lb_out;
  std::optional<double> lb_delta;
  auto* lbd = app.add_subcommand("lb-demo", "Run a solver on the two-point lower-bound instances");
  lbd->add_option("--delta", lb_delta, "Accuracy parameter in [0, 1/4); default sqrt(m/T) capped at 0.24");
  lbd->add_option("-m,--groups", lb.m, "Number of groups")->check(CLI::Range(2, 1 << 20));
  lbd->add_option("-T,--iterations", lb.iterations, "Oracle budget")->check(CLI::PositiveNumber);
  lbd->add_option("-a,--algorithm", lb.algorithm, "gdro-exp3, gdro-tinf, sagawa, gdro-exp3p or omd");
  lbd->add_option("--seeds", lb_seed_count, "Number of seeds (1..n)")->check(CLI::PositiveNumber);
  lbd->add_option("--c-theta", lb.steps.c_theta, "Theta step constant")->check(CLI::PositiveNumber);
  lbd->add_option("--c-q", lb.steps.c_q, "q step constant")->check(CLI::PositiveNumber);
  lbd->add_option("--star", lb.star_index, "Perturbed group of P1 (0-based, below m - 1)");
  lbd->add_option("-j,--threads", lb.threads, "Worker threads")->check(CLI::PositiveNumber);
  lbd->add_option("-o,--out", lb_out, "Optional JSON report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts);
    if (*sweep) return cmd_sweep(sweep_opts);
    if (*gen) return cmd_gen_data(gen_opts);
    if (*eval) return cmd_eval(eval_opts, theta_path, reference);
    if (*lbd) {
      lb.delta = lb_delta.value_or(
          std::min(0.24, std::sqrt(static_cast<double>(lb.m) / static_cast<double>(lb.iterations))));
      lb.seeds.clear();
      for (std::size_t s = 1; s <= lb_seed_count; ++s) lb.seeds.push_back(s);
      return cmd_lb_demo(lb, lb_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
