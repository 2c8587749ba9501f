#ifndef GDRO_EXPERIMENT_HPP
#define GDRO_EXPERIMENT_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gdro/data.hpp"
#include "gdro/evaluation.hpp"
#include "gdro/linear_problem.hpp"
#include "gdro/lower_bound.hpp"
#include "gdro/parallel.hpp"
#include "gdro/reference.hpp"
#include "gdro/solvers.hpp"

#ifndef GDRO_VERSION
#define GDRO_VERSION "0.1.0"
#endif

namespace gdro {

inline constexpr std::string_view kLibraryVersion = GDRO_VERSION;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration

struct SyntheticDatasetConfig {
  std::size_t groups = 10;
  std::size_t dim = 50;
  std::size_t points_per_group = 1000;
  double flip_prob = 0.1;
  std::uint64_t seed = 1;
  friend bool operator==(const SyntheticDatasetConfig&, const SyntheticDatasetConfig&) = default;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | csv
  SyntheticDatasetConfig synthetic;
  std::string csv_path;
  CsvSchema csv_schema;
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct UncertaintyConfig {
  std::string kind = "simplex";  // simplex | k_set | permutahedron
  double p = 1.0;
  std::vector<double> alpha;
  friend bool operator==(const UncertaintyConfig&, const UncertaintyConfig&) = default;

  [[nodiscard]] UncertaintySetSpec to_spec() const {
    if (kind == "simplex") return UncertaintySetSpec::simplex();
    if (kind == "k_set") return UncertaintySetSpec::k_set(p);
    if (kind == "permutahedron") return UncertaintySetSpec::permutahedron(Eigen::Map<const Vector>(alpha.data(), static_cast<Eigen::Index>(alpha.size())));
    throw ConfigError("problem.uncertainty_set.kind: unknown kind '" + kind + "'");
  }
};

struct ProblemConfig {
  std::string loss = "hinge";
  double radius = 10.0;
  UncertaintyConfig uncertainty_set;
  friend bool operator==(const ProblemConfig&, const ProblemConfig&) = default;
};

/// Step-size multipliers: eta_theta,t = c_theta * radius / sqrt(t) and
/// eta_q = c_q * sqrt(log m / (m T)).
struct StepConstants {
  double c_theta = 1.0;
  double c_q = 1.0;
  friend bool operator==(const StepConstants&, const StepConstants&) = default;
};

struct SolverSection {
  std::uint64_t iterations = 200000;
  std::size_t minibatch = 10;
  double checkpoint_ratio = 1.2;
  std::uint64_t checkpoint_every = 0;
  std::vector<std::string> algorithms{"gdro-exp3", "gdro-tinf", "sagawa"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  StepConstants steps;
  std::string omd_regularizer = "tsallis";
  std::map<std::string, StepConstants> per_algorithm;
  std::optional<Exp3pParams> exp3p;
  friend bool operator==(const SolverSection&, const SolverSection&) = default;
};

struct EvaluationSection {
  std::string reference = "auto";  // auto | none | value
  double reference_value = 0.0;
  std::uint64_t reference_multiplier = 10;
  std::vector<std::uint64_t> reference_seeds{1001, 1002, 1003, 1004, 1005};
  std::uint64_t subgradient_iterations = 10000;
  double subgradient_step_fraction = 0.003;
  friend bool operator==(const EvaluationSection&, const EvaluationSection&) = default;
};

struct GridAxis {
  double min = 0.1;
  double max = 1.0;
  std::size_t points = 4;
  friend bool operator==(const GridAxis&, const GridAxis&) = default;
};

struct SweepSection {
  GridAxis c_theta{0.1, 5.0, 4};
  GridAxis c_q{0.1, 3.0, 4};
  std::uint64_t iterations = 20000;
  std::vector<std::uint64_t> seeds{1, 2};
  friend bool operator==(const SweepSection&, const SweepSection&) = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ProblemConfig problem;
  SolverSection solver;
  EvaluationSection evaluation;
  SweepSection sweep;
  std::size_t threads = 1;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  void validate() const;
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& j, const std::string& section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  std::string unknown;
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      unknown += (unknown.empty() ? "" : ", ") + item.key();
  }
  if (!unknown.empty()) throw ConfigError(section + ": unknown key(s): " + unknown);
}

template <class T>
void read(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string where = section + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(where + ": expected a nonnegative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
    for (const auto& e : v)
      if (!e.is_number_integer() || (!e.is_number_unsigned() && e.get<std::int64_t>() < 0))
        throw ConfigError(where + ": expected nonnegative integers");
  } else {
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
  }
  try {
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline GridAxis parse_axis(const json& j, const std::string& section, GridAxis axis) {
  check_keys(j, section, {"min", "max", "points"});
  read(j, section, "min", axis.min);
  read(j, section, "max", axis.max);
  read(j, section, "points", axis.points);
  return axis;
}

inline StepConstants parse_steps(const json& j, const std::string& section, StepConstants s) {
  check_keys(j, section, {"c_theta", "c_q"});
  read(j, section, "c_theta", s.c_theta);
  read(j, section, "c_q", s.c_q);
  return s;
}

}  // namespace detail

/// Parses a JSON configuration; every key is optional and defaults to the
/// desk-scale synthetic experiment, but unknown keys are errors.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  ExperimentConfig cfg;
  check_keys(j, "config", {"dataset", "problem", "solver", "evaluation", "sweep", "threads"});
  read(j, "config", "threads", cfg.threads);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, "dataset",
               {"kind", "groups", "dim", "points_per_group", "flip_prob", "seed", "path", "label_column",
                "positive_label", "group_columns", "numeric_columns", "categorical_columns", "standardize",
                "add_intercept"});
    read(d, "dataset", "kind", cfg.dataset.kind);
    auto& s = cfg.dataset.synthetic;
    read(d, "dataset", "groups", s.groups);
    read(d, "dataset", "dim", s.dim);
    read(d, "dataset", "points_per_group", s.points_per_group);
    read(d, "dataset", "flip_prob", s.flip_prob);
    read(d, "dataset", "seed", s.seed);
    auto& c = cfg.dataset.csv_schema;
    read(d, "dataset", "path", cfg.dataset.csv_path);
    read(d, "dataset", "label_column", c.label_column);
    read(d, "dataset", "positive_label", c.positive_label);
    read(d, "dataset", "group_columns", c.group_columns);
    read(d, "dataset", "numeric_columns", c.numeric_columns);
    read(d, "dataset", "categorical_columns", c.categorical_columns);
    read(d, "dataset", "standardize", c.standardize);
    read(d, "dataset", "add_intercept", c.add_intercept);
  }

  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    check_keys(p, "problem", {"loss", "radius", "uncertainty_set"});
    read(p, "problem", "loss", cfg.problem.loss);
    read(p, "problem", "radius", cfg.problem.radius);
    if (p.contains("uncertainty_set")) {
      const auto& u = p.at("uncertainty_set");
      check_keys(u, "problem.uncertainty_set", {"kind", "p", "alpha"});
      read(u, "problem.uncertainty_set", "kind", cfg.problem.uncertainty_set.kind);
      read(u, "problem.uncertainty_set", "p", cfg.problem.uncertainty_set.p);
      read(u, "problem.uncertainty_set", "alpha", cfg.problem.uncertainty_set.alpha);
    }
  }

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s, "solver",
               {"iterations", "minibatch", "checkpoint_ratio", "checkpoint_every", "algorithms", "seeds", "c_theta",
                "c_q", "omd_regularizer", "per_algorithm", "exp3p"});
    auto& out = cfg.solver;
    read(s, "solver", "iterations", out.iterations);
    read(s, "solver", "minibatch", out.minibatch);
    read(s, "solver", "checkpoint_ratio", out.checkpoint_ratio);
    read(s, "solver", "checkpoint_every", out.checkpoint_every);
    read(s, "solver", "algorithms", out.algorithms);
    read(s, "solver", "seeds", out.seeds);
    read(s, "solver", "c_theta", out.steps.c_theta);
    read(s, "solver", "c_q", out.steps.c_q);
    read(s, "solver", "omd_regularizer", out.omd_regularizer);
    if (s.contains("per_algorithm")) {
      const auto& pa = s.at("per_algorithm");
      if (!pa.is_object()) throw ConfigError("solver.per_algorithm: expected an object");
      for (const auto& item : pa.items())
        out.per_algorithm[item.key()] =
            detail::parse_steps(item.value(), "solver.per_algorithm." + item.key(), out.steps);
    }
    if (s.contains("exp3p")) {
      const auto& e = s.at("exp3p");
      check_keys(e, "solver.exp3p", {"mix_gamma", "bias_beta"});
      if (!e.contains("mix_gamma") || !e.contains("bias_beta"))
        throw ConfigError("solver.exp3p: both mix_gamma and bias_beta are required");
      Exp3pParams params;
      read(e, "solver.exp3p", "mix_gamma", params.mix_gamma);
      read(e, "solver.exp3p", "bias_beta", params.bias_beta);
      out.exp3p = params;
    }
  }

  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, "evaluation",
               {"reference", "reference_multiplier", "reference_seeds", "subgradient_iterations",
                "subgradient_step_fraction"});
    auto& out = cfg.evaluation;
    if (e.contains("reference")) {
      const auto& r = e.at("reference");
      if (r.is_number()) {
        out.reference = "value";
        out.reference_value = r.get<double>();
      } else if (r.is_string()) {
        out.reference = r.get<std::string>();
      } else {
        throw ConfigError("evaluation.reference: expected \"auto\", \"none\" or a number");
      }
    }
    read(e, "evaluation", "reference_multiplier", out.reference_multiplier);
    read(e, "evaluation", "reference_seeds", out.reference_seeds);
    read(e, "evaluation", "subgradient_iterations", out.subgradient_iterations);
    read(e, "evaluation", "subgradient_step_fraction", out.subgradient_step_fraction);
  }

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"c_theta", "c_q", "iterations", "seeds"});
    if (s.contains("c_theta")) cfg.sweep.c_theta = detail::parse_axis(s.at("c_theta"), "sweep.c_theta", cfg.sweep.c_theta);
    if (s.contains("c_q")) cfg.sweep.c_q = detail::parse_axis(s.at("c_q"), "sweep.c_q", cfg.sweep.c_q);
    read(s, "sweep", "iterations", cfg.sweep.iterations);
    read(s, "sweep", "seeds", cfg.sweep.seeds);
  }

  cfg.validate();
  return cfg;
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  auto& d = j["dataset"];
  d["kind"] = cfg.dataset.kind;
  if (cfg.dataset.kind == "synthetic") {
    d["groups"] = cfg.dataset.synthetic.groups;
    d["dim"] = cfg.dataset.synthetic.dim;
    d["points_per_group"] = cfg.dataset.synthetic.points_per_group;
    d["flip_prob"] = cfg.dataset.synthetic.flip_prob;
    d["seed"] = cfg.dataset.synthetic.seed;
  } else {
    const auto& c = cfg.dataset.csv_schema;
    d["path"] = cfg.dataset.csv_path;
    d["label_column"] = c.label_column;
    d["positive_label"] = c.positive_label;
    d["group_columns"] = c.group_columns;
    d["numeric_columns"] = c.numeric_columns;
    d["categorical_columns"] = c.categorical_columns;
    d["standardize"] = c.standardize;
    d["add_intercept"] = c.add_intercept;
  }

  auto& p = j["problem"];
  p["loss"] = cfg.problem.loss;
  p["radius"] = cfg.problem.radius;
  p["uncertainty_set"]["kind"] = cfg.problem.uncertainty_set.kind;
  if (cfg.problem.uncertainty_set.kind == "k_set") p["uncertainty_set"]["p"] = cfg.problem.uncertainty_set.p;
  if (cfg.problem.uncertainty_set.kind == "permutahedron")
    p["uncertainty_set"]["alpha"] = cfg.problem.uncertainty_set.alpha;

  auto& s = j["solver"];
  s["iterations"] = cfg.solver.iterations;
  s["minibatch"] = cfg.solver.minibatch;
  s["checkpoint_ratio"] = cfg.solver.checkpoint_ratio;
  s["checkpoint_every"] = cfg.solver.checkpoint_every;
  s["algorithms"] = cfg.solver.algorithms;
  s["seeds"] = cfg.solver.seeds;
  s["c_theta"] = cfg.solver.steps.c_theta;
  s["c_q"] = cfg.solver.steps.c_q;
  s["omd_regularizer"] = cfg.solver.omd_regularizer;
  s["per_algorithm"] = nlohmann::json::object();
  for (const auto& [name, st] : cfg.solver.per_algorithm)
    s["per_algorithm"][name] = {{"c_theta", st.c_theta}, {"c_q", st.c_q}};
  if (cfg.solver.exp3p)
    s["exp3p"] = {{"mix_gamma", cfg.solver.exp3p->mix_gamma}, {"bias_beta", cfg.solver.exp3p->bias_beta}};

  auto& e = j["evaluation"];
  if (cfg.evaluation.reference == "value")
    e["reference"] = cfg.evaluation.reference_value;
  else
    e["reference"] = cfg.evaluation.reference;
  e["reference_multiplier"] = cfg.evaluation.reference_multiplier;
  e["reference_seeds"] = cfg.evaluation.reference_seeds;
  e["subgradient_iterations"] = cfg.evaluation.subgradient_iterations;
  e["subgradient_step_fraction"] = cfg.evaluation.subgradient_step_fraction;

  auto axis = [](const GridAxis& a) { return nlohmann::json{{"min", a.min}, {"max", a.max}, {"points", a.points}}; };
  j["sweep"] = {{"c_theta", axis(cfg.sweep.c_theta)},
                {"c_q", axis(cfg.sweep.c_q)},
                {"iterations", cfg.sweep.iterations},
                {"seeds", cfg.sweep.seeds}};
  j["threads"] = cfg.threads;
  return j;
}

inline void ExperimentConfig::validate() const {
  if (dataset.kind == "synthetic") {
    const auto& s = dataset.synthetic;
    if (s.groups == 0 || s.dim == 0 || s.points_per_group == 0)
      throw ConfigError("dataset: groups, dim and points_per_group must be positive");
    if (!(s.flip_prob >= 0.0 && s.flip_prob < 0.5)) throw ConfigError("dataset.flip_prob must lie in [0, 0.5)");
  } else if (dataset.kind == "csv") {
    if (dataset.csv_path.empty()) throw ConfigError("dataset.path is required for csv datasets");
    if (dataset.csv_schema.label_column.empty()) throw ConfigError("dataset.label_column is required");
    if (dataset.csv_schema.group_columns.empty()) throw ConfigError("dataset.group_columns must not be empty");
  } else {
    throw ConfigError("dataset.kind: expected \"synthetic\" or \"csv\", got '" + dataset.kind + "'");
  }

  try {
    (void)loss_kind_from_string(problem.loss);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("problem.loss: ") + e.what());
  }
  if (!(problem.radius > 0.0) || !std::isfinite(problem.radius)) throw ConfigError("problem.radius must be positive");
  try {
    (void)problem.uncertainty_set.to_spec();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("problem.uncertainty_set: ") + e.what());
  }

  if (solver.iterations == 0) throw ConfigError("solver.iterations must be at least 1");
  if (solver.minibatch == 0) throw ConfigError("solver.minibatch must be at least 1");
  if (solver.checkpoint_every == 0 && !(solver.checkpoint_ratio > 1.0))
    throw ConfigError("solver.checkpoint_ratio must exceed 1");
  if (solver.algorithms.empty()) throw ConfigError("solver.algorithms must not be empty");
  if (solver.seeds.empty()) throw ConfigError("solver.seeds must not be empty");
  for (const auto& name : solver.algorithms) {
    Algorithm a{};
    try {
      a = algorithm_from_string(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("solver.algorithms: ") + e.what());
    }
    if (a != Algorithm::generic_omd && problem.uncertainty_set.kind != "simplex")
      throw ConfigError("solver.algorithms: '" + name + "' needs the simplex; use \"omd\" for other sets");
  }
  auto check_steps = [](const StepConstants& s, const std::string& where) {
    if (!(s.c_theta > 0.0) || !(s.c_q > 0.0)) throw ConfigError(where + ": c_theta and c_q must be positive");
  };
  check_steps(solver.steps, "solver");
  for (const auto& [name, st] : solver.per_algorithm) {
    if (std::find(solver.algorithms.begin(), solver.algorithms.end(), name) == solver.algorithms.end())
      throw ConfigError("solver.per_algorithm: '" + name + "' is not in solver.algorithms");
    check_steps(st, "solver.per_algorithm." + name);
  }
  try {
    const Regularizer r = regularizer_from_string(solver.omd_regularizer);
    if (r == Regularizer::euclidean) throw ConfigError("solver.omd_regularizer: expected entropy or tsallis");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("solver.omd_regularizer: ") + e.what());
  }
  if (solver.exp3p) {
    try {
      solver.exp3p->validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("solver.exp3p: ") + e.what());
    }
  }

  if (evaluation.reference != "auto" && evaluation.reference != "none" && evaluation.reference != "value")
    throw ConfigError("evaluation.reference: expected \"auto\", \"none\" or a number");
  if (evaluation.reference == "value" && !std::isfinite(evaluation.reference_value))
    throw ConfigError("evaluation.reference must be finite");
  if (evaluation.reference_multiplier == 0) throw ConfigError("evaluation.reference_multiplier must be positive");
  if (evaluation.reference_seeds.empty()) throw ConfigError("evaluation.reference_seeds must not be empty");
  if (!(evaluation.subgradient_step_fraction > 0.0))
    throw ConfigError("evaluation.subgradient_step_fraction must be positive");

  for (const auto* axis : {&sweep.c_theta, &sweep.c_q}) {
    if (!(axis->min > 0.0) || !(axis->max >= axis->min) || axis->points == 0)
      throw ConfigError("sweep: each axis needs 0 < min <= max and points >= 1");
  }
  if (sweep.iterations == 0) throw ConfigError("sweep.iterations must be at least 1");
  if (sweep.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Runs

struct LoadedDataset {
  std::shared_ptr<const GroupedDataset> data;
  std::vector<ColumnScaling> scaling;
};

inline LoadedDataset load_dataset(const DatasetConfig& d) {
  if (d.kind == "synthetic") {
    const auto& s = d.synthetic;
    return {std::make_shared<const GroupedDataset>(gen_synthetic(s.groups, s.dim, s.points_per_group, s.flip_prob, s.seed)),
            {}};
  }
  CsvIngestResult r = load_csv_dataset(d.csv_path, d.csv_schema);
  return {std::make_shared<const GroupedDataset>(std::move(r.dataset)), std::move(r.scaling)};
}

inline LinearDroProblem make_problem(const ExperimentConfig& cfg, std::shared_ptr<const GroupedDataset> data) {
  return LinearDroProblem(std::move(data), loss_kind_from_string(cfg.problem.loss), cfg.problem.radius,
                          cfg.problem.uncertainty_set.to_spec());
}

/// c_q sqrt(log m / (m T)), or c_q / sqrt(T) when m = 1.
inline double q_step_size(double c_q, std::size_t m, std::uint64_t T) {
  const double td = static_cast<double>(T);
  if (m <= 1) return c_q / std::sqrt(td);
  const double md = static_cast<double>(m);
  return c_q * std::sqrt(std::log(md) / (md * td));
}

inline StepConstants steps_for(const SolverSection& s, const std::string& algorithm) {
  const auto it = s.per_algorithm.find(algorithm);
  return it == s.per_algorithm.end() ? s.steps : it->second;
}

inline SolverConfig make_solver_config(const ExperimentConfig& cfg, const std::string& algorithm, std::uint64_t seed,
                                       std::size_t m, std::optional<StepConstants> steps = std::nullopt,
                                       std::optional<std::uint64_t> iterations = std::nullopt) {
  const StepConstants st = steps.value_or(steps_for(cfg.solver, algorithm));
  SolverConfig sc;
  sc.algorithm = algorithm_from_string(algorithm);
  sc.omd_regularizer = regularizer_from_string(cfg.solver.omd_regularizer);
  sc.iterations = iterations.value_or(cfg.solver.iterations);
  sc.theta_schedule = StepSchedule::inverse_sqrt(st.c_theta * cfg.problem.radius);
  sc.q_step = q_step_size(st.c_q, m, sc.iterations);
  sc.minibatch = cfg.solver.minibatch;
  sc.seed = seed;
  sc.checkpoint_every = cfg.solver.checkpoint_every;
  sc.checkpoint_ratio = cfg.solver.checkpoint_ratio;
  sc.exp3p = cfg.solver.exp3p;
  return sc;
}

/// `iteration,objective[,gap]` rows at %.12g.
inline void write_trajectory_csv(const Trajectory& traj, bool with_gap, std::ostream& out) {
  out << (with_gap ? "iteration,objective,gap\n" : "iteration,objective\n");
  char buf[128];
  for (const Checkpoint& c : traj.checkpoints) {
    if (with_gap)
      std::snprintf(buf, sizeof buf, "%llu,%.12g,%.12g\n", static_cast<unsigned long long>(c.t), c.objective, c.gap);
    else
      std::snprintf(buf, sizeof buf, "%llu,%.12g\n", static_cast<unsigned long long>(c.t), c.objective);
    out << buf;
  }
}

inline void write_theta_csv(const Vector& theta, std::ostream& out) {
  out << "theta\n";
  char buf[64];
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g\n", theta(j));
    out << buf;
  }
}

inline Vector read_theta_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open theta file '" + path.string() + "'");
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || (line_no == 1 && t == "theta")) continue;
    const auto v = detail::parse_number(t);
    if (!v) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": not a number");
    values.push_back(*v);
  }
  if (values.empty()) throw std::runtime_error("theta file '" + path.string() + "' is empty");
  return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string run_file_stem(const std::string& algorithm, std::uint64_t seed) {
  return algorithm + "_seed" + std::to_string(seed);
}

struct RunRecord {
  std::string algorithm;
  std::uint64_t seed = 0;
  StepConstants steps;
  SolverConfig solver;
  Trajectory trajectory;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::optional<ReferenceSolution> reference;
  ProblemConstants constants;
  nlohmann::json manifest;
};

inline ReferenceProtocol reference_protocol(const EvaluationSection& e) {
  ReferenceProtocol p;
  p.multiplier = e.reference_multiplier;
  p.seeds = e.reference_seeds;
  p.subgradient.iterations = e.subgradient_iterations;
  p.subgradient_step_fraction = e.subgradient_step_fraction;
  return p;
}

/// Runs every (algorithm, seed) pair of the config. With an output directory,
/// writes <algorithm>_seed<k>.csv, <algorithm>_seed<k>_theta.csv and manifest.json.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const LoadedDataset loaded = load_dataset(cfg.dataset);
  const LinearDroProblem problem = make_problem(cfg, loaded.data);
  const std::size_t m = problem.num_groups();

  ExperimentResult result;
  result.constants = problem.constants();
  for (const auto& algorithm : cfg.solver.algorithms) {
    for (std::uint64_t seed : cfg.solver.seeds) {
      RunRecord r;
      r.algorithm = algorithm;
      r.seed = seed;
      r.steps = steps_for(cfg.solver, algorithm);
      r.solver = make_solver_config(cfg, algorithm, seed, m);
      result.runs.push_back(std::move(r));
    }
  }
  parallel_for(result.runs.size(), cfg.threads,
               [&](std::size_t k) { result.runs[k].trajectory = run_solver(problem, result.runs[k].solver); });

  if (cfg.evaluation.reference == "auto") {
    std::vector<SolverConfig> bases;
    for (const auto& algorithm : cfg.solver.algorithms) bases.push_back(make_solver_config(cfg, algorithm, 0, m));
    ReferenceSolution ref = compute_reference(problem, bases, reference_protocol(cfg.evaluation), cfg.threads);
    for (const RunRecord& r : result.runs) {
      if (r.trajectory.final().objective < ref.value) {
        ref.value = r.trajectory.final().objective;
        ref.theta = r.trajectory.final().theta_avg;
        ref.provenance.algorithm = r.algorithm + "@seed" + std::to_string(r.seed);
        ref.provenance.iterations = r.solver.iterations;
      }
    }
    result.reference = std::move(ref);
  } else if (cfg.evaluation.reference == "value") {
    ReferenceSolution ref;
    ref.value = cfg.evaluation.reference_value;
    ref.provenance.algorithm = "user";
    ref.provenance.dataset_fingerprint = loaded.data->fingerprint();
    ref.provenance.uncertainty_set = problem.uncertainty_set().describe();
    ref.provenance.loss = cfg.problem.loss;
    result.reference = std::move(ref);
  }
  if (result.reference)
    for (RunRecord& r : result.runs) r.trajectory.apply_reference(result.reference->value);

  nlohmann::json& man = result.manifest;
  man["library_version"] = std::string(kLibraryVersion);
  man["config"] = to_json(cfg);
  auto& ds = man["dataset"];
  ds["fingerprint"] = hex64(loaded.data->fingerprint());
  ds["groups"] = loaded.data->num_groups();
  ds["dim"] = loaded.data->dim();
  ds["total_points"] = loaded.data->total_points();
  ds["group_sizes"] = nlohmann::json::array();
  ds["group_names"] = nlohmann::json::array();
  for (std::size_t g = 0; g < loaded.data->num_groups(); ++g) {
    ds["group_sizes"].push_back(loaded.data->group_size(g));
    ds["group_names"].push_back(loaded.data->group(g).name);
  }
  ds["scaling"] = nlohmann::json::array();
  for (const auto& s : loaded.scaling)
    ds["scaling"].push_back({{"column", s.column}, {"mean", s.mean}, {"stddev", s.stddev}});
  const auto& c = result.constants;
  man["constants"] = {{"G", c.lipschitz_G}, {"D", c.diameter_D}, {"M", c.range_M}, {"m", c.num_groups_m}, {"n", c.dim_n}};
  man["seeds"] = cfg.solver.seeds;
  man["solver_stream"] = streams::kSolver;
  if (result.reference) {
    const auto& ref = *result.reference;
    man["reference"] = {{"value", ref.value},
                        {"source", ref.provenance.algorithm},
                        {"iterations", ref.provenance.iterations},
                        {"seeds", ref.provenance.seeds}};
  } else {
    man["reference"] = nullptr;
  }
  man["runs"] = nlohmann::json::array();
  for (const RunRecord& r : result.runs) {
    const auto stem = run_file_stem(r.algorithm, r.seed);
    nlohmann::json run = {{"algorithm", r.algorithm},
                          {"seed", r.seed},
                          {"file", stem + ".csv"},
                          {"theta_file", stem + "_theta.csv"},
                          {"c_theta", r.steps.c_theta},
                          {"c_q", r.steps.c_q},
                          {"eta_q", r.solver.q_step},
                          {"final_objective", r.trajectory.final().objective},
                          {"clip_events", r.trajectory.clip_events},
                          {"group_queries", r.trajectory.group_queries}};
    if (result.reference) run["final_gap"] = r.trajectory.final().gap;
    man["runs"].push_back(std::move(run));
  }
  man["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    for (const RunRecord& r : result.runs) {
      const auto stem = run_file_stem(r.algorithm, r.seed);
      std::ofstream csv(*out_dir / (stem + ".csv"), std::ios::binary);
      write_trajectory_csv(r.trajectory, result.reference.has_value(), csv);
      std::ofstream th(*out_dir / (stem + "_theta.csv"), std::ios::binary);
      write_theta_csv(r.trajectory.final().theta_avg, th);
      if (!csv || !th) throw std::runtime_error("failed to write run files under '" + out_dir->string() + "'");
    }
    std::ofstream mf(*out_dir / "manifest.json", std::ios::binary);
    mf << man.dump(2) << '\n';
    if (!mf) throw std::runtime_error("failed to write manifest under '" + out_dir->string() + "'");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sweep

/// `points` log-spaced values from min to max; a single point yields min.
inline std::vector<double> log_grid(const GridAxis& a) {
  if (a.points == 1) return {a.min};
  std::vector<double> out(a.points);
  const double lo = std::log(a.min), hi = std::log(a.max);
  for (std::size_t k = 0; k < a.points; ++k)
    out[k] = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(a.points - 1));
  out.front() = a.min;
  out.back() = a.max;
  return out;
}

struct SweepEntry {
  std::string algorithm;
  StepConstants steps;
  std::vector<double> objectives;  // one per sweep seed
  double mean_objective = 0.0;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  std::map<std::string, SweepEntry> best;
  std::size_t runs = 0;
};

/// Grid search over (c_theta, c_q) at the sweep horizon; the winner per
/// algorithm minimizes the final objective averaged over the sweep seeds,
/// ties going to the earlier grid point.
inline SweepResult run_sweep(const ExperimentConfig& cfg,
                             const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  cfg.validate();
  const LoadedDataset loaded = load_dataset(cfg.dataset);
  const LinearDroProblem problem = make_problem(cfg, loaded.data);
  const std::size_t m = problem.num_groups();
  const auto thetas = log_grid(cfg.sweep.c_theta);
  const auto qs = log_grid(cfg.sweep.c_q);

  SweepResult result;
  for (const auto& algorithm : cfg.solver.algorithms)
    for (double ct : thetas)
      for (double cq : qs) result.entries.push_back({algorithm, {ct, cq}, std::vector<double>(cfg.sweep.seeds.size()), 0.0});

  const std::size_t per_entry = cfg.sweep.seeds.size();
  result.runs = result.entries.size() * per_entry;
  parallel_for(result.runs, cfg.threads, [&](std::size_t k) {
    SweepEntry& e = result.entries[k / per_entry];
    SolverConfig sc = make_solver_config(cfg, e.algorithm, cfg.sweep.seeds[k % per_entry], m, e.steps,
                                         cfg.sweep.iterations);
    sc.checkpoint_every = sc.iterations;
    e.objectives[k % per_entry] = run_solver(problem, sc).final().objective;
  });
  for (SweepEntry& e : result.entries) {
    double s = 0.0;
    for (double v : e.objectives) s += v;
    e.mean_objective = s / static_cast<double>(e.objectives.size());
    auto it = result.best.find(e.algorithm);
    if (it == result.best.end() || e.mean_objective < it->second.mean_objective) result.best[e.algorithm] = e;
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::vector<const SweepEntry*> order;
    for (const auto& e : result.entries) order.push_back(&e);
    std::stable_sort(order.begin(), order.end(), [](const SweepEntry* a, const SweepEntry* b) {
      if (a->algorithm != b->algorithm) return a->algorithm < b->algorithm;
      return a->mean_objective < b->mean_objective;
    });
    std::ofstream table(*out_dir / "sweep_ranking.csv", std::ios::binary);
    table << "algorithm,rank,c_theta,c_q,mean_objective\n";
    char buf[256];
    std::string current;
    std::size_t rank = 0;
    for (const SweepEntry* e : order) {
      rank = e->algorithm == current ? rank + 1 : 1;
      current = e->algorithm;
      std::snprintf(buf, sizeof buf, "%s,%zu,%.12g,%.12g,%.12g\n", e->algorithm.c_str(), rank, e->steps.c_theta,
                    e->steps.c_q, e->mean_objective);
      table << buf;
    }
    ExperimentConfig tuned = cfg;
    for (const auto& [name, e] : result.best) tuned.solver.per_algorithm[name] = e.steps;
    std::ofstream tc(*out_dir / "tuned_config.json", std::ios::binary);
    tc << to_json(tuned).dump(2) << '\n';
    if (!table || !tc) throw std::runtime_error("failed to write sweep outputs under '" + out_dir->string() + "'");
  }
  return result;
}

/// Copies the sweep winners into solver.per_algorithm.
inline ExperimentConfig apply_sweep(ExperimentConfig cfg, const SweepResult& sweep) {
  for (const auto& [name, e] : sweep.best) cfg.solver.per_algorithm[name] = e.steps;
  return cfg;
}

// ---------------------------------------------------------------------------
// Lower-bound demonstration

struct LbDemoOptions {
  double delta = 0.1;
  std::size_t m = 4;
  std::uint64_t iterations = 10000;
  std::string algorithm = "gdro-tinf";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  StepConstants steps;
  std::size_t star_index = 0;
  std::size_t threads = 1;
};

struct LbInstanceReport {
  std::string name;
  double minimax_value = 0.0;
  double minimax_theta = 0.0;
  std::vector<double> gaps;         // per seed, at the averaged iterate
  std::vector<double> final_theta;  // per seed
  std::vector<double> mean_queries; // per group, averaged over seeds
  std::vector<std::uint64_t> total_queries;  // per seed, sum over groups
  double mean_gap = 0.0;
};

struct LbDemoReport {
  LbDemoOptions options;
  LbInstanceReport p0, p1;
  double separation = 0.0;  // delta / 4
};

/// Runs one solver on the base and the perturbed instance, one oracle sample
/// per round, with eta_theta,t = c_theta / sqrt(t) on the unit interval.
inline LbDemoReport lb_demo(const LbDemoOptions& opt) {
  LbDemoReport report;
  report.options = opt;
  report.separation = opt.delta / 4.0;
  const Algorithm algorithm = algorithm_from_string(opt.algorithm);
  if (opt.seeds.empty()) throw std::invalid_argument("lb_demo: need at least one seed");

  auto run_instance = [&](const LowerBoundInstance& inst, std::string name) {
    const LowerBoundProblem problem(inst);
    LbInstanceReport r;
    r.name = std::move(name);
    const LowerBoundOptimum opt_value = lb_minimax_value(inst);
    r.minimax_value = opt_value.value;
    r.minimax_theta = opt_value.theta;
    std::vector<Trajectory> trajs(opt.seeds.size());
    parallel_for(opt.seeds.size(), opt.threads, [&](std::size_t k) {
      SolverConfig sc;
      sc.algorithm = algorithm;
      sc.iterations = opt.iterations;
      sc.minibatch = 1;
      sc.seed = opt.seeds[k];
      sc.checkpoint_every = opt.iterations;
      sc.theta_schedule = StepSchedule::inverse_sqrt(opt.steps.c_theta);
      sc.q_step = q_step_size(opt.steps.c_q, inst.m, opt.iterations);
      trajs[k] = run_solver(problem, sc);
    });
    r.mean_queries.assign(inst.m, 0.0);
    for (const Trajectory& t : trajs) {
      const double theta = t.final().theta_avg(0);
      r.final_theta.push_back(theta);
      r.gaps.push_back(lb_gap(inst, theta));
      std::uint64_t total = 0;
      for (std::size_t i = 0; i < inst.m; ++i) {
        r.mean_queries[i] += static_cast<double>(t.group_queries[i]) / static_cast<double>(trajs.size());
        total += t.group_queries[i];
      }
      r.total_queries.push_back(total);
    }
    double s = 0.0;
    for (double g : r.gaps) s += g;
    r.mean_gap = s / static_cast<double>(r.gaps.size());
    return r;
  };

  report.p0 = run_instance(LowerBoundInstance::base(opt.m, opt.delta), "P0");
  report.p1 = run_instance(LowerBoundInstance::perturbed(opt.m, opt.delta, opt.star_index), "P1");
  return report;
}

inline nlohmann::json to_json(const LbDemoReport& r) {
  auto inst = [](const LbInstanceReport& x) {
    return nlohmann::json{{"name", x.name},         {"minimax_value", x.minimax_value},
                          {"minimax_theta", x.minimax_theta}, {"gaps", x.gaps},
                          {"mean_gap", x.mean_gap}, {"final_theta", x.final_theta},
                          {"mean_queries", x.mean_queries},   {"total_queries", x.total_queries}};
  };
  return {{"delta", r.options.delta},
          {"m", r.options.m},
          {"iterations", r.options.iterations},
          {"algorithm", r.options.algorithm},
          {"seeds", r.options.seeds},
          {"c_theta", r.options.steps.c_theta},
          {"c_q", r.options.steps.c_q},
          {"star_index", r.options.star_index},
          {"separation", r.separation},
          {"instances", {inst(r.p0), inst(r.p1)}}};
}

}  // namespace gdro

#endif
