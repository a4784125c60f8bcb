#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbw/graph.hpp"
#include "pbw/link_model.hpp"
#include "pbw/optimizer.hpp"
#include "pbw/simulator.hpp"

namespace pbw::cli {

using json = nlohmann::json;

struct GraphSpec {
  std::string kind = "geometric";  ///< geometric | complete
  int n = 100;
  double degree_fraction = 0.15;
  std::uint64_t seed = 1;  ///< instance i uses seed + i
  int instances = 1;
};

struct CorrelationSpec {
  std::string type = "none";  ///< none | uniform | geometric
  double c1 = 0.5;
  double theta = 0.95;
  std::optional<double> c2;  ///< empty means the largest feasible value
};

struct LinkSpec {
  std::string kind = "distance";  ///< distance | uniform | static | gossip
  double k_coef = 0.7;
  CorrelationSpec correlation;
  double p = 0.5;     ///< kind = uniform
  double beta = 0.0;  ///< kind = uniform
};

struct OptimizerSpec {
  OptimizerMode mode = OptimizerMode::kPhiCorrelated;
  int iters = 500;
  std::vector<double> step_scales{0.25, 0.5, 1.0, 2.0};
};

struct SimulationSpec {
  int paths = 100;
  int horizon = 200;
  std::uint64_t seed = 1;
  std::optional<int> burn_in;
};

struct ExperimentConfig {
  GraphSpec graph;
  LinkSpec link;
  OptimizerSpec optimizer;
  SimulationSpec simulation;
  std::vector<std::string> baselines;  ///< mw, sgbw | equal_gossip, fixed_g
  double fixed_g = 0.5;

  bool is_gossip() const { return link.kind == "gossip"; }
};

/// Parses and validates a configuration; throws InvalidArgument on any
/// unknown key, wrong type or out-of-range value.
ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  int threads = 1;
  std::optional<std::uint64_t> seed_override;  ///< replaces graph.seed and simulation.seed
};

void apply_overrides(ExperimentConfig& cfg, const RunOptions& opt);

/// One supergraph with its link model (absent for gossip).
struct Instance {
  int index = 0;
  std::uint64_t seed = 0;
  Supergraph graph;
  std::optional<LinkModel<double>> model;
  std::optional<double> c2;
};

Instance build_instance(const ExperimentConfig& cfg, int index);

/// Weights per method ("pbw" first, then the baselines) with their
/// objective values: phi for symmetric links, psi for gossip.
struct DesignedInstance {
  Instance instance;
  std::vector<std::string> methods;
  std::map<std::string, Eigen::MatrixXd> weights;
  std::map<std::string, double> objective;
  std::map<std::string, double> step_scale;
  std::optional<double> equal_gossip_weight;
};

DesignedInstance design_instance(const ExperimentConfig& cfg, int index);

struct SimulatedInstance {
  std::map<std::string, SimulationReport> reports;
  json gains;  ///< named ratios; null where a denominator vanished
  std::vector<std::string> warnings;
};

SimulatedInstance simulate_instance(const ExperimentConfig& cfg, const DesignedInstance& d, int threads);

/// Writes graph, model and per-method weights for every instance plus
/// design.json; returns the summary. Nothing is written unless every
/// instance succeeds.
json cmd_design(const ExperimentConfig& cfg, const std::filesystem::path& out, const RunOptions& opt);

/// Reads cmd_design artifacts from `out`, writes per-method CSVs and
/// simulation.json; returns the summary.
json cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out, const RunOptions& opt);

/// Design followed by simulation for broadcast gossip.
json cmd_gossip(const ExperimentConfig& cfg, const std::filesystem::path& out, const RunOptions& opt);

/// {mean, max, min, count} over the finite values.
json aggregate(const std::vector<double>& values);

std::string instance_dir_name(int index);

/// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv);

}  // namespace pbw::cli
