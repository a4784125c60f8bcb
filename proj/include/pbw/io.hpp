#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbw/core.hpp"
#include "pbw/graph.hpp"
#include "pbw/link_model.hpp"
#include "pbw/optimizer.hpp"
#include "pbw/sampling.hpp"
#include "pbw/simulator.hpp"

namespace pbw::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// {"rows": r, "cols": c, "data": [row-major values]}
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

/// {"n", "edges": [[i, j], ...], "positions": [[x, y], ...], "radius"}
json graph_to_json(const Supergraph& g);
Supergraph graph_from_json(const json& j);

/// {"pi": [...], "r_q": matrix}; link order is the lexicographic link index of g.
json model_to_json(const LinkModel<double>& model);
LinkModel<double> model_from_json(const json& j, const Supergraph& g);

json optimizer_config_to_json(const OptimizerConfig& cfg);
OptimizerConfig optimizer_config_from_json(const json& j);
std::string mode_name(OptimizerMode mode);
OptimizerMode mode_from_name(const std::string& name);

json optimization_result_to_json(const OptimizationResult<double>& res, const OptimizerConfig& cfg);

/// Columns k, mse, msdev, stderr_mse, stderr_msdev.
std::string report_csv(const SimulationReport& r);
json report_summary(const SimulationReport& r);

/// Header (m: u32, count: u32, seed: u64, little endian) then one row of
/// ceil(m / 8) bytes per sample, bit l of a row at byte l / 8, bit l % 8.
std::string encode_samples(const std::vector<TopologySample>& samples, int m, std::uint64_t seed);
std::vector<TopologySample> decode_samples(const std::string& bytes, int& m, std::uint64_t& seed);

/// Writes through a temporary file in the same directory and renames it.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace pbw::io
