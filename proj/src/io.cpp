#include "pbw/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace pbw::io {

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) v |= std::uint64_t(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return static_cast<T>(v);
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw InvalidArgument("matrix JSON: data length does not match shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

json graph_to_json(const Supergraph& g) {
  json edges = json::array();
  for (const Link& e : g.links()) edges.push_back({e.i, e.j});
  json out{{"schema_version", kSchemaVersion}, {"n", g.num_nodes()}, {"edges", std::move(edges)}};
  if (g.positions()) {
    json pos = json::array();
    for (int i = 0; i < g.num_nodes(); ++i) pos.push_back({(*g.positions())(0, i), (*g.positions())(1, i)});
    out["positions"] = std::move(pos);
  }
  if (g.radius()) out["radius"] = *g.radius();
  return out;
}

Supergraph graph_from_json(const json& j) {
  const int n = j.at("n").get<int>();
  std::vector<Link> edges;
  for (const json& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw InvalidArgument("graph JSON: each edge must be [i, j]");
    edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  std::optional<Eigen::Matrix2Xd> pos;
  if (j.contains("positions")) {
    const json& p = j.at("positions");
    if (static_cast<int>(p.size()) != n) throw InvalidArgument("graph JSON: positions length differs from n");
    pos.emplace(2, n);
    for (int i = 0; i < n; ++i) {
      (*pos)(0, i) = p[static_cast<std::size_t>(i)].at(0).get<double>();
      (*pos)(1, i) = p[static_cast<std::size_t>(i)].at(1).get<double>();
    }
  }
  std::optional<double> radius;
  if (j.contains("radius")) radius = j.at("radius").get<double>();
  return Supergraph(n, std::move(edges), std::move(pos), radius);
}

json model_to_json(const LinkModel<double>& model) {
  return {{"schema_version", kSchemaVersion},
          {"num_links", model.num_links()},
          {"pi", std::vector<double>(model.pi.data(), model.pi.data() + model.pi.size())},
          {"r_q", matrix_to_json(model.r_q)}};
}

LinkModel<double> model_from_json(const json& j, const Supergraph& g) {
  LinkModel<double> m;
  m.idx = LinkIndex(g);
  const auto pi = j.at("pi").get<std::vector<double>>();
  if (static_cast<int>(pi.size()) != g.num_links()) throw InvalidArgument("model JSON: pi length differs from link count");
  m.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<Eigen::Index>(pi.size()));
  m.r_q = matrix_from_json(j.at("r_q"));
  if (m.r_q.rows() != g.num_links() || m.r_q.cols() != g.num_links())
    throw InvalidArgument("model JSON: r_q shape differs from link count");
  return m;
}

std::string mode_name(OptimizerMode mode) {
  switch (mode) {
    case OptimizerMode::kPhiUncorrelated: return "phi_uncorrelated";
    case OptimizerMode::kPhiCorrelated: return "phi_correlated";
    case OptimizerMode::kPsiGossip: return "psi_gossip";
    case OptimizerMode::kPsiConstrained: return "psi_constrained";
  }
  return "unknown";
}

OptimizerMode mode_from_name(const std::string& name) {
  for (OptimizerMode m : {OptimizerMode::kPhiUncorrelated, OptimizerMode::kPhiCorrelated, OptimizerMode::kPsiGossip,
                          OptimizerMode::kPsiConstrained})
    if (mode_name(m) == name) return m;
  throw InvalidArgument("unknown optimizer mode '" + name + "'");
}

json optimizer_config_to_json(const OptimizerConfig& cfg) {
  return {{"max_iters", cfg.max_iters},
          {"step_scale", cfg.step_scale},
          {"seed", cfg.seed},
          {"eigen_gap_floor", cfg.eigen_gap_floor},
          {"mode", mode_name(cfg.mode)}};
}

OptimizerConfig optimizer_config_from_json(const json& j) {
  OptimizerConfig cfg;
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.step_scale = j.value("step_scale", cfg.step_scale);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.eigen_gap_floor = j.value("eigen_gap_floor", cfg.eigen_gap_floor);
  if (j.contains("mode")) cfg.mode = mode_from_name(j.at("mode").get<std::string>());
  if (cfg.max_iters < 1) throw InvalidArgument("optimizer.max_iters must be at least 1");
  if (!(cfg.step_scale > 0)) throw InvalidArgument("optimizer.step_scale must be positive");
  return cfg;
}

json optimization_result_to_json(const OptimizationResult<double>& res, const OptimizerConfig& cfg) {
  json trace = json::array();
  for (double v : res.objective_trace) trace.push_back(number(v));
  return {{"schema_version", kSchemaVersion},
          {"best_objective", number(res.best_objective)},
          {"iterations_run", res.iterations_run},
          {"best_weights", matrix_to_json(res.best_weights)},
          {"objective_trace", std::move(trace)},
          {"config", optimizer_config_to_json(cfg)}};
}

std::string report_csv(const SimulationReport& r) {
  std::ostringstream os;
  os << "k,mse,msdev,stderr_mse,stderr_msdev\n";
  for (std::size_t k = 0; k < r.mse.size(); ++k)
    os << k << ',' << format_double(r.mse[k]) << ',' << format_double(r.msdev[k]) << ','
       << format_double(r.stderr_mse[k]) << ',' << format_double(r.stderr_msdev[k]) << '\n';
  return os.str();
}

json report_summary(const SimulationReport& r) {
  return {{"paths", r.paths}, {"horizon", r.horizon()},   {"seed", r.seed},
          {"gamma_hat", number(r.gamma_hat)}, {"eta", number(r.eta)}, {"tau", number(r.tau)}};
}

std::string encode_samples(const std::vector<TopologySample>& samples, int m, std::uint64_t seed) {
  if (m < 0) throw InvalidArgument("negative link count");
  std::string out;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
  put_le<std::uint64_t>(out, seed);
  const std::size_t row = (static_cast<std::size_t>(m) + 7) / 8;
  for (const auto& s : samples) {
    if (static_cast<int>(s.bits.size()) != m) throw InvalidArgument("sample length differs from link count");
    std::string bytes(row, '\0');
    for (int l = 0; l < m; ++l)
      if (s.bits[static_cast<std::size_t>(l)]) bytes[static_cast<std::size_t>(l / 8)] |= static_cast<char>(1 << (l % 8));
    out += bytes;
  }
  return out;
}

std::vector<TopologySample> decode_samples(const std::string& bytes, int& m, std::uint64_t& seed) {
  if (bytes.size() < 16) throw InvalidArgument("sample dump shorter than its header");
  m = static_cast<int>(get_le<std::uint32_t>(bytes, 0));
  const auto count = get_le<std::uint32_t>(bytes, 4);
  seed = get_le<std::uint64_t>(bytes, 8);
  const std::size_t row = (static_cast<std::size_t>(m) + 7) / 8;
  if (bytes.size() != 16 + row * count) throw InvalidArgument("sample dump length does not match its header");
  std::vector<TopologySample> out(count);
  for (std::size_t s = 0; s < count; ++s) {
    out[s].bits.resize(static_cast<std::size_t>(m));
    for (int l = 0; l < m; ++l)
      out[s].bits[static_cast<std::size_t>(l)] =
          (static_cast<unsigned char>(bytes[16 + s * row + static_cast<std::size_t>(l / 8)]) >> (l % 8)) & 1u;
  }
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidArgument("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace pbw::io
