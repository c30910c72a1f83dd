#include "flownet/flownet.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef FLOWNET_VERSION
#define FLOWNET_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace flownet;

namespace {

enum ExitCode : int
{
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kInput = 3,
  kNumerical = 4
};

struct ConfigError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

/// A required file from an earlier stage is missing.
struct MissingStageError : InputError
{
  using InputError::InputError;
};

struct RunConfig
{
  std::string flow = "double-gyre";
  std::size_t n = 1000;
  std::size_t steps = 100;
  std::string grid = "500x251";
  double T = 20.0;
  double dt_out = 0.1;
  double dt = 0.01;
  double A = 0.25;
  double delta = 0.25;
  double omega = 2.0 * std::numbers::pi;
  double epsilon = 0.03;
  long long t_index = -1;
  bool closeness = false;
  bool betweenness = false;
  std::size_t pivots = 0;
  bool require_connected = false;
  bool ftle = true;
  double smooth = 0.0;
  std::size_t series_every = 0;
  double eps_dm = 0.01;
  std::size_t m = 7;
  std::size_t k = 7;
  std::uint64_t seed = 0;
  std::string input;
  std::string out_dir = "flownet_out";
  unsigned threads = 0;
};

/// Every config key, bound both to a CLI flag and to a text setter for config files and manifests.
class Registry
{
public:
  template<typename T>
  void add(const std::string& key, T& field)
  {
    setters_[key] = [&field, key](const std::string& text) {
      if (!CLI::detail::lexical_cast(text, field))
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    };
    getters_[key] = [&field]() -> json { return field; };
  }

  void set(const std::string& key, const std::string& value) const
  {
    const auto it = setters_.find(key);
    if (it == setters_.end())
      throw ConfigError("unknown config key '" + key + "'");
    it->second(value);
  }

  json snapshot() const
  {
    json out = json::object();
    for (const auto& [key, get] : getters_)
      out[key] = get();
    return out;
  }

private:
  std::map<std::string, std::function<void(const std::string&)>> setters_;
  std::map<std::string, std::function<json()>> getters_;
};

std::string trimmed(std::string s)
{
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

void load_config_file(const fs::path& path, const Registry& reg)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trimmed(line.substr(0, line.find('#')));
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    reg.set(trimmed(line.substr(0, eq)), trimmed(line.substr(eq + 1)));
  }
}

void load_manifest(const fs::path& path, const Registry& reg)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("parameters") || !doc["parameters"].is_object())
    throw ConfigError("manifest " + path.string() + " has no parameters object");
  for (const auto& [key, value] : doc["parameters"].items()) {
    if (key == "threads")
      continue;
    reg.set(key, value.is_string() ? value.get<std::string>() : value.dump());
  }
}

std::vector<std::size_t> parse_grid(const std::string& text)
{
  std::vector<std::size_t> shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    std::size_t v = 0;
    if (!CLI::detail::lexical_cast(trimmed(part), v) || v < 2)
      throw ConfigError("grid '" + text + "' must look like 500x251 with every axis >= 2");
    shape.push_back(v);
  }
  if (shape.empty())
    throw ConfigError("empty grid specification");
  return shape;
}

/// Accepts plain numbers and multiples of pi such as "pi/32", "3pi/4" or "2*pi".
double parse_angle(std::string text)
{
  text = trimmed(text);
  const auto p = text.find("pi");
  double value = 0.0;
  if (p == std::string::npos) {
    if (!CLI::detail::lexical_cast(text, value))
      throw ConfigError("cannot parse angle '" + text + "'");
    return value;
  }
  std::string num = trimmed(text.substr(0, p));
  if (!num.empty() && num.back() == '*')
    num.pop_back();
  std::string den = trimmed(text.substr(p + 2));
  double a = 1.0, b = 1.0;
  if (!num.empty() && !CLI::detail::lexical_cast(num, a))
    throw ConfigError("cannot parse angle '" + text + "'");
  if (!den.empty()) {
    if (den.front() != '/' || !CLI::detail::lexical_cast(den.substr(1), b) || b == 0.0)
      throw ConfigError("cannot parse angle '" + text + "'");
  }
  return a * std::numbers::pi / b;
}

std::vector<std::string> split_list(const std::string& text)
{
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!trimmed(part).empty())
      out.push_back(trimmed(part));
  return out;
}

/// "lo:hi" (unit steps), "lo:hi:step" or a comma list.
std::vector<double> parse_real_grid(const std::string& text)
{
  std::vector<double> out;
  if (text.find(':') == std::string::npos) {
    for (const auto& item : split_list(text)) {
      double v = 0.0;
      if (!CLI::detail::lexical_cast(item, v))
        throw ConfigError("cannot parse number '" + item + "'");
      out.push_back(v);
    }
    return out;
  }
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) {
    double v = 0.0;
    if (!CLI::detail::lexical_cast(trimmed(part), v))
      throw ConfigError("cannot parse range '" + text + "'");
    parts.push_back(v);
  }
  if (parts.size() < 2 || parts.size() > 3)
    throw ConfigError("range must be lo:hi or lo:hi:step");
  const double step = parts.size() == 3 ? parts[2] : 1.0;
  if (!(step > 0.0) || parts[1] < parts[0])
    throw ConfigError("range '" + text + "' is empty");
  const auto count = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(parts[0] + step * static_cast<double>(i));
  return out;
}

std::string num(double v)
{
  std::string s;
  flownet::detail::append_real(s, v);
  return s;
}

fs::path out_path(const RunConfig& cfg, const std::string& given, const char* name)
{
  return given.empty() ? fs::path(cfg.out_dir) / name : fs::path(given);
}

void ensure_parent(const fs::path& p)
{
  if (p.has_parent_path())
    fs::create_directories(p.parent_path());
}

void require_input(const fs::path& p, const std::string& what, const std::string& producer)
{
  if (!fs::exists(p))
    throw MissingStageError(what + " '" + p.string() + "' not found; create it with `flownet " + producer + "`");
}

TrajectoryEnsemble read_ensemble(const fs::path& p)
{
  require_input(p, "ensemble", "generate");
  return p.extension() == ".csv" ? load_csv(p) : load_binary(p);
}

void write_ensemble(const TrajectoryEnsemble& ens, const fs::path& p)
{
  ensure_parent(p);
  if (p.extension() == ".csv")
    save_csv(ens, p);
  else
    save_binary(ens, p);
}

template<typename Writer>
void write_text(const fs::path& p, Writer&& write)
{
  if (p == "-") {
    write(std::cout);
    return;
  }
  ensure_parent(p);
  std::ofstream out(p);
  if (!out)
    throw InputError("cannot write " + p.string());
  write(out);
  if (!out)
    throw InputError("write failed for " + p.string());
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

TrajectoryEnsemble make_ensemble(const RunConfig& cfg)
{
  if (cfg.flow == "map1d")
    return generate_map_ensemble(cfg.n, cfg.steps);
  if (cfg.flow == "double-gyre") {
    const auto shape = parse_grid(cfg.grid);
    if (shape.size() != 2)
      throw ConfigError("double-gyre grid must have two axes");
    const DoubleGyreParams p{ cfg.A, cfg.delta, cfg.omega };
    return generate_double_gyre_ensemble(double_gyre_grid(shape[0], shape[1]), cfg.T, cfg.dt_out, cfg.dt, p);
  }
  if (cfg.flow == "external") {
    if (cfg.input.empty())
      throw ConfigError("flow=external needs --input with an ensemble file");
    return read_ensemble(cfg.input);
  }
  throw ConfigError("unknown flow '" + cfg.flow + "' (use map1d, double-gyre or external)");
}

AdjacencyMatrix make_network(const RunConfig& cfg, const TrajectoryEnsemble& ens)
{
  std::optional<std::size_t> last;
  if (cfg.t_index >= 0)
    last = static_cast<std::size_t>(cfg.t_index);
  return build_adjacency(ens, cfg.epsilon, last);
}

NodeMeasureTable make_measures(const RunConfig& cfg, const AdjacencyMatrix& A)
{
  if (cfg.require_connected)
    flownet::detail::require_connected(A);
  MeasureOptions opt;
  opt.closeness = cfg.closeness;
  opt.betweenness = cfg.betweenness;
  opt.betweenness_pivots = cfg.pivots;
  opt.seed = cfg.seed;
  return compute_measures(A, opt);
}

void write_field_csv(const ScalarField& f, std::ostream& out)
{
  const auto& g = f.grid;
  std::string buf;
  if (g.dims() == 2) {
    buf = "iy,iz,y,z,ftle\n";
  } else {
    for (std::size_t k = 0; k < g.dims(); ++k)
      buf += "i" + std::to_string(k) + ",";
    for (std::size_t k = 0; k < g.dims(); ++k)
      buf += "x" + std::to_string(k) + ",";
    buf += "ftle\n";
  }
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    for (std::size_t k = 0; k < g.dims(); ++k)
      buf += std::to_string(g.coord(i, k)) + ",";
    for (std::size_t k = 0; k < g.dims(); ++k) {
      flownet::detail::append_real(buf, g.position(i, k));
      buf += ',';
    }
    flownet::detail::append_real(buf, f.values[i]);
    buf += '\n';
    if (buf.size() > (1u << 16)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

ScalarField make_ftle(const TrajectoryEnsemble& ens, const std::vector<std::size_t>& shape, std::size_t t_end)
{
  const GridSpec g = infer_grid(ens, shape);
  return ftle_field_fd(ens, g, 0, t_end);
}

void write_classes(const EmbeddingCloud& cloud, const DiffusionParams& dp, std::size_t k, std::uint64_t seed,
                   const fs::path& csv_path)
{
  write_text(csv_path, [&](std::ostream& out) {
    std::string buf = "node,degree_std,clustering_std";
    for (std::size_t c = 0; c < dp.m; ++c)
      buf += ",dc" + std::to_string(c + 1);
    buf += ",label\n";
    for (std::size_t r = 0; r < cloud.nodes.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      buf += std::to_string(cloud.nodes[r]);
      for (Eigen::Index c = 0; c < 2; ++c) {
        buf += ',';
        flownet::detail::append_real(buf, cloud.standardized(row, c));
      }
      for (Eigen::Index c = 0; c < cloud.diffusion.coords.cols(); ++c) {
        buf += ',';
        flownet::detail::append_real(buf, cloud.diffusion.coords(row, c));
      }
      buf += "," + std::to_string(cloud.labels[r]) + "\n";
      if (buf.size() > (1u << 16)) {
        out << buf;
        buf.clear();
      }
    }
    out << buf;
  });
  json meta;
  meta["eps_dm"] = dp.eps_dm;
  meta["m"] = dp.m;
  meta["k"] = k;
  meta["seed"] = seed;
  meta["cutoff_radius"] = dp.cutoff();
  meta["normalization"] = "row-stochastic D^-1 K, no density correction";
  meta["coordinates"] = "eigenvalue-scaled right eigenvectors 2..m+1";
  meta["eigenvalues"] = cloud.diffusion.eigenvalues;
  meta["kernel_components"] = cloud.diffusion.components;
  meta["landmarks"] = cloud.diffusion.landmarks;
  meta["solver"] = cloud.diffusion.solver;
  meta["excluded_nodes"] = cloud.excluded;
  fs::path meta_path = csv_path;
  meta_path.replace_extension(".json");
  if (csv_path != "-")
    write_text(meta_path, [&](std::ostream& out) { out << meta.dump(2) << '\n'; });
}

DiffusionParams diffusion_params(const RunConfig& cfg)
{
  DiffusionParams dp;
  dp.eps_dm = cfg.eps_dm;
  dp.m = cfg.m;
  dp.seed = cfg.seed;
  return dp;
}

/// Region means of degree and clustering over growing time prefixes.
void write_series(const RunConfig& cfg, const TrajectoryEnsemble& ens, const fs::path& path)
{
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < ens.n_times(); t += cfg.series_every)
    idx.push_back(t);
  if (idx.back() != ens.n_times() - 1)
    idx.push_back(ens.n_times() - 1);
  const auto prefixes = build_adjacency_prefixes(ens, cfg.epsilon, idx);

  std::vector<std::pair<std::string, std::vector<std::size_t>>> regions;
  if (cfg.flow == "map1d") {
    std::vector<std::size_t> left, mid, right;
    for (std::size_t i = 0; i < ens.n_traj(); ++i) {
      const double x = ens.at(0, i, 0);
      (x < 0.25 ? left : x <= 0.75 ? mid : right).push_back(i);
    }
    regions = { { "static_left", left }, { "mixing", mid }, { "static_right", right } };
  } else {
    std::vector<std::size_t> all(ens.n_traj());
    std::iota(all.begin(), all.end(), 0);
    regions = { { "all", all } };
  }
  write_text(path, [&](std::ostream& out) {
    out << "t_index,time,region,degree,clustering\n";
    for (const auto& [name, members] : regions) {
      if (members.empty())
        continue;
      const auto d = measure_series(prefixes, MeasureKind::Degree, members);
      const auto c = measure_series(prefixes, MeasureKind::Clustering, members);
      for (std::size_t q = 0; q < idx.size(); ++q)
        out << idx[q] << ',' << num(ens.times()[idx[q]]) << ',' << name << ',' << num(d[q]) << ','
            << (std::isnan(c[q]) ? std::string() : num(c[q])) << '\n';
    }
  });
}

class StageClock
{
public:
  json& start(json& stages, const std::string& name)
  {
    begin_ = std::chrono::steady_clock::now();
    log::info("stage " + name);
    stages.push_back({ { "name", name } });
    return stages.back();
  }

  void stop(json& stage)
  {
    stage["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin_).count();
  }

private:
  std::chrono::steady_clock::time_point begin_;
};

void run_pipeline(const RunConfig& cfg, const Registry& reg)
{
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  json manifest;
  manifest["tool"] = "flownet";
  manifest["version"] = FLOWNET_VERSION;
  manifest["parameters"] = reg.snapshot();
  manifest["seed"] = cfg.seed;
  manifest["conventions"] = { { "distance", "euclidean, strict <" },
                              { "ftle_smoothing", "gaussian, sigma=epsilon unless smooth>0, truncated at 3 sigma" } };
  json stages = json::array();
  StageClock clock;

  auto& g = clock.start(stages, "generate");
  const auto ens = make_ensemble(cfg);
  const fs::path ens_path = dir / "ensemble.bin";
  if (cfg.flow != "external")
    write_ensemble(ens, ens_path);
  g["outputs"] = cfg.flow != "external" ? json::array({ ens_path.filename().string() }) : json::array();
  g["n_traj"] = ens.n_traj();
  g["n_times"] = ens.n_times();
  clock.stop(g);

  auto& nw = clock.start(stages, "network");
  const auto A = make_network(cfg, ens);
  save_network(A, dir / "network.bin");
  nw["outputs"] = { "network.bin" };
  nw["edges"] = A.edge_count();
  clock.stop(nw);

  auto& ms = clock.start(stages, "measures");
  const auto table = make_measures(cfg, A);
  write_text(dir / "measures.csv", [&](std::ostream& out) { write_measures_csv(table, out); });
  ms["outputs"] = { "measures.csv" };
  clock.stop(ms);

  if (cfg.series_every > 0) {
    auto& se = clock.start(stages, "series");
    write_series(cfg, ens, dir / "series.csv");
    se["outputs"] = { "series.csv" };
    clock.stop(se);
  }

  if (cfg.ftle && cfg.flow == "double-gyre") {
    auto& ft = clock.start(stages, "ftle");
    const auto end = cfg.t_index >= 0 ? static_cast<std::size_t>(cfg.t_index) : ens.n_times() - 1;
    const auto field = make_ftle(ens, parse_grid(cfg.grid), end);
    write_text(dir / "ftle.csv", [&](std::ostream& out) { write_field_csv(field, out); });
    const double sigma = cfg.smooth > 0.0 ? cfg.smooth : cfg.epsilon;
    write_text(dir / "ftle_smooth.csv",
               [&](std::ostream& out) { write_field_csv(gaussian_smooth(field, sigma), out); });
    ft["outputs"] = { "ftle.csv", "ftle_smooth.csv" };
    ft["smoothing_sigma"] = sigma;
    clock.stop(ft);
  }

  auto& cl = clock.start(stages, "classify");
  const auto dp = diffusion_params(cfg);
  const auto cloud = classify_pipeline(table, dp, cfg.k, cfg.seed);
  write_classes(cloud, dp, cfg.k, cfg.seed, dir / "classes.csv");
  cl["outputs"] = { "classes.csv", "classes.json" };
  clock.stop(cl);

  manifest["stages"] = stages;
  manifest["threads"] = max_threads();
  write_text(dir / "manifest.json", [&](std::ostream& out) { out << manifest.dump(2) << '\n'; });
}

std::optional<std::string> find_flag_value(int argc, char** argv, const std::string& flag)
{
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == flag && i + 1 < argc)
      return std::string(argv[i + 1]);
    if (a.rfind(flag + "=", 0) == 0)
      return a.substr(flag.size() + 1);
  }
  return std::nullopt;
}

int run(int argc, char** argv)
{
  RunConfig cfg;
  Registry reg;
  reg.add("flow", cfg.flow);
  reg.add("n", cfg.n);
  reg.add("steps", cfg.steps);
  reg.add("grid", cfg.grid);
  reg.add("T", cfg.T);
  reg.add("dt-out", cfg.dt_out);
  reg.add("dt", cfg.dt);
  reg.add("A", cfg.A);
  reg.add("delta", cfg.delta);
  reg.add("omega", cfg.omega);
  reg.add("epsilon", cfg.epsilon);
  reg.add("t-index", cfg.t_index);
  reg.add("closeness", cfg.closeness);
  reg.add("betweenness", cfg.betweenness);
  reg.add("pivots", cfg.pivots);
  reg.add("require-connected", cfg.require_connected);
  reg.add("ftle", cfg.ftle);
  reg.add("smooth", cfg.smooth);
  reg.add("series-every", cfg.series_every);
  reg.add("eps-dm", cfg.eps_dm);
  reg.add("m", cfg.m);
  reg.add("k", cfg.k);
  reg.add("seed", cfg.seed);
  reg.add("input", cfg.input);
  reg.add("out-dir", cfg.out_dir);
  reg.add("threads", cfg.threads);

  // Config and manifest values come first so that explicit flags override them.
  if (const auto manifest = find_flag_value(argc, argv, "--manifest"))
    load_manifest(*manifest, reg);
  if (const auto config = find_flag_value(argc, argv, "--config"))
    load_config_file(*config, reg);

  CLI::App app{ "flownet: proximity networks of Lagrangian trajectories" };
  app.set_version_flag("--version", std::string(FLOWNET_VERSION));
  app.require_subcommand(1);
  std::string config_path, manifest_path;
  app.add_option("--config", config_path, "flat key=value file; command-line flags take precedence");
  app.add_option("--threads", cfg.threads, "worker cap (0 = all cores)");
  int verbosity = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbosity, "more logging on stderr (repeat for debug)");
  app.add_flag("-q,--quiet", quiet, "only errors on stderr");

  auto flow_opts = [&](CLI::App* sub) {
    sub->add_option("--flow", cfg.flow, "map1d | double-gyre | external")->capture_default_str();
    sub->add_option("--n", cfg.n, "map1d: number of trajectories")->capture_default_str();
    sub->add_option("--steps", cfg.steps, "map1d: number of iterations")->capture_default_str();
    sub->add_option("--grid", cfg.grid, "double gyre: grid NYxNZ over [0,2]x[0,1]")->capture_default_str();
    sub->add_option("--T", cfg.T, "double gyre: final time")->capture_default_str();
    sub->add_option("--dt-out", cfg.dt_out, "double gyre: output spacing")->capture_default_str();
    sub->add_option("--dt", cfg.dt, "double gyre: internal RK4 step")->capture_default_str();
    sub->add_option("--A", cfg.A)->capture_default_str();
    sub->add_option("--delta", cfg.delta)->capture_default_str();
    sub->add_option("--omega", cfg.omega)->capture_default_str();
  };
  auto network_opts = [&](CLI::App* sub) {
    sub->add_option("--epsilon", cfg.epsilon, "proximity radius")->capture_default_str();
    sub->add_option("--t-index", cfg.t_index, "last slice to include (-1 = all)")->capture_default_str();
  };
  auto measure_opts = [&](CLI::App* sub) {
    sub->add_option("--closeness", cfg.closeness, "compute closeness (needs a connected graph)")->capture_default_str();
    sub->add_option("--betweenness", cfg.betweenness, "compute betweenness")->capture_default_str();
    sub->add_option("--pivots", cfg.pivots, "sampled betweenness pivots (0 = exact)")->capture_default_str();
    sub->add_option("--require-connected", cfg.require_connected, "fail if the network is disconnected")
      ->capture_default_str();
  };
  auto classify_opts = [&](CLI::App* sub) {
    sub->add_option("--eps-dm", cfg.eps_dm, "diffusion-map kernel scale")->capture_default_str();
    sub->add_option("--m", cfg.m, "number of diffusion coordinates")->capture_default_str();
    sub->add_option("--k", cfg.k, "number of classes")->capture_default_str();
  };
  auto common_opts = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "top-level random seed")->capture_default_str();
    sub->add_option("--out-dir", cfg.out_dir, "directory for default output paths")->capture_default_str();
  };

  std::string out, input_path, network_path, measures_path;
  bool also_csv = false;
  auto* gen = app.add_subcommand("generate", "advect an ensemble and write it (.bin or .csv by extension)");
  flow_opts(gen);
  common_opts(gen);
  gen->add_option("--input", cfg.input, "ensemble file for flow=external");
  gen->add_option("--out", out, "output file (default <out-dir>/ensemble.bin)");
  gen->add_flag("--csv", also_csv, "also write a CSV copy next to a binary output");

  auto* net = app.add_subcommand("network", "build the epsilon-proximity network");
  network_opts(net);
  common_opts(net);
  net->add_option("--input", input_path, "ensemble file (default <out-dir>/ensemble.bin)");
  net->add_option("--out", out, "network file, .bin or edge-list .csv (default <out-dir>/network.bin)");

  auto* mea = app.add_subcommand("measures", "local network measures as CSV");
  measure_opts(mea);
  common_opts(mea);
  mea->add_option("--network", network_path, "network file (default <out-dir>/network.bin)");
  mea->add_option("--out", out, "CSV (default <out-dir>/measures.csv, - for stdout)");

  std::string grid_override;
  long long t_end = -1;
  auto* ftl = app.add_subcommand("ftle", "finite-difference FTLE of a gridded ensemble");
  common_opts(ftl);
  ftl->add_option("--input", input_path, "ensemble file (default <out-dir>/ensemble.bin)");
  ftl->add_option("--grid", cfg.grid, "grid shape of the initial slice")->capture_default_str();
  ftl->add_option("--t-end", t_end, "final slice index (-1 = last)")->capture_default_str();
  ftl->add_option("--smooth", cfg.smooth, "Gaussian smoothing sigma (0 = none)")->capture_default_str();
  ftl->add_option("--out", out, "CSV iy,iz,y,z,ftle (default <out-dir>/ftle.csv)");

  auto* theory = app.add_subcommand("theory", "Monte Carlo checks of the linearized neighborhood geometry");
  theory->require_subcommand(1);
  std::string sigma_grid = "1:10", angles = "0,pi/32,pi/16,pi/8", sigmas = "1,2,4,10";
  std::uint64_t samples = 100000;
  unsigned inner = 16;
  std::size_t family = 200;
  auto* overlap = theory->add_subcommand("overlap", "expected relative overlap of two ellipses");
  overlap->add_option("--sigma-grid", sigma_grid, "lo:hi[:step] or list")->capture_default_str();
  overlap->add_option("--angles", angles, "comma list, pi multiples allowed")->capture_default_str();
  overlap->add_option("--samples", samples, "outer samples")->capture_default_str();
  overlap->add_option("--inner", inner, "inner samples per configuration")->capture_default_str();
  overlap->add_option("--seed", cfg.seed)->capture_default_str();
  overlap->add_option("--out", out, "CSV (default stdout)");
  auto* volume = theory->add_subcommand("volume", "area of unions of aligned pullback ellipses vs closed form");
  volume->add_option("--sigmas", sigmas, "final stretch factors")->capture_default_str();
  volume->add_option("--epsilon", cfg.epsilon)->capture_default_str();
  volume->add_option("--family-size", family, "ellipses per family")->capture_default_str();
  volume->add_option("--samples", samples)->capture_default_str();
  volume->add_option("--seed", cfg.seed)->capture_default_str();
  volume->add_option("--out", out, "CSV (default stdout)");

  auto* cls = app.add_subcommand("classify", "diffusion-map embedding and k-means of (degree, clustering)");
  classify_opts(cls);
  common_opts(cls);
  cls->add_option("--measures", measures_path, "measures CSV (default <out-dir>/measures.csv)");
  cls->add_option("--out", out, "CSV (default <out-dir>/classes.csv); metadata goes to the .json sibling");

  auto* pipe = app.add_subcommand("pipeline", "generate, network, measures, ftle and classify in one run");
  flow_opts(pipe);
  network_opts(pipe);
  measure_opts(pipe);
  classify_opts(pipe);
  common_opts(pipe);
  pipe->add_option("--input", cfg.input, "ensemble file for flow=external");
  pipe->add_option("--ftle", cfg.ftle, "compute FTLE fields (double gyre)")->capture_default_str();
  pipe->add_option("--smooth", cfg.smooth, "FTLE smoothing sigma (0 = epsilon)")->capture_default_str();
  pipe->add_option("--series-every", cfg.series_every, "write growing-time measure series every K slices (0 = off)")
    ->capture_default_str();
  pipe->add_option("--manifest", manifest_path, "rerun with the parameters of an earlier manifest.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  log::set_level(quiet ? log::Level::Error
                       : verbosity >= 2 ? log::Level::Debug
                       : verbosity == 1 ? log::Level::Info
                                        : log::Level::Warn);
  set_max_threads(cfg.threads);

  if (*gen) {
    const auto ens = make_ensemble(cfg);
    const fs::path p = out_path(cfg, out, "ensemble.bin");
    write_ensemble(ens, p);
    if (also_csv && p.extension() != ".csv") {
      fs::path c = p;
      write_ensemble(ens, c.replace_extension(".csv"));
    }
  } else if (*net) {
    const auto ens = read_ensemble(out_path(cfg, input_path, "ensemble.bin"));
    const fs::path p = out_path(cfg, out, "network.bin");
    ensure_parent(p);
    save_network(make_network(cfg, ens), p);
  } else if (*mea) {
    const fs::path np = out_path(cfg, network_path, "network.bin");
    require_input(np, "network", "network");
    const auto table = make_measures(cfg, load_network(np));
    write_text(out_path(cfg, out, "measures.csv"), [&](std::ostream& os) { write_measures_csv(table, os); });
  } else if (*ftl) {
    const auto ens = read_ensemble(out_path(cfg, input_path, "ensemble.bin"));
    const auto end = t_end >= 0 ? static_cast<std::size_t>(t_end) : ens.n_times() - 1;
    auto field = make_ftle(ens, parse_grid(cfg.grid), end);
    if (cfg.smooth > 0.0)
      field = gaussian_smooth(field, cfg.smooth);
    write_text(out_path(cfg, out, "ftle.csv"), [&](std::ostream& os) { write_field_csv(field, os); });
  } else if (*overlap) {
    std::vector<double> angle_values;
    for (const auto& a : split_list(angles))
      angle_values.push_back(parse_angle(a));
    const auto sig = parse_real_grid(sigma_grid);
    write_text(out.empty() ? fs::path("-") : fs::path(out), [&](std::ostream& os) {
      os << "sigma,max_angle,estimate,stderr\n";
      for (double a : angle_values)
        for (double s : sig) {
          const auto est = expected_overlap_mc(s, a, samples, cfg.seed, inner);
          os << num(s) << ',' << num(a) << ',' << num(est.value) << ',' << num(est.std_error) << '\n';
        }
    });
  } else if (*volume) {
    const auto sig = parse_real_grid(sigmas);
    write_text(out.empty() ? fs::path("-") : fs::path(out), [&](std::ostream& os) {
      os << "sigma,formula,mc,stderr\n";
      for (double s : sig) {
        const auto est = ellipse_union_area_mc(axis_aligned_family(s, cfg.epsilon, family), samples, cfg.seed);
        os << num(s) << ',' << num(vol_galaxy_formula(s, cfg.epsilon)) << ',' << num(est.value) << ','
           << num(est.std_error) << '\n';
      }
    });
  } else if (*cls) {
    const fs::path mp = out_path(cfg, measures_path, "measures.csv");
    require_input(mp, "measures table", "measures");
    std::ifstream in(mp);
    const auto table = read_measures_csv(in);
    const auto dp = diffusion_params(cfg);
    const auto cloud = classify_pipeline(table, dp, cfg.k, cfg.seed);
    write_classes(cloud, dp, cfg.k, cfg.seed, out_path(cfg, out, "classes.csv"));
  } else if (*pipe) {
    run_pipeline(cfg, reg);
  }
  return kOk;
}

} // namespace

int main(int argc, char** argv)
{
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    log::write(log::Level::Error, std::string("configuration: ") + e.what());
    return kConfig;
  } catch (const DomainError& e) {
    log::write(log::Level::Error, std::string("invalid parameter: ") + e.what());
    return kConfig;
  } catch (const InputError& e) {
    log::write(log::Level::Error, std::string("input: ") + e.what());
    return kInput;
  } catch (const NumericalError& e) {
    log::write(log::Level::Error, std::string("numerical: ") + e.what());
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    log::write(log::Level::Error, std::string("file system: ") + e.what());
    return kInput;
  } catch (const std::exception& e) {
    log::write(log::Level::Error, std::string("unexpected: ") + e.what());
    return kUnexpected;
  }
}
