#include "geomcmc/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "geomcmc/diagnostics.hpp"

namespace geomcmc {

std::string_view toolkit_version() { return GEOMCMC_VERSION; }

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads one JSON object, remembering which keys were used so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(label() + " must be an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::optional<double> number(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
    return v->get<double>();
  }

  std::optional<int> integer(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
    const auto x = v->get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError(field(key) + ": integer out of range");
    }
    return static_cast<int>(x);
  }

  std::optional<std::uint64_t> unsigned_integer(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0)) {
      throw ConfigError(field(key) + ": expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  std::optional<bool> boolean(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
    return v->get<std::string>();
  }

  std::optional<std::vector<double>> numbers(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    return as_numbers(*v, field(key));
  }

  std::optional<std::vector<std::vector<double>>> rows(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) throw ConfigError(field(key) + ": expected an array of arrays");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_numbers((*v)[i], field(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::optional<Section> section(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    return Section(*v, field(key));
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError("unknown key '" + field(item.key()) + "'");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  static std::vector<double> as_numbers(const json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(where + ": expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

bool is_funnel(const ModelSpec& m) { return m.name == "funnel-centered" || m.name == "funnel-noncentered"; }

Vector to_vector(const std::vector<double>& xs) { return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size())); }

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void parse_model(Section s, ExperimentConfig& cfg) {
  ModelSpec& m = cfg.model;
  const auto name = s.string("name");
  if (!name) throw ConfigError("model.name is required");
  m.name = *name;
  if (std::find(model_names().begin(), model_names().end(), m.name) == model_names().end()) {
    throw ConfigError("model.name: unknown model '" + m.name + "'");
  }
  if (is_funnel(m)) {
    if (auto n = s.integer("n_individuals")) m.funnel.n_individuals = *n;
    if (auto x = s.number("mu_prior_scale")) m.funnel.mu_prior_scale = *x;
    if (auto x = s.number("lambda_prior_scale")) m.funnel.lambda_prior_scale = *x;
    m.funnel.parameterization =
        m.name == "funnel-centered" ? Parameterization::centered : Parameterization::non_centered;
    m.funnel.validate();
  } else {
    const auto mean = s.numbers("mean");
    if (!mean || mean->empty()) throw ConfigError("model.mean is required for the gaussian model");
    m.mean = to_vector(*mean);
    const Eigen::Index d = m.mean.size();
    if (auto cov = s.rows("covariance")) {
      if (static_cast<Eigen::Index>(cov->size()) != d) throw ConfigError("model.covariance: expected a square matrix matching model.mean");
      m.covariance.resize(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        if (static_cast<Eigen::Index>((*cov)[i].size()) != d) {
          throw ConfigError("model.covariance: expected a square matrix matching model.mean");
        }
        for (Eigen::Index j = 0; j < d; ++j) m.covariance(i, j) = (*cov)[i][j];
      }
    } else {
      m.covariance = Matrix::Identity(d, d);
    }
  }
  s.finish();
}

void parse_metric(Section s, MetricSpec& m) {
  const std::string kind = s.string("kind").value_or("identity");
  if (kind == "identity") {
    m.kind = MetricSpec::Kind::identity;
  } else if (kind == "diagonal") {
    m.kind = MetricSpec::Kind::diagonal;
    auto values = s.numbers("values");
    if (!values) throw ConfigError("metric.values is required for a diagonal metric");
    m.values = *values;
  } else if (kind == "equivalent") {
    m.kind = MetricSpec::Kind::equivalent;
    auto reparam = s.string("reparam");
    if (!reparam) throw ConfigError("metric.reparam is required for an equivalent metric");
    m.reparam = *reparam;
    if (std::find(reparam_names().begin(), reparam_names().end(), m.reparam) == reparam_names().end()) {
      throw ConfigError("metric.reparam: unknown reparameterization '" + m.reparam + "'");
    }
    m.base_diagonal = s.numbers("base_diagonal").value_or(std::vector<double>{});
  } else {
    throw ConfigError("metric.kind: unknown metric '" + kind + "' (expected identity, diagonal or equivalent)");
  }
  s.finish();
}

void parse_sampler(Section s, ExperimentConfig& cfg) {
  SamplerConfig& c = cfg.sampler_cfg;
  if (auto name = s.string("name")) cfg.sampler = sampler_kind_from_string(*name);
  if (auto x = s.number("step_size")) c.step_size = *x;
  if (auto x = s.integer("n_leapfrog_steps")) c.n_leapfrog_steps = *x;
  if (auto x = s.number("integration_time")) c.integration_time = *x;
  if (auto x = s.integer("geodesic_steps")) c.geodesic_steps = *x;
  if (auto x = s.integer("n_samples")) c.n_samples = *x;
  if (auto x = s.unsigned_integer("seed")) c.seed = *x;
  if (auto x = s.number("fixed_point_tol")) c.fixed_point_tol = *x;
  if (auto x = s.integer("fixed_point_max_iter")) c.fixed_point_max_iter = *x;
  if (auto x = s.number("divergence_threshold")) c.divergence_threshold = *x;
  if (auto x = s.boolean("adjusted")) c.adjusted = *x;
  if (auto x = s.integer("n_chains")) cfg.n_chains = *x;
  s.finish();
  if (cfg.n_chains < 1) throw ConfigError("sampler.n_chains must be >= 1");
  c.validate();
}

void parse_grid(Section s, GridSpec& g) {
  const std::string kind = s.string("kind").value_or("box");
  if (kind == "box") {
    g.kind = GridSpec::Kind::box;
    if (auto x = s.number("low")) g.low = *x;
    if (auto x = s.number("high")) g.high = *x;
    if (auto x = s.integer("resolution")) g.resolution = *x;
    if (!(g.low < g.high)) throw ConfigError("grid.low must be below grid.high");
    if (g.resolution < 1) throw ConfigError("grid.resolution must be >= 1");
  } else if (kind == "envelope") {
    g.kind = GridSpec::Kind::envelope;
    if (auto x = s.integer("count")) g.count = *x;
    if (auto x = s.unsigned_integer("seed")) g.seed = *x;
    if (g.count < 1) throw ConfigError("grid.count must be >= 1");
  } else if (kind == "points") {
    g.kind = GridSpec::Kind::points;
    auto pts = s.rows("points");
    if (!pts || pts->empty()) throw ConfigError("grid.points is required for a points grid");
    g.points = *pts;
  } else {
    throw ConfigError("grid.kind: unknown grid '" + kind + "' (expected box, envelope or points)");
  }
  s.finish();
}

const std::vector<std::string>& output_names() {
  static const std::vector<std::string> names{"chain", "summary", "trajectory", "deviation_grid"};
  return names;
}

void check_length(const std::vector<double>& xs, int dim, const std::string& field) {
  if (static_cast<int>(xs.size()) != dim) {
    throw ConfigError(field + ": expected " + std::to_string(dim) + " values, got " + std::to_string(xs.size()));
  }
  for (double x : xs)
    if (!std::isfinite(x)) throw ConfigError(field + ": values must be finite");
}

void validate_dimensions(const ExperimentConfig& cfg) {
  const int d = cfg.dim();
  if (cfg.metric.kind == MetricSpec::Kind::diagonal) {
    check_length(cfg.metric.values, d, "metric.values");
    for (double x : cfg.metric.values)
      if (!(x > 0.0)) throw ConfigError("metric.values must be positive");
  }
  if (cfg.metric.kind == MetricSpec::Kind::equivalent) {
    if (cfg.metric.reparam == "noncentering" && !is_funnel(cfg.model)) {
      throw ConfigError("metric.reparam: 'noncentering' requires a funnel model");
    }
    if (!cfg.metric.base_diagonal.empty()) {
      check_length(cfg.metric.base_diagonal, d, "metric.base_diagonal");
      for (double x : cfg.metric.base_diagonal)
        if (!(x > 0.0)) throw ConfigError("metric.base_diagonal must be positive");
    }
  }
  if (cfg.initial) check_length(*cfg.initial, d, "initial");
  if (cfg.trajectory_momentum) check_length(*cfg.trajectory_momentum, d, "trajectory.momentum");
  if (cfg.trajectory_steps && *cfg.trajectory_steps < 1) throw ConfigError("trajectory.steps must be >= 1");
  if (cfg.grid.kind == GridSpec::Kind::points) {
    for (std::size_t i = 0; i < cfg.grid.points.size(); ++i) {
      check_length(cfg.grid.points[i], d, "grid.points[" + std::to_string(i) + "]");
    }
  }
}

}  // namespace

int ExperimentConfig::dim() const {
  return is_funnel(model) ? model.funnel.dim() : static_cast<int>(model.mean.size());
}

bool ExperimentConfig::wants(std::string_view output) const {
  return std::find(outputs.begin(), outputs.end(), output) != outputs.end();
}

ExperimentConfig parse_config(const nlohmann::json& doc) {
  ExperimentConfig cfg;
  Section root(doc, "");
  auto model = root.section("model");
  if (!model) throw ConfigError("model is required");
  parse_model(*model, cfg);
  if (auto p = root.string("parameterization")) {
    if (*p == "centered") {
      cfg.parameterization = Parameterization::centered;
    } else if (*p == "non_centered") {
      cfg.parameterization = Parameterization::non_centered;
    } else {
      throw ConfigError("parameterization: expected 'centered' or 'non_centered', got '" + *p + "'");
    }
    if (!is_funnel(cfg.model)) throw ConfigError("parameterization applies to funnel models only");
    if (*cfg.parameterization != cfg.model.funnel.parameterization) {
      throw ConfigError("parameterization: '" + *p + "' contradicts model.name '" + cfg.model.name + "'");
    }
  }
  if (auto m = root.section("metric")) parse_metric(*m, cfg.metric);
  if (auto s = root.section("sampler")) parse_sampler(*s, cfg);
  cfg.initial = root.numbers("initial");
  if (auto t = root.section("trajectory")) {
    cfg.trajectory_steps = t->integer("steps");
    cfg.trajectory_momentum = t->numbers("momentum");
    t->finish();
  }
  if (auto g = root.section("grid")) parse_grid(*g, cfg.grid);
  if (const json* outputs = root.raw("outputs")) {
    if (!outputs->is_array()) throw ConfigError("outputs: expected an array of strings");
    cfg.outputs.clear();
    for (const auto& o : *outputs) {
      if (!o.is_string()) throw ConfigError("outputs: expected an array of strings");
      const auto name = o.get<std::string>();
      if (std::find(output_names().begin(), output_names().end(), name) == output_names().end()) {
        throw ConfigError("outputs: unknown output '" + name + "' (expected chain, summary, trajectory or deviation_grid)");
      }
      cfg.outputs.push_back(name);
    }
  }
  if (auto dir = root.string("output_dir")) cfg.output_dir = *dir;
  root.finish();
  validate_dimensions(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  ojson j;
  ojson model;
  model["name"] = cfg.model.name;
  if (is_funnel(cfg.model)) {
    model["n_individuals"] = cfg.model.funnel.n_individuals;
    model["mu_prior_scale"] = cfg.model.funnel.mu_prior_scale;
    model["lambda_prior_scale"] = cfg.model.funnel.lambda_prior_scale;
  } else {
    model["mean"] = to_std(cfg.model.mean);
    ojson cov = ojson::array();
    for (Eigen::Index i = 0; i < cfg.model.covariance.rows(); ++i) cov.push_back(to_std(cfg.model.covariance.row(i).transpose()));
    model["covariance"] = cov;
  }
  j["model"] = model;
  if (is_funnel(cfg.model)) j["parameterization"] = std::string(to_string(cfg.model.funnel.parameterization));

  ojson metric;
  switch (cfg.metric.kind) {
    case MetricSpec::Kind::identity:
      metric["kind"] = "identity";
      break;
    case MetricSpec::Kind::diagonal:
      metric["kind"] = "diagonal";
      metric["values"] = cfg.metric.values;
      break;
    case MetricSpec::Kind::equivalent:
      metric["kind"] = "equivalent";
      metric["reparam"] = cfg.metric.reparam;
      if (!cfg.metric.base_diagonal.empty()) metric["base_diagonal"] = cfg.metric.base_diagonal;
      break;
  }
  j["metric"] = metric;

  const SamplerConfig& c = cfg.sampler_cfg;
  ojson sampler;
  sampler["name"] = std::string(to_string(cfg.sampler));
  sampler["step_size"] = c.step_size;
  sampler["n_leapfrog_steps"] = c.n_leapfrog_steps;
  sampler["integration_time"] = c.integration_time;
  sampler["geodesic_steps"] = c.geodesic_steps;
  sampler["n_samples"] = c.n_samples;
  sampler["seed"] = c.seed;
  sampler["n_chains"] = cfg.n_chains;
  sampler["fixed_point_tol"] = c.fixed_point_tol;
  sampler["fixed_point_max_iter"] = c.fixed_point_max_iter;
  sampler["divergence_threshold"] = c.divergence_threshold;
  sampler["adjusted"] = c.adjusted;
  j["sampler"] = sampler;

  if (cfg.initial) j["initial"] = *cfg.initial;
  if (cfg.trajectory_steps || cfg.trajectory_momentum) {
    ojson t;
    if (cfg.trajectory_steps) t["steps"] = *cfg.trajectory_steps;
    if (cfg.trajectory_momentum) t["momentum"] = *cfg.trajectory_momentum;
    j["trajectory"] = t;
  }

  ojson grid;
  switch (cfg.grid.kind) {
    case GridSpec::Kind::box:
      grid["kind"] = "box";
      grid["low"] = cfg.grid.low;
      grid["high"] = cfg.grid.high;
      grid["resolution"] = cfg.grid.resolution;
      break;
    case GridSpec::Kind::envelope:
      grid["kind"] = "envelope";
      grid["count"] = cfg.grid.count;
      grid["seed"] = cfg.grid.seed;
      break;
    case GridSpec::Kind::points:
      grid["kind"] = "points";
      grid["points"] = cfg.grid.points;
      break;
  }
  j["grid"] = grid;
  j["outputs"] = cfg.outputs;
  j["output_dir"] = cfg.output_dir;
  return j;
}

GridSpec parse_grid_spec(std::string_view spec) {
  std::vector<std::string> parts;
  std::stringstream ss{std::string(spec)};
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  auto bad = [&] {
    return ConfigError("--grid: cannot parse '" + std::string(spec) +
                       "' (expected box:LOW:HIGH:RES or envelope:COUNT[:SEED])");
  };
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    double x;
    try {
      x = std::stod(s, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != s.size()) throw bad();
    return x;
  };
  auto whole = [&](const std::string& s) {
    const double x = num(s);
    if (x != std::floor(x) || x < 1.0 || x > 1e9) throw bad();
    return static_cast<long long>(x);
  };
  GridSpec g;
  if (parts.size() == 4 && parts[0] == "box") {
    g.kind = GridSpec::Kind::box;
    g.low = num(parts[1]);
    g.high = num(parts[2]);
    g.resolution = static_cast<int>(whole(parts[3]));
    if (!(g.low < g.high)) throw ConfigError("--grid: LOW must be below HIGH");
  } else if ((parts.size() == 2 || parts.size() == 3) && parts[0] == "envelope") {
    g.kind = GridSpec::Kind::envelope;
    g.count = static_cast<int>(whole(parts[1]));
    if (parts.size() == 3) {
      const double seed = num(parts[2]);
      if (seed < 0.0 || seed != std::floor(seed)) throw bad();
      g.seed = static_cast<std::uint64_t>(seed);
    }
  } else {
    throw bad();
  }
  return g;
}

std::vector<Vector> grid_points(const GridSpec& grid, int dim) {
  std::vector<Vector> out;
  switch (grid.kind) {
    case GridSpec::Kind::points:
      for (const auto& p : grid.points) {
        if (static_cast<int>(p.size()) != dim) throw DimensionMismatch("grid point has the wrong dimension");
        out.push_back(to_vector(p));
      }
      break;
    case GridSpec::Kind::envelope: {
      Rng rng(grid.seed);
      for (int i = 0; i < grid.count; ++i) out.push_back(rng.normal_vector(dim));
      break;
    }
    case GridSpec::Kind::box: {
      const int r = grid.resolution;
      const double total = std::pow(static_cast<double>(r), dim);
      if (total > 1e7) throw ConfigError("grid: box with " + std::to_string(r) + "^" + std::to_string(dim) + " points is too large");
      const double step = r > 1 ? (grid.high - grid.low) / (r - 1) : 0.0;
      const double origin = r > 1 ? grid.low : 0.5 * (grid.low + grid.high);
      std::vector<int> idx(dim, 0);
      for (long long n = 0; n < static_cast<long long>(total); ++n) {
        Vector q(dim);
        for (int k = 0; k < dim; ++k) q[k] = origin + step * idx[k];
        out.push_back(std::move(q));
        // last coordinate varies fastest
        for (int k = dim - 1; k >= 0; --k) {
          if (++idx[k] < r) break;
          idx[k] = 0;
        }
      }
      break;
    }
  }
  return out;
}

std::vector<std::string> coordinate_names(const ExperimentConfig& cfg) {
  std::vector<std::string> names;
  if (is_funnel(cfg.model)) {
    names = {"mu", "lambda"};
    const bool tilde = cfg.model.funnel.parameterization == Parameterization::non_centered;
    for (int n = 1; n <= cfg.model.funnel.n_individuals; ++n) {
      names.push_back((tilde ? "theta_tilde_" : "theta_") + std::to_string(n));
    }
  } else {
    for (int i = 1; i <= cfg.dim(); ++i) names.push_back("x_" + std::to_string(i));
  }
  return names;
}

TargetDensity build_target(const ExperimentConfig& cfg) { return make_target(cfg.model); }

namespace {

MetricField base_metric(const std::vector<double>& diagonal, int dim) {
  return diagonal.empty() ? MetricField::identity(dim) : MetricField::diagonal(to_vector(diagonal));
}

}  // namespace

MetricField build_metric(const ExperimentConfig& cfg) {
  const int d = cfg.dim();
  switch (cfg.metric.kind) {
    case MetricSpec::Kind::identity:
      return MetricField::identity(d);
    case MetricSpec::Kind::diagonal:
      return MetricField::diagonal(to_vector(cfg.metric.values));
    case MetricSpec::Kind::equivalent:
      return equivalent_metric(base_metric(cfg.metric.base_diagonal, d),
                               make_reparam(cfg.metric.reparam, cfg.model.funnel, d));
  }
  throw ConfigError("metric.kind: unsupported");
}

Vector initial_point(const ExperimentConfig& cfg) {
  if (cfg.initial) return to_vector(*cfg.initial);
  if (is_funnel(cfg.model)) return Vector::Zero(cfg.dim());
  return cfg.model.mean;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Files written by one command. Unless commit() is reached, the destructor
// deletes them again.
class ArtifactSet {
 public:
  ArtifactSet(const ExperimentConfig& cfg, std::string command) : dir_(cfg.output_dir) {
    meta_["toolkit"] = "geomcmc";
    meta_["version"] = std::string(toolkit_version());
    meta_["command"] = std::move(command);
    meta_["config"] = to_json(cfg);
  }
  ArtifactSet(const ArtifactSet&) = delete;
  ArtifactSet& operator=(const ArtifactSet&) = delete;

  ~ArtifactSet() {
    if (committed_) return;
    for (const auto& p : written_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }

  const ojson& meta() const { return meta_; }

  std::ofstream open_csv(const std::string& name) {
    std::ofstream out = open(name);
    out << "# geomcmc " << toolkit_version() << ' ' << meta_["config"].dump() << '\n';
    return out;
  }

  void write_json(const std::string& name, ojson body) {
    ojson doc;
    doc["_meta"] = meta_;
    for (auto& [k, v] : body.items()) doc[k] = v;
    std::ofstream out = open(name);
    out << doc.dump(2) << '\n';
    finish(out, name);
  }

  void finish(std::ofstream& out, const std::string& name) {
    out.close();
    if (!out) throw Error("failed writing '" + (dir_ / name).string() + "'");
  }

  void commit() { committed_ = true; }

 private:
  std::ofstream open(const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error("cannot create output directory '" + dir_.string() + "': " + ec.message());
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    written_.push_back(path);
    spdlog::debug("writing {}", path.string());
    return out;
  }

  std::filesystem::path dir_;
  ojson meta_;
  std::vector<std::filesystem::path> written_;
  bool committed_ = false;
};

void write_chain_csv(ArtifactSet& out, const std::string& name, const ChainOutput& chain,
                     const std::vector<std::string>& coords) {
  std::ofstream f = out.open_csv(name);
  f << "iteration";
  for (const auto& c : coords) f << ',' << c;
  f << ",accepted,divergent,energy\n";
  for (std::size_t i = 0; i < chain.size(); ++i) {
    f << i;
    for (Eigen::Index j = 0; j < chain.draws.cols(); ++j) f << ',' << fmt_double(chain.draws(static_cast<Eigen::Index>(i), j));
    f << ',' << (chain.accepted[i] ? 1 : 0) << ',' << (chain.divergent[i] ? 1 : 0) << ',' << fmt_double(chain.energies[i])
      << '\n';
  }
  out.finish(f, name);
}

ojson trajectory_artifact(ArtifactSet& out, const ExperimentConfig& cfg) {
  if (cfg.sampler == SamplerKind::rwm) throw ConfigError("trajectory: sampler must be hmc, mala or ula");
  const TargetDensity target = build_target(cfg);
  const MetricField metric = build_metric(cfg);
  const Hamiltonian h(target, metric);
  const Vector q0 = initial_point(cfg);
  const int default_steps = cfg.sampler == SamplerKind::hmc ? cfg.sampler_cfg.n_leapfrog_steps : 1;
  const int steps = cfg.trajectory_steps.value_or(default_steps);
  Vector p0;
  if (cfg.trajectory_momentum) {
    p0 = to_vector(*cfg.trajectory_momentum);
  } else {
    Rng rng(cfg.sampler_cfg.seed);
    p0 = sample_cotangent_gaussian(metric, Point(q0), rng).components();
  }
  const Trajectory traj = integrate_trajectory(h, PhaseState{q0, p0}, steps, cfg.sampler_cfg);
  spdlog::info("trajectory: {} of {} steps, divergent={}", traj.states.size() - 1, steps, traj.divergent);

  const auto coords = coordinate_names(cfg);
  const std::string name = "trajectory.csv";
  std::ofstream f = out.open_csv(name);
  f << "# divergent=" << (traj.divergent ? "true" : "false") << '\n';
  f << "step";
  for (const auto& c : coords) f << ',' << c;
  for (const auto& c : coords) f << ",p_" << c;
  f << ",H\n";
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    f << i;
    for (double x : traj.states[i].position) f << ',' << fmt_double(x);
    for (double x : traj.states[i].momentum) f << ',' << fmt_double(x);
    f << ',' << fmt_double(traj.energies[i]) << '\n';
  }
  out.finish(f, name);

  ojson j;
  j["steps_requested"] = steps;
  j["steps_completed"] = traj.states.size() - 1;
  j["divergent"] = traj.divergent;
  j["energy_error"] = traj.energies.back() - traj.energies.front();
  return j;
}

ojson deviation_artifact(ArtifactSet& out, const ExperimentConfig& cfg) {
  const TargetDensity target = build_target(cfg);
  const MetricField metric = build_metric(cfg);
  const DeviationTensor delta = deviation(metric, target);
  const auto points = grid_points(cfg.grid, cfg.dim());
  const auto coords = coordinate_names(cfg);

  const std::string name = "deviation_grid.csv";
  std::ofstream f = out.open_csv(name);
  for (const auto& c : coords) f << c << ',';
  f << "abs_det_delta,max_abs_delta\n";
  double worst_det = 0.0;
  double worst_entry = 0.0;
  for (const Vector& q : points) {
    const Matrix d = delta.at(Point(q));
    const double det = std::abs(d.determinant());
    const double entry = d.cwiseAbs().maxCoeff();
    worst_det = std::max(worst_det, det);
    worst_entry = std::max(worst_entry, entry);
    for (double x : q) f << fmt_double(x) << ',';
    f << fmt_double(det) << ',' << fmt_double(entry) << '\n';
  }
  out.finish(f, name);
  spdlog::info("deviation grid: {} points, max |Delta_ij| = {:.3g}", points.size(), worst_entry);

  ojson j;
  j["n_points"] = points.size();
  j["abs_det_delta_max"] = worst_det;
  j["max_abs_delta_max"] = worst_entry;
  return j;
}

ojson summarize_chains(const std::vector<ChainOutput>& chains, const DeviationTensor& delta) {
  ojson per_chain = ojson::array();
  int divergent = 0;
  for (const auto& c : chains) {
    ojson s = to_json(summarize(c, &delta));
    s["seed"] = c.seed;
    per_chain.push_back(std::move(s));
    divergent += c.divergences;
  }
  ojson j;
  j["n_divergent"] = divergent;
  j["chains"] = std::move(per_chain);
  return j;
}

}  // namespace

nlohmann::ordered_json run_command(const ExperimentConfig& cfg, int jobs) {
  ArtifactSet out(cfg, "run");
  const TargetDensity target = build_target(cfg);
  const MetricField metric = build_metric(cfg);
  const Vector q0 = initial_point(cfg);
  spdlog::info("run: {} chains of {} {} draws on {}", cfg.n_chains, cfg.sampler_cfg.n_samples,
               to_string(cfg.sampler), target.name());
  const auto chains = run_chains(cfg.sampler, target, metric, q0, cfg.sampler_cfg, cfg.n_chains, jobs);

  ojson result;
  result["_meta"] = out.meta();
  ojson summary = summarize_chains(chains, deviation(metric, target));
  for (auto& [k, v] : summary.items()) result[k] = v;

  if (cfg.wants("chain")) {
    const auto coords = coordinate_names(cfg);
    for (std::size_t i = 0; i < chains.size(); ++i) write_chain_csv(out, "chain_" + std::to_string(i) + ".csv", chains[i], coords);
  }
  if (cfg.wants("trajectory")) result["trajectory"] = trajectory_artifact(out, cfg);
  if (cfg.wants("deviation_grid")) result["deviation_grid"] = deviation_artifact(out, cfg);
  if (cfg.wants("summary")) out.write_json("summary.json", summary);
  out.commit();
  return result;
}

nlohmann::ordered_json trajectory_command(const ExperimentConfig& cfg) {
  ArtifactSet out(cfg, "trajectory");
  ojson result;
  result["_meta"] = out.meta();
  const ojson body = trajectory_artifact(out, cfg);
  for (const auto& [k, v] : body.items()) result[k] = v;
  out.commit();
  return result;
}

nlohmann::ordered_json deviation_command(const ExperimentConfig& cfg) {
  ArtifactSet out(cfg, "deviation");
  ojson result;
  result["_meta"] = out.meta();
  const ojson body = deviation_artifact(out, cfg);
  for (const auto& [k, v] : body.items()) result[k] = v;
  out.commit();
  return result;
}

nlohmann::ordered_json compare_command(const ExperimentConfig& cfg, int jobs) {
  if (!is_funnel(cfg.model)) throw ConfigError("compare: model.name must be a funnel model");
  if (cfg.sampler == SamplerKind::rwm) throw ConfigError("compare: sampler must be hmc, mala or ula");
  ArtifactSet out(cfg, "compare");
  const int d = cfg.dim();
  FunnelSpec centered = cfg.model.funnel;
  centered.parameterization = Parameterization::centered;
  FunnelSpec noncentered = centered;
  noncentered.parameterization = Parameterization::non_centered;
  const Reparameterization psi = noncentering_reparam(centered);
  const std::vector<double> base_diag =
      cfg.metric.kind == MetricSpec::Kind::equivalent ? cfg.metric.base_diagonal : std::vector<double>{};
  const MetricField base = base_metric(base_diag, d);

  // Initial point in centered coordinates; the non-centered run starts at its image.
  Vector q0 = initial_point(cfg);
  if (cfg.model.funnel.parameterization == Parameterization::non_centered) q0 = psi.inverse(q0);

  struct Setup {
    std::string name;
    TargetDensity target;
    MetricField metric;
    Vector start;
  };
  const std::vector<Setup> setups{
      {"centered-identity", funnel_target(centered), MetricField::identity(d), q0},
      {"noncentered-identity", funnel_target(noncentered), base, psi.forward(q0)},
      {"centered-equivalent", funnel_target(centered), equivalent_metric(base, psi), q0},
  };

  ExperimentConfig noncentered_cfg = cfg;
  noncentered_cfg.model.funnel.parameterization = Parameterization::non_centered;
  ExperimentConfig centered_cfg = cfg;
  centered_cfg.model.funnel.parameterization = Parameterization::centered;
  const auto coords = coordinate_names(centered_cfg);
  const auto coords_tilde = coordinate_names(noncentered_cfg);
  ojson rows = ojson::array();
  for (const auto& s : setups) {
    spdlog::info("compare: running {}", s.name);
    const auto chains = run_chains(cfg.sampler, s.target, s.metric, s.start, cfg.sampler_cfg, cfg.n_chains, jobs);
    ojson row;
    row["setup"] = s.name;
    ojson summary = summarize_chains(chains, deviation(s.metric, s.target));
    std::vector<double> ess_mean(d, 0.0);
    double accept = 0.0;
    double delta_mean = 0.0;
    const double n = static_cast<double>(chains.size());
    for (const auto& c : summary["chains"]) {
      for (int k = 0; k < d && k < static_cast<int>(c["ess"].size()); ++k) {
        if (c["ess"][k].is_number()) ess_mean[k] += c["ess"][k].get<double>() / n;
      }
      if (c["accept_rate"].is_number()) accept += c["accept_rate"].get<double>() / n;
      if (c.contains("delta_mean") && c["delta_mean"].is_number()) delta_mean += c["delta_mean"].get<double>() / n;
    }
    row["ess_mean"] = ess_mean;
    row["accept_rate_mean"] = accept;
    row["delta_mean"] = delta_mean;
    for (auto& [k, v] : summary.items()) row[k] = v;
    rows.push_back(std::move(row));
    if (cfg.wants("chain")) {
      for (std::size_t i = 0; i < chains.size(); ++i) {
        write_chain_csv(out, s.name + "_chain_" + std::to_string(i) + ".csv", chains[i],
                        s.name == "noncentered-identity" ? coords_tilde : coords);
      }
    }
  }
  ojson body;
  body["coordinates"] = coords;
  body["setups"] = rows;
  out.write_json("comparison.json", body);
  out.commit();

  ojson result;
  result["_meta"] = out.meta();
  for (auto& [k, v] : body.items()) result[k] = v;
  return result;
}

}  // namespace geomcmc
