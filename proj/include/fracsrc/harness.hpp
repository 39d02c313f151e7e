#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fracsrc/pdsolver.hpp"

namespace fracsrc {

// ---------------------------------------------------------------------------
// Formatting (stable across runs: snprintf, shortest round-trip not required)
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline double parse_number(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has non-numeric value '" + s + "'");
  }
}

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  int dim = 1;
  int n = 50;
  int k_tau = 50;
  double t_final = 1.0;
  double alpha = 0.3;
  std::string mu_spec = "cos2pit";     // "cos2pit" | "one" | "samples:v0,v1,..."
  Box f_star_box{{0.25, 0.25}, {0.75, 0.75}};
  double f_star_amplitude = 0.5;
  std::vector<Box> omega_boxes;        // empty means the whole domain
  double delta_rel = 0.001;
  std::uint64_t seed = 1337;
  double gamma = 1e-9;
  double sigma = 100.0;
  double theta = 0.1;
  BoxBounds box{0.0, 1.0};
  double f0 = 0.25;
  double p0 = 0.5;
  int n_max = 3000;
  double rel_change_tol = 1e-4;
  double morozov_factor = 1.1;
  GradientMode gradient_mode = GradientMode::kTranspose;
  DualPoint dual_point = DualPoint::kTilde;
  int norm_iters = 25;       // power iterations for the forward-operator norm
  int grad_norm_iters = 200; // power iterations for ||grad||

  ObservationDomain omega() const {
    return omega_boxes.empty() ? ObservationDomain::whole()
                               : ObservationDomain{omega_boxes};
  }
  PDConfig pd() const {
    return PDConfig{gamma,          sigma,          theta,
                    n_max,          rel_change_tol, morozov_factor,
                    gradient_mode,  dual_point};
  }
};

inline std::string serialize_box(const Box& box, int dim) {
  std::string s;
  for (int a = 0; a < dim; ++a) s += format_double(box.lo[a]) + ",";
  for (int a = 0; a < dim; ++a)
    s += format_double(box.hi[a]) + (a + 1 < dim ? "," : "");
  return s;
}

inline Box parse_box(const std::string& text, int dim, const std::string& key) {
  const std::vector<std::string> parts = detail::split(text, ',');
  if (static_cast<int>(parts.size()) != 2 * dim)
    throw ConfigError("config key '" + key + "' needs " + std::to_string(2 * dim) +
                      " coordinates, got '" + text + "'");
  Box box;
  for (int a = 0; a < dim; ++a)
    box.lo[a] = detail::parse_number(detail::trim(parts[a]), key);
  for (int a = 0; a < dim; ++a)
    box.hi[a] = detail::parse_number(detail::trim(parts[dim + a]), key);
  return box;
}

/// Boxes joined by '|', coordinates by ':' (keeps table cells comma-free).
inline std::string describe_omega(const std::vector<Box>& boxes, int dim) {
  if (boxes.empty()) return "full";
  std::string s;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i) s += "|";
    for (int a = 0; a < dim; ++a) s += format_double(boxes[i].lo[a]) + ":";
    for (int a = 0; a < dim; ++a)
      s += format_double(boxes[i].hi[a]) + (a + 1 < dim ? ":" : "");
  }
  return s;
}

inline std::string gradient_mode_name(GradientMode m) {
  return m == GradientMode::kTranspose ? "transpose" : "paper";
}
inline std::string dual_point_name(DualPoint p) {
  return p == DualPoint::kTilde ? "tilde" : "extrapolated";
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "dim = " << cfg.dim << "\n";
  out << "n = " << cfg.n << "\n";
  out << "k_tau = " << cfg.k_tau << "\n";
  out << "t_final = " << format_double(cfg.t_final) << "\n";
  out << "alpha = " << format_double(cfg.alpha) << "\n";
  out << "mu = " << cfg.mu_spec << "\n";
  out << "f_star_box = " << serialize_box(cfg.f_star_box, cfg.dim) << "\n";
  out << "f_star_amplitude = " << format_double(cfg.f_star_amplitude) << "\n";
  if (!cfg.omega_boxes.empty()) {
    out << "omega = ";
    for (std::size_t i = 0; i < cfg.omega_boxes.size(); ++i)
      out << (i ? "; " : "") << serialize_box(cfg.omega_boxes[i], cfg.dim);
    out << "\n";
  }
  out << "delta_rel = " << format_double(cfg.delta_rel) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "gamma = " << format_double(cfg.gamma) << "\n";
  out << "sigma = " << format_double(cfg.sigma) << "\n";
  out << "theta = " << format_double(cfg.theta) << "\n";
  out << "f_lower = " << format_double(cfg.box.lower) << "\n";
  out << "f_upper = " << format_double(cfg.box.upper) << "\n";
  out << "f0 = " << format_double(cfg.f0) << "\n";
  out << "p0 = " << format_double(cfg.p0) << "\n";
  out << "n_max = " << cfg.n_max << "\n";
  out << "rel_change_tol = " << format_double(cfg.rel_change_tol) << "\n";
  out << "morozov_factor = " << format_double(cfg.morozov_factor) << "\n";
  out << "gradient_mode = " << gradient_mode_name(cfg.gradient_mode) << "\n";
  out << "dual_point = " << dual_point_name(cfg.dual_point) << "\n";
  out << "norm_iters = " << cfg.norm_iters << "\n";
  out << "grad_norm_iters = " << cfg.grad_norm_iters << "\n";
  return out.str();
}

inline std::string config_digest(const ExperimentConfig& cfg) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(serialize_config(cfg))));
  return buf;
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not 'key = value': '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (kv.count(key))
      throw ConfigError("config key '" + key + "' appears twice");
    kv[key] = value;
  }

  const auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const auto num = [&](const char* key, double dflt) {
    const auto v = take(key);
    return v ? detail::parse_number(*v, key) : dflt;
  };
  const auto integer = [&](const char* key, int dflt) {
    const double v = num(key, dflt);
    if (v != std::floor(v))
      throw ConfigError(std::string("config key '") + key + "' must be an integer");
    return static_cast<int>(v);
  };

  cfg.dim = integer("dim", cfg.dim);
  if (cfg.dim != 1 && cfg.dim != 2) throw ConfigError("dim must be 1 or 2");
  cfg.n = integer("n", cfg.n);
  cfg.k_tau = integer("k_tau", cfg.k_tau);
  cfg.t_final = num("t_final", cfg.t_final);
  cfg.alpha = num("alpha", cfg.alpha);
  if (auto v = take("mu")) {
    if (*v != "cos2pit" && *v != "one" && v->rfind("samples:", 0) != 0)
      throw ConfigError("mu must be cos2pit, one, or samples:v0,v1,...");
    cfg.mu_spec = *v;
  }
  if (auto v = take("f_star_box")) cfg.f_star_box = parse_box(*v, cfg.dim, "f_star_box");
  cfg.f_star_amplitude = num("f_star_amplitude", cfg.f_star_amplitude);
  if (auto v = take("omega")) {
    cfg.omega_boxes.clear();
    const std::string value = detail::trim(*v);
    if (value == "none") {
      cfg.omega_boxes.push_back(Box{{2.0, 2.0}, {2.0, 2.0}});  // empty: outside domain
    } else if (value != "full") {
      for (const std::string& part : detail::split(value, ';'))
        cfg.omega_boxes.push_back(parse_box(detail::trim(part), cfg.dim, "omega"));
    }
  }
  cfg.delta_rel = num("delta_rel", cfg.delta_rel);
  if (cfg.delta_rel < 0.0) throw ConfigError("delta_rel must be nonnegative");
  if (auto v = take("seed")) {
    try {
      cfg.seed = std::stoull(*v);
    } catch (const std::exception&) {
      throw ConfigError("config key 'seed' has non-integer value '" + *v + "'");
    }
  }
  cfg.gamma = num("gamma", cfg.gamma);
  cfg.sigma = num("sigma", cfg.sigma);
  cfg.theta = num("theta", cfg.theta);
  cfg.box.lower = num("f_lower", cfg.box.lower);
  cfg.box.upper = num("f_upper", cfg.box.upper);
  cfg.f0 = num("f0", cfg.f0);
  cfg.p0 = num("p0", cfg.p0);
  cfg.n_max = integer("n_max", cfg.n_max);
  cfg.rel_change_tol = num("rel_change_tol", cfg.rel_change_tol);
  cfg.morozov_factor = num("morozov_factor", cfg.morozov_factor);
  if (auto v = take("gradient_mode")) {
    if (*v == "transpose") cfg.gradient_mode = GradientMode::kTranspose;
    else if (*v == "paper") cfg.gradient_mode = GradientMode::kPaper;
    else throw ConfigError("gradient_mode must be 'transpose' or 'paper'");
  }
  if (auto v = take("dual_point")) {
    if (*v == "tilde") cfg.dual_point = DualPoint::kTilde;
    else if (*v == "extrapolated") cfg.dual_point = DualPoint::kExtrapolated;
    else throw ConfigError("dual_point must be 'tilde' or 'extrapolated'");
  }
  cfg.norm_iters = integer("norm_iters", cfg.norm_iters);
  cfg.grad_norm_iters = integer("grad_norm_iters", cfg.grad_norm_iters);

  if (!kv.empty())
    throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// mu(t_k) samples for the named temporal profiles.
inline std::vector<double> mu_samples_for(const std::string& spec,
                                          const TimeGrid& grid) {
  std::vector<double> mu(grid.K + 1);
  if (spec == "cos2pit") {
    for (int k = 0; k <= grid.K; ++k) mu[k] = std::cos(2.0 * M_PI * grid.t(k));
  } else if (spec == "one") {
    std::fill(mu.begin(), mu.end(), 1.0);
  } else if (spec.rfind("samples:", 0) == 0) {
    const std::vector<std::string> parts =
        detail::split(spec.substr(8), ',');
    if (static_cast<int>(parts.size()) != grid.K + 1)
      throw ConfigError("mu sample list needs K_tau + 1 values");
    for (int k = 0; k <= grid.K; ++k)
      mu[k] = detail::parse_number(detail::trim(parts[k]), "mu");
  } else {
    throw ConfigError("unknown mu spec '" + spec + "'");
  }
  return mu;
}

// ---------------------------------------------------------------------------
// True source, noise, metrics
// ---------------------------------------------------------------------------

/// Nodal interpolant of amplitude * indicator(box); nodes on the closed box
/// (boundary included) receive the amplitude.
inline FieldP1 build_true_source(const Mesh& mesh, const Box& box,
                                 double amplitude) {
  for (int a = 0; a < mesh.dim; ++a)
    if (box.lo[a] < -1e-12 || box.hi[a] > 1.0 + 1e-12 || box.lo[a] > box.hi[a])
      throw AlignmentError("true-source box exceeds the unit domain");
  FieldP1 f = FieldP1::Zero(mesh.n_nodes());
  for (int i = 0; i < mesh.n_nodes(); ++i)
    if (box.contains(mesh.nodes.row(i))) f(i) = amplitude;
  return f;
}

/// Multiplicative uniform noise on the omega nodes at levels k >= 1:
/// u^delta = u + delta_rel (r / ||r||) u pointwise, with r ~ U[-1, 1) drawn
/// from the counter stream in (level-major, node-ascending) order, and
/// delta = delta_rel ||u||_{L2(omega x (0,T))}.
inline ObservedData generate_noisy_data(const Discretization& disc,
                                        const Observation& obs,
                                        const Trajectory& exact,
                                        double delta_rel, std::uint64_t seed) {
  if (delta_rel < 0.0)
    throw InvalidArgument("generate_noisy_data: delta_rel must be >= 0");
  const int K = disc.grid.K;
  const int n = disc.mesh.n_nodes();

  double exact_sq = 0.0;
  for (int k = 0; k <= K; ++k)
    exact_sq += disc.grid.c(k) * exact.states[k].dot(obs.mass_omega * exact.states[k]);
  const double exact_norm = std::sqrt(std::max(0.0, disc.grid.tau * exact_sq));

  ObservedData data;
  data.delta = delta_rel * exact_norm;
  data.u_delta = exact.states;
  if (delta_rel == 0.0 || obs.nodes.empty()) return data;

  std::uint64_t salt = 0;
  while (true) {
    RngStream rng = RngStream(seed).fork(salt);
    std::vector<FieldP1> r(K + 1, FieldP1::Zero(n));
    for (int k = 1; k <= K; ++k)
      for (int node : obs.nodes) r[k](node) = rng.next_sym();
    double r_sq = 0.0;
    for (int k = 0; k <= K; ++k)
      r_sq += disc.grid.c(k) * r[k].dot(obs.mass_omega * r[k]);
    const double r_norm = std::sqrt(std::max(0.0, disc.grid.tau * r_sq));
    if (r_norm == 0.0) {
      ++salt;  // measure-zero draw; resample
      continue;
    }
    const double scale = delta_rel / r_norm;
    for (int k = 1; k <= K; ++k)
      data.u_delta[k] =
          exact.states[k].array() * (1.0 + scale * r[k].array());
    return data;
  }
}

/// e_r = ||f - f_star|| / ||f_star|| in the consistent-mass L2 norm.
inline double error_metric(const SparseSpd& mass, const FieldP1& f,
                           const FieldP1& f_star) {
  const double denom = l2_norm(mass, f_star);
  if (denom == 0.0)
    throw UndefinedRatioError("error_metric: reference field has zero norm");
  return l2_norm(mass, f - f_star) / denom;
}

// ---------------------------------------------------------------------------
// Results and serialization
// ---------------------------------------------------------------------------

struct PaperReference {
  int n = 0;
  double e_r = 0.0;
  double res = 0.0;
};

struct ResultRow {
  std::string digest;
  double alpha = 0.0;
  std::string omega;
  double gamma = 0.0;
  double delta_rel = 0.0;
  int n = 0;
  double e_r = 0.0;
  double res = 0.0;
  double delta = 0.0;
  std::string stop_reason;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
  std::optional<PaperReference> paper;
};

struct ExperimentResult {
  ExperimentConfig config;
  ResultRow row;
  std::vector<IterationRecord> log;
  StepCertificate certificate;
  Mesh mesh;
  FieldP1 f_star;
  FieldP1 f_reconstructed;
  StopReason stop_reason = StopReason::kMaxIters;
};

inline void validate_experiment_config(const ExperimentConfig& cfg) {
  validate_box(cfg.box);
  if (cfg.delta_rel < 0.0) throw ConfigError("delta_rel must be nonnegative");
  if (!(cfg.sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(cfg.theta > 0.0)) throw ConfigError("theta must be positive");
  if (cfg.gamma < 0.0) throw ConfigError("gamma must be nonnegative");
  if (cfg.morozov_factor < 1.0) throw ConfigError("morozov_factor must be >= 1");
  if (cfg.rel_change_tol < 0.0)
    throw ConfigError("rel_change_tol must be nonnegative");
  if (cfg.n_max < 0) throw ConfigError("n_max must be nonnegative");
  if (cfg.norm_iters < 1 || cfg.grad_norm_iters < 1)
    throw ConfigError("norm estimation needs at least one iteration");
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto t_begin = std::chrono::steady_clock::now();
  validate_experiment_config(cfg);

  ExperimentResult result;
  result.config = cfg;
  result.mesh = build_uniform_mesh(cfg.dim, cfg.n);
  const TimeGrid grid = make_time_grid(cfg.t_final, cfg.k_tau);
  const Discretization disc = Discretization::build(result.mesh, grid, cfg.alpha);
  const Observation obs = Observation::build(disc.mesh, cfg.omega());
  const std::vector<double> mu = mu_samples_for(cfg.mu_spec, grid);

  result.f_star = build_true_source(disc.mesh, cfg.f_star_box, cfg.f_star_amplitude);
  const Trajectory exact = forward_solve(disc, SourceSeparable{mu, result.f_star});
  const ObservedData data =
      generate_noisy_data(disc, obs, exact, cfg.delta_rel, cfg.seed);

  const double c_estimate =
      estimate_forward_norm(disc, obs, mu, cfg.norm_iters);
  const double grad_norm = estimate_grad_norm(disc.mesh, disc.mass,
                                              disc.stiffness, cfg.grad_norm_iters);
  result.certificate = check_step_condition(cfg.pd(), c_estimate, grad_norm);

  const FieldP1 f0 = FieldP1::Constant(disc.mesh.n_nodes(), cfg.f0);
  const FieldP0Vec p0 =
      FieldP0Vec::Constant(disc.mesh.n_elements(), disc.mesh.dim, cfg.p0);

  const PDProblem problem{disc, obs, mu, data, cfg.box};
  PDRun run = pd_run(problem, cfg.pd(), f0, p0, &result.f_star);

  result.log = std::move(run.log);
  result.stop_reason = run.state.stop_reason;
  result.f_reconstructed = run.state.f_tilde;

  result.row.digest = config_digest(cfg);
  result.row.alpha = cfg.alpha;
  result.row.omega = describe_omega(cfg.omega_boxes, cfg.dim);
  result.row.gamma = cfg.gamma;
  result.row.delta_rel = cfg.delta_rel;
  result.row.n = run.state.n;
  result.row.e_r = error_metric(disc.mass, result.f_reconstructed, result.f_star);
  result.row.res = result.log.empty() ? 0.0 : result.log.back().res;
  result.row.delta = data.delta;
  result.row.stop_reason = stop_reason_name(run.state.stop_reason);
  result.row.seed = cfg.seed;
  result.row.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin)
          .count();
  return result;
}

// ---------------------------------------------------------------------------
// DSV emission
// ---------------------------------------------------------------------------

namespace detail {
inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}
}  // namespace detail

inline void emit_table(const std::vector<ResultRow>& rows,
                       const std::string& path) {
  bool with_paper = false;
  for (const auto& row : rows) with_paper = with_paper || row.paper.has_value();
  std::ofstream out = detail::open_out(path);
  out << "alpha,omega,gamma,delta_rel,n,e_r,res,stop_reason,seed";
  if (with_paper) out << ",paper_n,paper_e_r,paper_res";
  out << ",wall_time\n";
  for (const auto& row : rows) {
    out << format_double(row.alpha) << "," << row.omega << ","
        << format_double(row.gamma) << "," << format_double(row.delta_rel) << ","
        << row.n << "," << format_double(row.e_r) << "," << format_double(row.res)
        << "," << row.stop_reason << "," << row.seed;
    if (with_paper) {
      if (row.paper)
        out << "," << row.paper->n << "," << format_double(row.paper->e_r) << ","
            << format_double(row.paper->res);
      else
        out << ",,,";
    }
    out << "," << format_double(row.wall_time) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<ResultRow> parse_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open table: " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty table: " + path);
  const std::vector<std::string> cols = detail::split(header, ',');
  const bool with_paper =
      std::find(cols.begin(), cols.end(), "paper_n") != cols.end();
  std::vector<ResultRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> parts = detail::split(line, ',');
    if (parts.size() != cols.size())
      throw IoError("malformed table row in " + path + ": '" + line + "'");
    ResultRow row;
    int i = 0;
    row.alpha = std::stod(parts[i++]);
    row.omega = parts[i++];
    row.gamma = std::stod(parts[i++]);
    row.delta_rel = std::stod(parts[i++]);
    row.n = std::stoi(parts[i++]);
    row.e_r = std::stod(parts[i++]);
    row.res = std::stod(parts[i++]);
    row.stop_reason = parts[i++];
    row.seed = std::stoull(parts[i++]);
    if (with_paper) {
      if (!parts[i].empty()) {
        PaperReference ref;
        ref.n = std::stoi(parts[i]);
        ref.e_r = std::stod(parts[i + 1]);
        ref.res = std::stod(parts[i + 2]);
        row.paper = ref;
      }
      i += 3;
    }
    row.wall_time = std::stod(parts[i++]);
    rows.push_back(row);
  }
  return rows;
}

inline void emit_fields(const Mesh& mesh, const FieldP1& f_n,
                        const FieldP1& f_star, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << (mesh.dim == 1 ? "x" : "x,y") << ",f_n,f_star,abs_error\n";
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    for (int a = 0; a < mesh.dim; ++a) out << format_double(mesh.nodes(i, a)) << ",";
    out << format_double(f_n(i)) << "," << format_double(f_star(i)) << ","
        << format_double(std::abs(f_n(i) - f_star(i))) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void emit_iterations(const std::vector<IterationRecord>& log,
                            const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << "n,res,e_r,tv,rel_change\n";
  for (const auto& rec : log) {
    out << rec.n << "," << format_double(rec.res) << ",";
    if (rec.e_r) out << format_double(*rec.e_r);
    out << "," << format_double(rec.tv) << "," << format_double(rec.rel_change)
        << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void emit_summary(const ExperimentResult& result, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << "digest: " << result.row.digest << "\n";
  out << "alpha: " << format_double(result.row.alpha) << "\n";
  out << "omega: " << result.row.omega << "\n";
  out << "gamma: " << format_double(result.row.gamma) << "\n";
  out << "delta_rel: " << format_double(result.row.delta_rel) << "\n";
  out << "delta: " << format_double(result.row.delta) << "\n";
  out << "seed: " << result.row.seed << "\n";
  out << "n: " << result.row.n << "\n";
  out << "e_r: " << format_double(result.row.e_r) << "\n";
  out << "res: " << format_double(result.row.res) << "\n";
  out << "stop_reason: " << result.row.stop_reason << "\n";
  out << "c_estimate: " << format_double(result.certificate.c_estimate) << "\n";
  out << "grad_norm_estimate: "
      << format_double(result.certificate.grad_norm_estimate) << "\n";
  out << "step_condition_lhs: " << format_double(result.certificate.lhs) << "\n";
  out << "step_condition_rhs: " << format_double(result.certificate.rhs) << "\n";
  out << "step_condition_satisfied: "
      << (result.certificate.satisfied ? "yes" : "no") << "\n";
  out << "wall_time_seconds: " << format_double(result.row.wall_time) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Paper presets
// ---------------------------------------------------------------------------

inline std::vector<Box> omega_variant_boxes(char variant) {
  switch (variant) {
    case 'a': return {Box{{2.0 / 50, 0.0}, {25.0 / 50, 1.0}}};
    case 'b': return {Box{{28.0 / 50, 0.0}, {48.0 / 50, 1.0}}};
    case 'c':
      return {Box{{2.0 / 50, 0.0}, {25.0 / 50, 1.0}},
              Box{{28.0 / 50, 0.0}, {48.0 / 50, 1.0}}};
    default: return {};
  }
}

/// One-dimensional reconstruction setup of the paper's first example.
inline ExperimentConfig example1_config(double alpha, char omega_variant,
                                        double delta_rel, double gamma,
                                        std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.dim = 1;
  cfg.n = 50;
  cfg.k_tau = 50;
  cfg.t_final = 1.0;
  cfg.alpha = alpha;
  cfg.mu_spec = "cos2pit";
  cfg.f_star_box = Box{{0.25, 0.0}, {0.75, 1.0}};
  cfg.f_star_amplitude = 0.5;
  cfg.omega_boxes = omega_variant_boxes(omega_variant);
  cfg.delta_rel = delta_rel;
  cfg.seed = seed;
  cfg.gamma = gamma;
  cfg.sigma = 100.0;
  cfg.theta = 0.1;
  cfg.box = BoxBounds{0.0, 1.0};
  cfg.f0 = 0.25;
  cfg.p0 = 0.5;
  return cfg;
}

/// Two-dimensional setup of the paper's second example. The observation box
/// is snapped to the n = 40 grid (0.075..0.75 per axis).
inline ExperimentConfig example2_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.dim = 2;
  cfg.n = 40;
  cfg.k_tau = 50;
  cfg.t_final = 1.0;
  cfg.alpha = 0.6;
  cfg.mu_spec = "one";
  cfg.f_star_box = Box{{0.25, 0.25}, {0.75, 0.75}};
  cfg.f_star_amplitude = 0.25;
  cfg.omega_boxes = {Box{{3.0 / 40, 3.0 / 40}, {30.0 / 40, 30.0 / 40}}};
  cfg.delta_rel = 0.005;
  cfg.seed = seed;
  cfg.gamma = 1e-9;
  cfg.sigma = 200.0;
  cfg.theta = 0.01;
  cfg.box = BoxBounds{0.0, 1.0};
  cfg.f0 = 0.1;
  cfg.p0 = 0.5;
  return cfg;
}

struct Table1Cell {
  double delta_rel;
  char omega_variant;
  double alpha;
  double gamma;
  PaperReference paper;
};

/// The 18 cells of the paper's reconstruction table, in row order.
inline std::vector<Table1Cell> table1_cells() {
  return {
      {0.001, 'a', 0.3, 1e-9, {862, 0.0382, 1.2067e-5}},
      {0.001, 'a', 0.8, 1e-9, {843, 0.0441, 1.0367e-5}},
      {0.001, 'b', 0.3, 1e-9, {668, 0.0489, 1.3398e-5}},
      {0.001, 'b', 0.8, 1e-9, {712, 0.0388, 1.1265e-5}},
      {0.001, 'c', 0.3, 1e-9, {565, 0.0567, 1.9454e-5}},
      {0.001, 'c', 0.8, 1e-9, {572, 0.0503, 1.7408e-5}},
      {0.005, 'a', 0.3, 1e-9, {372, 0.0819, 5.7258e-5}},
      {0.005, 'a', 0.8, 1e-9, {320, 0.0914, 5.7216e-5}},
      {0.005, 'b', 0.3, 1e-9, {312, 0.0923, 6.0147e-5}},
      {0.005, 'b', 0.8, 1e-9, {286, 0.1023, 5.3218e-5}},
      {0.005, 'c', 0.3, 1e-9, {322, 0.0823, 9.2306e-5}},
      {0.005, 'c', 0.8, 1e-9, {298, 0.1054, 8.4235e-5}},
      {0.01, 'a', 0.3, 1e-8, {257, 0.1119, 1.0121e-4}},
      {0.01, 'a', 0.8, 1e-8, {241, 0.1391, 1.0121e-4}},
      {0.01, 'b', 0.3, 1e-8, {195, 0.1343, 1.2017e-4}},
      {0.01, 'b', 0.8, 1e-8, {219, 0.1322, 1.0912e-4}},
      {0.01, 'c', 0.3, 1e-8, {295, 0.1298, 1.9043e-4}},
      {0.01, 'c', 0.8, 1e-8, {281, 0.1308, 1.6824e-4}},
  };
}

inline constexpr std::uint64_t kDefaultSeed = 1337;

/// Seed for cell `index` of a multi-cell run with base seed `base`.
inline std::uint64_t cell_seed(std::uint64_t base, std::uint64_t index) {
  return counter_bits(base, index);
}

/// Runs independent experiment cells on a worker pool; results are returned
/// in config order regardless of completion order. Exceptions from workers
/// are rethrown on the calling thread.
inline std::vector<ExperimentResult> run_experiments(
    const std::vector<ExperimentConfig>& configs, int jobs) {
  const int count = static_cast<int>(configs.size());
  std::vector<std::optional<ExperimentResult>> slots(count);
  if (jobs < 1) jobs = 1;
  jobs = std::min(jobs, std::max(1, count));

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  const auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        slots[i] = run_experiment(configs[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::vector<ExperimentResult> results;
  results.reserve(count);
  for (auto& slot : slots) results.push_back(std::move(*slot));
  return results;
}

}  // namespace fracsrc
