// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its measurements and elapsed time.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fracsrc/harness.hpp"
#include "fracsrc/verify.hpp"

#include "../oracle/dense_pd_oracle.hpp"

using namespace fracsrc;
namespace fs = std::filesystem;

namespace {

class Criterion {
 public:
  Criterion(int id, std::string name)
      : id_(id), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

  bool finish(bool ok, const std::string& detail) const {
    std::printf("[criterion %d] %s: %s (%.1f s)%s%s\n", id_, name_.c_str(),
                ok ? "PASS" : "FAIL", elapsed(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    return ok;
  }

 private:
  int id_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

int workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 4u));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

TEST_CASE("criterion 1: discrete adjoint identity") {
  Criterion crit(1, "adjoint identity defect < 1e-10");
  const auto report =
      verify::adjoint_identity_study(10, 10, {0.3, 0.5, 0.8}, 20, 20240801);
  const bool ok = report.max_rel_defect < 1e-10 && crit.elapsed() < 5.0;
  REQUIRE(crit.finish(ok, "max relative defect " + fmt(report.max_rel_defect) +
                              " over " + std::to_string(report.pairs) + " pairs"));
}

TEST_CASE("criterion 2: finite-difference gradient check") {
  Criterion crit(2, "transpose-mode gradient vs central differences < 1e-6");
  const auto report = verify::gradient_fd_study(
      20, 20, 0.3, GradientMode::kTranspose, 5, 1e-5, 20240802);
  const bool ok = report.max_rel_err < 1e-6 && crit.elapsed() < 30.0;
  REQUIRE(crit.finish(ok, "max relative error " + fmt(report.max_rel_err)));
}

TEST_CASE("criterion 3: manufactured-solution convergence orders") {
  Criterion crit(3, "temporal order >= 0.9, spatial order >= 1.8");
  std::string detail;
  bool ok = true;
  for (double alpha : {0.3, 0.8}) {
    const auto report =
        verify::mms_temporal_study(alpha, 400, {25, 50, 100, 200});
    detail += "temporal(alpha=" + fmt(alpha) + ")=" + fmt(report.min_order) + " ";
    ok = ok && report.min_order >= 0.9;
  }
  const auto spatial = verify::mms_spatial_study(0.3, {10, 20, 40, 80}, 2000);
  detail += "spatial=" + fmt(spatial.min_order);
  ok = ok && spatial.min_order >= 1.8 && crit.elapsed() < 300.0;
  REQUIRE(crit.finish(ok, detail));
}

TEST_CASE("criterion 4: forward-operator norm lower bounds") {
  Criterion crit(4, "norm estimate >= 0.95 x reference ratios");
  std::string detail;
  bool ok = true;
  const struct {
    double alpha, reference;
  } cases[] = {{0.3, 0.0501}, {0.8, 0.0451}};
  for (const auto& c : cases) {
    const auto report = verify::norm_study(c.alpha, 50, 50, 40);
    detail += "alpha=" + fmt(c.alpha) + ": estimate=" + fmt(report.estimate) +
              " rayleigh=" + fmt(report.rayleigh) + " ";
    ok = ok && report.estimate >= 0.95 * c.reference &&
         report.estimate >= report.rayleigh - 1e-9;
  }
  ok = ok && crit.elapsed() < 120.0;
  REQUIRE(crit.finish(ok, detail));
}

TEST_CASE("criterion 5: one-dimensional table reproduction bands") {
  Criterion crit(5, "18-cell table: median e_r and n in band, stops non-capped");
  const std::vector<Table1Cell> cells = table1_cells();
  const int seeds = 3;

  std::vector<ExperimentConfig> configs;
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (int s = 0; s < seeds; ++s) {
      ExperimentConfig cfg =
          example1_config(cells[i].alpha, cells[i].omega_variant,
                          cells[i].delta_rel, cells[i].gamma,
                          cell_seed(kDefaultSeed, i * seeds + s));
      cfg.norm_iters = 10;
      configs.push_back(cfg);
    }
  const std::vector<ExperimentResult> results =
      run_experiments(configs, workers());

  int er_in_band = 0, n_in_band = 0, stopped_cells = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<double> ers, ns;
    bool all_stopped = true;
    for (int s = 0; s < seeds; ++s) {
      const ResultRow& row = results[i * seeds + s].row;
      ers.push_back(row.e_r);
      ns.push_back(row.n);
      all_stopped = all_stopped && row.stop_reason != "max-iters";
    }
    const double med_er = median(ers);
    const double med_n = median(ns);
    const bool er_ok = med_er >= 0.4 * cells[i].paper.e_r &&
                       med_er <= 2.5 * cells[i].paper.e_r;
    const bool n_ok =
        med_n >= 0.2 * cells[i].paper.n && med_n <= 5.0 * cells[i].paper.n;
    er_in_band += er_ok;
    n_in_band += n_ok;
    stopped_cells += all_stopped;
    std::printf(
        "  cell %2zu (d=%.1f%% w=%c a=%.1f): median e_r=%s (paper %s, band ok=%d) "
        "median n=%s (paper %d, band ok=%d) stops ok=%d\n",
        i, 100 * cells[i].delta_rel, cells[i].omega_variant, cells[i].alpha,
        fmt(med_er).c_str(), fmt(cells[i].paper.e_r).c_str(), er_ok,
        fmt(med_n).c_str(), cells[i].paper.n, n_ok, all_stopped);
  }
  const bool ok = er_in_band == 18 && n_in_band == 18 && stopped_cells >= 15;
  REQUIRE(crit.finish(
      ok, "e_r in band " + std::to_string(er_in_band) + "/18, n in band " +
              std::to_string(n_in_band) + "/18, non-capped stops " +
              std::to_string(stopped_cells) + "/18"));
}

TEST_CASE("criterion 6: two-dimensional example reproduction") {
  Criterion crit(6, "median e_r <= 0.20 and delta within 15% of 6.3437e-5");
  std::vector<ExperimentConfig> configs;
  for (int s = 0; s < 3; ++s) {
    ExperimentConfig cfg = example2_config(cell_seed(kDefaultSeed ^ 2, s));
    cfg.norm_iters = 10;
    configs.push_back(cfg);
  }
  std::vector<ExperimentResult> results;
  std::string failure;
  try {
    results = run_experiments(configs, std::min(workers(), 3));
  } catch (const DivergenceError& e) {
    REQUIRE(crit.finish(false, std::string("divergence: ") + e.what()));
    return;
  }
  std::vector<double> ers;
  for (const auto& r : results) {
    ers.push_back(r.row.e_r);
    std::printf("  seed %llu: n=%d e_r=%s res=%s delta=%s stop=%s\n",
                static_cast<unsigned long long>(r.row.seed), r.row.n,
                fmt(r.row.e_r).c_str(), fmt(r.row.res).c_str(),
                fmt(r.row.delta).c_str(), r.row.stop_reason.c_str());
  }
  const double med_er = median(ers);
  const double delta = results.front().row.delta;
  const bool er_ok = med_er <= 0.20;
  const bool delta_ok =
      delta >= 0.85 * 6.3437e-5 && delta <= 1.15 * 6.3437e-5;
  const bool ok = er_ok && delta_ok && crit.elapsed() < 1200.0;
  REQUIRE(crit.finish(ok, "median e_r=" + fmt(med_er) + " (<=0.20: " +
                              (er_ok ? "yes" : "no") + "), delta=" + fmt(delta) +
                              " vs 6.3437e-5 (within 15%: " +
                              (delta_ok ? "yes" : "no") + ")"));
}

TEST_CASE("criterion 7: TV and projection invariants") {
  Criterion crit(7, "TV value, ball/box projections, sup characterization");
  bool ok = true;
  std::string detail;

  const Mesh mesh1 = build_uniform_mesh(1, 50);
  const FieldP1 f_star =
      build_true_source(mesh1, Box{{0.25, 0.0}, {0.75, 1.0}}, 0.5);
  const double tv = tv_value(mesh1, f_star);
  ok = ok && std::abs(tv - 1.0) <= 1e-12;
  detail += "tv(f*)=" + fmt(tv) + " ";

  const Mesh mesh2 = build_uniform_mesh(2, 6);
  bool proj_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    FieldP0Vec p(mesh2.n_elements(), 2), q(mesh2.n_elements(), 2);
    std::uint64_t i = 0;
    for (int e = 0; e < mesh2.n_elements(); ++e)
      for (int a = 0; a < 2; ++a) {
        p(e, a) = 3.0 * counter_uniform_sym(5000 + trial, i);
        q(e, a) = 3.0 * counter_uniform_sym(9000 + trial, i);
        ++i;
      }
    const FieldP0Vec pp = project_ball(p);
    const FieldP0Vec pq = project_ball(q);
    proj_ok = proj_ok && (project_ball(pp) - pp).cwiseAbs().maxCoeff() < 1e-15;
    for (int e = 0; e < mesh2.n_elements() && proj_ok; ++e)
      proj_ok = (pp.row(e) - pq.row(e)).norm() <=
                (p.row(e) - q.row(e)).norm() + 1e-12;

    FieldP1 f(9);
    for (int j = 0; j < 9; ++j) f(j) = 3.0 * counter_uniform_sym(7000 + trial, j);
    const FieldP1 once = project_box(f, BoxBounds{0.0, 1.0});
    proj_ok = proj_ok &&
              (project_box(once, BoxBounds{0.0, 1.0}) - once).cwiseAbs().maxCoeff() == 0.0;
  }
  ok = ok && proj_ok;
  detail += std::string("projections=") + (proj_ok ? "ok" : "bad") + " ";

  // sup over the dual ball never exceeds the TV value, and is attained
  const FieldP1 rough = verify::random_field(mesh2.n_nodes(), 4321);
  const double tv2 = tv_value(mesh2, rough);
  const FieldP0Vec df = grad(mesh2, rough);
  double best = -1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    FieldP0Vec q(mesh2.n_elements(), 2);
    std::uint64_t i = 0;
    for (int e = 0; e < mesh2.n_elements(); ++e) {
      for (int a = 0; a < 2; ++a) q(e, a) = counter_uniform_sym(777 + trial, i++);
      const double norm = q.row(e).norm();
      if (norm > 1.0) q.row(e) /= norm;
    }
    double pairing = 0.0;
    for (int e = 0; e < mesh2.n_elements(); ++e)
      pairing += mesh2.element_measure(e) * df.row(e).dot(q.row(e));
    best = std::max(best, pairing);
  }
  FieldP0Vec attaining = FieldP0Vec::Zero(mesh2.n_elements(), 2);
  for (int e = 0; e < mesh2.n_elements(); ++e) {
    const double norm = df.row(e).norm();
    if (norm > 0.0) attaining.row(e) = df.row(e) / norm;
  }
  double attained = 0.0;
  for (int e = 0; e < mesh2.n_elements(); ++e)
    attained += mesh2.element_measure(e) * df.row(e).dot(attaining.row(e));
  const bool sup_ok = best <= tv2 + 1e-9 && std::abs(attained - tv2) < 1e-12;
  ok = ok && sup_ok && crit.elapsed() < 10.0;
  detail += std::string("sup=") + (sup_ok ? "ok" : "bad");
  REQUIRE(crit.finish(ok, detail));
}

TEST_CASE("criterion 8: byte-identical reruns") {
  Criterion crit(8, "invert twice: identical tables and dumps (minus wall time)");
  const char* bin = std::getenv("FRACSRC_BIN");
  REQUIRE(bin != nullptr);
  const fs::path dir = fs::temp_directory_path() / "fracsrc_acceptance" / "det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "cell.cfg");
    cfg << "dim = 1\nn = 50\nk_tau = 50\nalpha = 0.3\nmu = cos2pit\n"
           "f_star_box = 0.25,0.75\nf_star_amplitude = 0.5\n"
           "omega = 0.04,0.5\ndelta_rel = 0.001\nseed = 20240805\n"
           "gamma = 1e-9\nsigma = 100\ntheta = 0.1\nnorm_iters = 10\n";
  }
  const auto run_once = [&](const std::string& tag) {
    const std::string cmd = std::string(bin) + " invert --config " +
                            (dir / "cell.cfg").string() + " --out " +
                            (dir / tag).string() + " >" +
                            (dir / (tag + ".log")).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WEXITSTATUS(status) == 0);
  };
  run_once("a");
  run_once("b");

  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  const auto strip_wall_time = [](const std::string& table) {
    std::istringstream in(table);
    std::string out, line;
    while (std::getline(in, line)) {
      const auto cut = line.rfind(',');
      out += line.substr(0, cut);
      out += "\n";
    }
    return out;
  };

  const bool tables_equal =
      strip_wall_time(slurp(dir / "a" / "result.csv")) ==
      strip_wall_time(slurp(dir / "b" / "result.csv"));
  const bool fields_equal =
      slurp(dir / "a" / "field.csv") == slurp(dir / "b" / "field.csv");
  const bool logs_equal =
      slurp(dir / "a" / "iterations.csv") == slurp(dir / "b" / "iterations.csv");
  const bool ok =
      tables_equal && fields_equal && logs_equal && crit.elapsed() < 300.0;
  REQUIRE(crit.finish(ok, std::string("tables=") + (tables_equal ? "eq" : "DIFF") +
                              " fields=" + (fields_equal ? "eq" : "DIFF") +
                              " iterations=" + (logs_equal ? "eq" : "DIFF")));
}

TEST_CASE("criterion 9: single-step against the dense reimplementation") {
  Criterion crit(9, "pd_step matches straight-line oracle to 1e-12");
  const int n = 10, K = 10;
  const double alpha = 0.5;
  const ObservationDomain omega{{Box{{0.2, 0.0}, {0.8, 1.0}}}};
  const Discretization disc = Discretization::build(
      build_uniform_mesh(1, n), make_time_grid(1.0, K), alpha);
  const Observation obs = Observation::build(disc.mesh, omega);
  const std::vector<double> mu = mu_samples_for("cos2pit", disc.grid);

  dense_oracle::Inputs in;
  in.n = n;
  in.K = K;
  in.alpha = alpha;
  in.omega_lo = 0.2;
  in.omega_hi = 0.8;
  in.mu = mu;
  in.u_delta.resize(K + 1, n + 1);
  ObservedData data;
  data.u_delta.resize(K + 1);
  for (int k = 0; k <= K; ++k) {
    const FieldP1 row = 0.08 * verify::random_field(n + 1, 4200 + k);
    data.u_delta[k] = row;
    in.u_delta.row(k) = row.transpose();
  }
  const FieldP1 f0 =
      FieldP1::Constant(n + 1, 0.25) + 0.15 * verify::random_field(n + 1, 99);
  FieldP0Vec p0(n, 1);
  for (int e = 0; e < n; ++e) p0(e, 0) = 0.6 * counter_uniform_sym(55, e);
  in.f0 = f0;
  in.p0 = p0.col(0);
  in.gamma = 2e-3;
  in.sigma = 7.0;
  in.theta = 0.04;
  in.f_lo = 0.0;
  in.f_hi = 1.0;

  PDConfig config;
  config.gamma = in.gamma;
  config.sigma = in.sigma;
  config.theta = in.theta;
  const PDProblem problem{disc, obs, mu, data, BoxBounds{in.f_lo, in.f_hi}};
  PDState state;
  state.f_n = f0;
  state.f_tilde = f0;
  state.p_n = p0;
  const StepOutcome ours = pd_step(problem, config, state);
  const dense_oracle::StepResult expect = dense_oracle::one_step(in);

  const double gap_f = (ours.state.f_tilde - expect.f_tilde).cwiseAbs().maxCoeff();
  const double gap_x = (ours.state.f_n - expect.f_next).cwiseAbs().maxCoeff();
  const double gap_p = (ours.state.p_n.col(0) - expect.p_next).cwiseAbs().maxCoeff();
  const double gap_res = std::abs(ours.res - expect.res);
  const bool ok = gap_f < 1e-12 && gap_x < 1e-12 && gap_p < 1e-12 &&
                  gap_res < 1e-12 && crit.elapsed() < 5.0;
  REQUIRE(crit.finish(ok, "max gaps: f_tilde=" + fmt(gap_f) + " f=" + fmt(gap_x) +
                              " p=" + fmt(gap_p) + " res=" + fmt(gap_res)));
}
