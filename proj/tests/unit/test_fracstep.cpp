#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fracsrc/fracstep.hpp"
#include "fracsrc/rng.hpp"

using namespace fracsrc;

TEST_CASE("gamma_fn agrees with high-precision references") {
  // mpmath (50 digits), arguments on the range the scheme uses
  const struct {
    double x, value;
  } refs[] = {
      {1.1, 0.95135076986687318363}, {1.2, 0.91816874239976061064},
      {1.3, 0.89747069630627718849}, {1.4, 0.88726381750307528922},
      {1.5, 0.88622692545275801365}, {1.6, 0.89351534928769026144},
      {1.7, 0.90863873285329044998}, {1.8, 0.93138377098024269891},
      {1.9, 0.96176583190738741941}, {2.2, 1.1018024908797127328},
      {2.5, 1.3293403881791370205}, {2.7, 1.544685845850593765},
  };
  for (const auto& ref : refs)
    CHECK(std::abs(gamma_fn(ref.x) - ref.value) / ref.value < 1e-13);

  // independent libm oracle across the working range
  for (double x = 0.6; x < 8.0; x += 0.1)
    CHECK(std::abs(gamma_fn(x) - std::tgamma(x)) / std::tgamma(x) < 1e-13);

  CHECK_THROWS_AS(gamma_fn(0.2), InvalidArgument);
}

TEST_CASE("L1 weights start at one and telescope") {
  for (double alpha : {0.05, 0.3, 0.5, 0.77, 0.99}) {
    const std::vector<double> b = l1_weights(alpha, 8);
    CHECK(b[0] == 1.0);
  }
  CHECK(l1_weights(0.5, 2)[1] == Catch::Approx(std::sqrt(2.0) - 1.0).margin(1e-15));
  CHECK_THROWS_AS(l1_weights(0.0, 4), InvalidArgument);
  CHECK_THROWS_AS(l1_weights(1.0, 4), InvalidArgument);
  CHECK_THROWS_AS(l1_weights(-0.2, 4), InvalidArgument);

  // direct-summation oracle for the telescoping identity
  const std::vector<double> b = l1_weights(0.3, 1000);
  for (int k : {10, 100, 999}) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += b[j] - b[j + 1];
    CHECK(std::abs(sum - (1.0 - b[k])) < 1e-12);
  }

  // monotonicity and positivity across random orders
  RngStream rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const double alpha = 0.01 + 0.98 * rng.next01();
    const std::vector<double> w = l1_weights(alpha, 64);
    for (std::size_t j = 0; j < w.size(); ++j) {
      CHECK(w[j] > 0.0);
      if (j > 0) CHECK(w[j] < w[j - 1]);
    }
    for (int k : {5, 31, 63}) {
      double sum = 0.0;
      for (int j = 0; j < k; ++j) sum += w[j] - w[j + 1];
      CHECK(std::abs(sum - (1.0 - w[k])) < 1e-12);
    }
  }
}

TEST_CASE("eta coefficient") {
  CHECK(eta_coeff(0.5, 0.02) ==
        Catch::Approx(std::sqrt(M_PI) / 2.0 * std::sqrt(0.02)).epsilon(1e-13));
  // alpha -> 1 limit: Gamma(1) tau^1
  CHECK(eta_coeff(1.0 - 1e-9, 0.02) == Catch::Approx(0.02).epsilon(1e-6));
  // frozen mpmath value for Gamma(1.7) * 0.02^0.3
  CHECK(eta_coeff(0.3, 0.02) ==
        Catch::Approx(0.28099606900971586749).epsilon(1e-12));
  CHECK_THROWS_AS(eta_coeff(1.2, 0.1), InvalidArgument);
  CHECK_THROWS_AS(eta_coeff(0.5, 0.0), InvalidArgument);
}

TEST_CASE("time grid trapezoid weights integrate constants exactly") {
  for (int K : {1, 2, 17, 400}) {
    const TimeGrid grid = make_time_grid(2.5, K);
    double acc = 0.0;
    for (int k = 0; k <= K; ++k) acc += grid.c(k);
    CHECK(std::abs(grid.tau * acc - grid.T) < 1e-12);
  }
  CHECK_THROWS_AS(make_time_grid(0.0, 4), InvalidArgument);
  CHECK_THROWS_AS(make_time_grid(1.0, 0), InvalidArgument);
}

TEST_CASE("discrete Caputo derivative on reference histories") {
  const TimeGrid grid = make_time_grid(1.0, 10);
  const L1Scheme scheme = make_l1_scheme(0.4, grid);

  // constant history -> zero
  std::vector<FieldP1> constant(5, FieldP1::Constant(3, 1.23));
  CHECK(caputo_apply(scheme, constant).cwiseAbs().maxCoeff() < 1e-14);

  // u(t) = t, one step: exact Caputo of t at t_1
  std::vector<FieldP1> linear = {FieldP1::Zero(3),
                                 FieldP1::Constant(3, grid.tau)};
  const double expected =
      std::pow(grid.tau, 1.0 - 0.4) / std::tgamma(2.0 - 0.4);
  CHECK(caputo_apply(scheme, linear)(0) == Catch::Approx(expected).epsilon(1e-14));

  CHECK_THROWS_AS(caputo_apply(scheme, {FieldP1::Zero(3)}), InvalidArgument);
}

TEST_CASE("discrete Caputo of t^2 converges at first order or better") {
  const double alpha = 0.5;
  const auto error_at_one = [&](int K) {
    const TimeGrid grid = make_time_grid(1.0, K);
    const L1Scheme scheme = make_l1_scheme(alpha, grid);
    std::vector<FieldP1> history;
    for (int k = 0; k <= K; ++k)
      history.push_back(FieldP1::Constant(1, grid.t(k) * grid.t(k)));
    const double exact = 2.0 / std::tgamma(2.5);  // 2 t^{1.5}/Gamma(2.5) at t=1
    return std::abs(caputo_apply(scheme, history)(0) - exact);
  };
  const double e16 = error_at_one(16);
  const double e32 = error_at_one(32);
  CHECK(e32 < e16);
  CHECK(std::log2(e16 / e32) >= 0.9);
}

TEST_CASE("discrete Caputo action is linear in the history") {
  const TimeGrid grid = make_time_grid(1.0, 6);
  const L1Scheme scheme = make_l1_scheme(0.7, grid);
  RngStream rng(9);
  std::vector<FieldP1> u, v, combo;
  const double a = 1.7, b = -0.4;
  for (int k = 0; k <= 6; ++k) {
    FieldP1 fu(4), fv(4);
    for (int i = 0; i < 4; ++i) {
      fu(i) = rng.next_sym();
      fv(i) = rng.next_sym();
    }
    u.push_back(fu);
    v.push_back(fv);
    combo.push_back(a * fu + b * fv);
  }
  const FieldP1 lhs = caputo_apply(scheme, combo);
  const FieldP1 rhs = a * caputo_apply(scheme, u) + b * caputo_apply(scheme, v);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}
