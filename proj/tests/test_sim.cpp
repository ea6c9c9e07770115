#include <catch2/catch.hpp>

#include <cmath>

#include "lsapc/rng.hpp"
#include "lsapc/simulate.hpp"
#include "oracles.hpp"

using namespace lsapc;

namespace {

int count_nonzeros(const Vector& v) {
  int count = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) ++count;
  return count;
}

int count_blocks(const Vector& v) {
  int blocks = 0;
  bool inside = false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const bool nz = v(i) != 0.0;
    if (nz && !inside) ++blocks;
    inside = nz;
  }
  return blocks;
}

}  // namespace

TEST_CASE("ground-truth profiles are exactly sparse with the requested layout", "[sim]") {
  SECTION("piecewise constant, one block of 50") {
    GroundTruthSpec spec;
    spec.shape = GroundTruthShape::PiecewiseConstant;
    spec.p = 500;
    spec.support = 50;
    const Vector beta = make_ground_truth(spec);
    REQUIRE(count_nonzeros(beta) == 50);
    REQUIRE(count_blocks(beta) == 1);
    // all nonzero entries equal
    double value = 0.0;
    for (Eigen::Index i = 0; i < 500; ++i)
      if (beta(i) != 0.0) {
        if (value == 0.0) value = beta(i);
        REQUIRE(beta(i) == value);
      }
    REQUIRE(value == spec.amplitude);
  }
  SECTION("exp-bell, three blocks totaling 70") {
    GroundTruthSpec spec;
    spec.shape = GroundTruthShape::ExpBell;
    spec.p = 500;
    spec.support = 70;
    const Vector beta = make_ground_truth(spec);
    REQUIRE(count_nonzeros(beta) == 70);
    REQUIRE(count_blocks(beta) == 3);
    REQUIRE(beta.maxCoeff() == Approx(spec.amplitude).epsilon(1e-12));
  }
  SECTION("degenerate support") {
    GroundTruthSpec spec;
    spec.p = 20;
    spec.support = 1;
    REQUIRE(count_nonzeros(make_ground_truth(spec)) == 1);
    spec.support = 0;
    REQUIRE_THROWS_AS(make_ground_truth(spec), invalid_parameter_error);
    spec.support = 21;
    REQUIRE_THROWS_AS(make_ground_truth(spec), invalid_parameter_error);
  }
  SECTION("sparsity count holds across random specs") {
    RngHandle rng(606);
    for (int trial = 0; trial < 40; ++trial) {
      GroundTruthSpec spec;
      spec.shape = (trial % 2 == 0) ? GroundTruthShape::ExpBell
                                    : GroundTruthShape::PiecewiseConstant;
      spec.p = 20 + static_cast<int>(rng.uniform01() * 200);
      spec.support = 1 + static_cast<int>(rng.uniform01() * (spec.p / 2));
      REQUIRE(count_nonzeros(make_ground_truth(spec)) == spec.support);
    }
  }
}

TEST_CASE("simulated data matches the generative distribution", "[sim]") {
  GroundTruthSpec spec;
  spec.p = 100;
  spec.support = 14;
  const Vector beta = make_ground_truth(spec);

  SECTION("regressor variance defaults to 4") {
    const Dataset data = simulate_dataset(beta, 1000, 2.0, 200.0, 99);
    const double var_x = data.X.array().square().mean();  // mean is 0 by construction
    REQUIRE(var_x == Approx(4.0).epsilon(0.02));
  }
  SECTION("noise standard deviation defaults to 200") {
    const Dataset data = simulate_dataset(beta, 10000, 2.0, 200.0, 100);
    const Vector resid = data.y - data.X * beta;
    const double sd = std::sqrt(resid.array().square().mean());
    REQUIRE(sd == Approx(200.0).epsilon(0.03));
  }
  SECTION("identical seed, identical dataset") {
    const Dataset a = simulate_dataset(beta, 50, 2.0, 200.0, 7);
    const Dataset b = simulate_dataset(beta, 50, 2.0, 200.0, 7);
    REQUIRE(a.y == b.y);
    REQUIRE(a.X == b.X);
  }
}

TEST_CASE("correlated simulation lays out sites and carries metadata", "[sim]") {
  const Vector beta = Vector::Ones(4);
  const Dataset data = simulate_dataset_correlated(beta, 3, 5, 2.0, 1.0, 0.4, 42);
  REQUIRE(data.n() == 15);
  REQUIRE(data.site_id.has_value());
  REQUIRE((*data.site_id)(4) == 0);
  REQUIRE((*data.site_id)(5) == 1);
  REQUIRE((*data.time_index)(5) == 0);
  const Dataset again = simulate_dataset_correlated(beta, 3, 5, 2.0, 1.0, 0.4, 42);
  REQUIRE(data.y == again.y);
}

TEST_CASE("absolute_error is the L1 distance", "[sim]") {
  Vector a(2), b(2);
  a << 1.0, 2.0;
  b << 0.0, 0.0;
  REQUIRE(absolute_error(a, a) == 0.0);
  REQUIRE(absolute_error(a, b) == 3.0);

  RngHandle rng(4040);
  Vector u(30), v(30);
  for (int i = 0; i < 30; ++i) {
    u(i) = rng.normal();
    v(i) = rng.normal();
  }
  double loop = 0.0;
  for (int i = 0; i < 30; ++i) loop += std::abs(u(i) - v(i));
  REQUIRE(absolute_error(u, v) == Approx(loop).epsilon(1e-12));

  Vector w(3);
  REQUIRE_THROWS_AS(absolute_error(u, w), dimension_error);
}

TEST_CASE("run_study produces one row per cell and is reproducible", "[sim][study]") {
  StudyConfig config;
  config.spec.p = 12;
  config.spec.support = 4;
  config.spec.amplitude = 10.0;
  config.n_values = {15};
  config.noise_sd = 2.0;
  config.x_sd = 1.0;
  config.n_reps = 1;
  config.seed = 3;
  config.methods = {Method::FL};
  config.fl.folds = 3;

  const StudyResult result = run_study(config);
  REQUIRE(result.rows.size() == 1);
  REQUIRE(result.rows[0].method == Method::FL);
  REQUIRE(result.rows[0].n == 15);
  REQUIRE(std::isfinite(result.rows[0].ae));
  REQUIRE(result.rows[0].note.empty());

  SECTION("all methods fit the same data and AEs are reproducible") {
    config.methods = {Method::FL, Method::LSAPC_GS, Method::LSAPC_VB, Method::LSAPC_GS_l0,
                      Method::LSAPC_VB_l0};
    config.gibbs = GibbsSettings{400, 100, 1, 0};
    config.n_reps = 2;
    const StudyResult a = run_study(config);
    const StudyResult b = run_study(config);
    REQUIRE(a.rows.size() == 10);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      REQUIRE(a.rows[i].method == b.rows[i].method);
      REQUIRE(a.rows[i].rep == b.rows[i].rep);
      REQUIRE(a.rows[i].ae == b.rows[i].ae);
      REQUIRE(std::isfinite(a.rows[i].ae));
    }
  }
  SECTION("results are independent of the worker thread count") {
    config.methods = {Method::FL, Method::LSAPC_VB};
    config.n_reps = 3;
    setenv("LSAPC_THREADS", "1", 1);
    const StudyResult serial = run_study(config);
    setenv("LSAPC_THREADS", "4", 1);
    const StudyResult threaded = run_study(config);
    unsetenv("LSAPC_THREADS");
    REQUIRE(serial.rows.size() == threaded.rows.size());
    for (std::size_t i = 0; i < serial.rows.size(); ++i)
      REQUIRE(serial.rows[i].ae == threaded.rows[i].ae);
  }
}
