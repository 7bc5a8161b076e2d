#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Dense>

#include "trajgp/lbfgs.hpp"

using namespace trajgp;
using Catch::Approx;

TEST_CASE("minimizes a shifted quadratic", "[lbfgs]") {
  const Eigen::VectorXd target = (Eigen::VectorXd(3) << 1.0, -2.0, 0.5).finished();
  const Objective quadratic = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 2.0 * (x - target);
    return (x - target).squaredNorm();
  };
  const LbfgsResult r =
      lbfgs_minimize(quadratic, Eigen::VectorXd::Zero(3), {.grad_tol = 1e-9});
  CHECK(r.converged);
  CHECK((r.x - target).norm() < 1e-7);
  CHECK(r.fx < 1e-12);
}

TEST_CASE("minimizes the Rosenbrock function", "[lbfgs]") {
  const Objective rosenbrock = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  const LbfgsResult r = lbfgs_minimize(
      rosenbrock, (Eigen::VectorXd(2) << -1.2, 1.0).finished(),
      {.max_iter = 500, .grad_tol = 1e-8});
  CHECK(r.converged);
  CHECK(r.x[0] == Approx(1.0).margin(1e-5));
  CHECK(r.x[1] == Approx(1.0).margin(1e-5));
}

TEST_CASE("accepted iterates have non-increasing cost", "[lbfgs]") {
  const Objective rosenbrock = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  const LbfgsResult r = lbfgs_minimize(
      rosenbrock, (Eigen::VectorXd(2) << -1.2, 1.0).finished(), {.max_iter = 200});
  REQUIRE(r.cost_trace.size() > 2);
  for (std::size_t i = 1; i < r.cost_trace.size(); ++i) {
    CHECK(r.cost_trace[i] <= r.cost_trace[i - 1]);
  }
}

TEST_CASE("iterates respect box bounds", "[lbfgs]") {
  const Objective away = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 2.0 * (x - Eigen::VectorXd::Constant(x.size(), 100.0));
    return (x - Eigen::VectorXd::Constant(x.size(), 100.0)).squaredNorm();
  };
  LbfgsOptions opts;
  opts.lower_bound = -2.0;
  opts.upper_bound = 2.0;
  const LbfgsResult r = lbfgs_minimize(away, Eigen::VectorXd::Zero(2), opts);
  CHECK(r.x.maxCoeff() <= 2.0);
  CHECK(r.x.minCoeff() >= -2.0);
  CHECK(r.x[0] == Approx(2.0).margin(1e-9));
}

TEST_CASE("throws when the objective is infinite at the start", "[lbfgs]") {
  const Objective bad = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
    g.setZero(1);
    return std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(lbfgs_minimize(bad, Eigen::VectorXd::Zero(1)), NumericalError);
}
