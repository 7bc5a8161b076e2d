#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "trajgp/hyperopt.hpp"

using namespace trajgp;
using Catch::Approx;

TEST_CASE("hyperparameter vector validation and JSON", "[hyperopt]") {
  HyperParamVector theta = HyperParamVector::se(0.1, 1.0, 2.0);
  theta.validate();
  CHECK(theta.noise_var() == 0.1);
  CHECK(theta.kernel().family() == KernelFamily::SquaredExponential);

  HyperParamVector wrong = theta;
  wrong.values.push_back(1.0);
  CHECK_THROWS_AS(wrong.validate(), InvalidInputError);

  HyperParamVector negative = theta;
  negative.values[1] = -1.0;
  CHECK_THROWS_AS(negative.validate(), InvalidInputError);

  const HyperParamVector lp =
      HyperParamVector::local_periodic(0.05, 1.2, 0.8, 5000.0, 2500.0);
  const HyperParamVector loaded = HyperParamVector::from_json(lp.to_json());
  CHECK(loaded.period == 2500.0);
  CHECK(loaded.values == lp.values);
}

TEST_CASE("analytic gradient matches finite differences for all families",
          "[hyperopt]") {
  std::mt19937 rng(101);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::LocalPeriodic,
        KernelFamily::CompositeCluster}) {
    for (int rep = 0; rep < 10; ++rep) {
      const HyperParamVector theta = oracles::random_theta(family, rng);
      const Eigen::VectorXd inputs = oracles::random_inputs(8, rng);
      const Eigen::VectorXd targets = oracles::random_targets(8, rng);
      const double mean_const = 0.1;

      const CostGrad cg = cost_and_grad(theta, inputs, targets, mean_const);
      const Eigen::VectorXd fd =
          oracles::cost_finite_difference(theta, inputs, targets, mean_const);
      CHECK(cg.cost ==
            Approx(oracles::dense_cost(theta, inputs, targets, mean_const))
                .epsilon(1e-9));
      for (Eigen::Index i = 0; i < fd.size(); ++i) {
        INFO("family " << to_string(family) << " rep " << rep << " param " << i);
        CHECK(oracles::relative_error(cg.grad[i], fd[i]) < 1e-5);
      }
    }
  }
}

TEST_CASE("zero residual reduces the gradient to the trace term", "[hyperopt]") {
  std::mt19937 rng(113);
  const HyperParamVector theta =
      oracles::random_theta(KernelFamily::SquaredExponential, rng);
  const Eigen::VectorXd inputs = oracles::random_inputs(6, rng);
  const double mean_const = 0.7;
  const Eigen::VectorXd targets = Eigen::VectorXd::Constant(6, mean_const);

  const CostGrad cg = cost_and_grad(theta, inputs, targets, mean_const);
  // With alpha = 0 the gradient entry is tr{C^-1 dC/dsigma_sq}.
  const KernelSpec spec = theta.kernel();
  const Eigen::MatrixXd c = spec.gram(inputs, theta.noise_var());
  const double expected =
      c.inverse().cwiseProduct(spec.gram_grad(inputs, 1)).sum();
  CHECK(cg.grad[1] == Approx(expected).epsilon(1e-8));
}

TEST_CASE("cost is locally smooth in each hyperparameter", "[hyperopt]") {
  std::mt19937 rng(127);
  const HyperParamVector theta =
      oracles::random_theta(KernelFamily::LocalPeriodic, rng);
  const Eigen::VectorXd inputs = oracles::random_inputs(8, rng);
  const Eigen::VectorXd targets = oracles::random_targets(8, rng);
  const double base = cost_and_grad(theta, inputs, targets).cost;
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    const double delta = 1e-4 * theta.values[i];
    HyperParamVector plus = theta;
    HyperParamVector minus = theta;
    plus.values[i] += delta;
    minus.values[i] -= delta;
    const double up = cost_and_grad(plus, inputs, targets).cost;
    const double down = cost_and_grad(minus, inputs, targets).cost;
    // Symmetric to second order: f(+d) + f(-d) - 2 f(0) = O(d^2).
    CHECK(std::abs(up + down - 2.0 * base) < 1e-4 * (1.0 + std::abs(base)));
  }
}

TEST_CASE("cost_and_grad requires two points and positive parameters",
          "[hyperopt]") {
  const HyperParamVector theta = HyperParamVector::se(0.1, 1.0, 1.0);
  Eigen::VectorXd one(1), target(1);
  one << 0.0;
  target << 1.0;
  CHECK_THROWS_AS(cost_and_grad(theta, one, target), InvalidInputError);
}

TEST_CASE("synthetic recovery of the SE length scale", "[hyperopt]") {
  // Data generated from SE{sigma_sq = 1, length = 5} plus noise 0.01;
  // the fitted length should land within +-30 % for the median seed.
  std::vector<double> recovered;
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937 rng(1000 + seed);
    const Eigen::VectorXd inputs = oracles::random_inputs(200, rng, 0.0, 60.0);
    const KernelSpec truth(SEParams{1.0, 5.0});
    const Eigen::VectorXd targets = oracles::sample_gp(truth, inputs, 0.01, rng);

    OptimizeOptions opts;
    opts.restarts = 2;
    opts.seed = seed;
    opts.max_iter = 120;
    const OptimizeResult fit = optimize(
        inputs, targets, HyperParamVector::se(0.05, 0.5, 2.0), opts);
    recovered.push_back(fit.theta.values[2]);
  }
  std::nth_element(recovered.begin(), recovered.begin() + 10, recovered.end());
  const double median = recovered[10];
  CHECK(median > 5.0 * 0.7);
  CHECK(median < 5.0 * 1.3);
}

TEST_CASE("optimize never worsens the initial cost", "[hyperopt]") {
  std::mt19937 rng(211);
  const Eigen::VectorXd inputs = oracles::random_inputs(20, rng);
  const Eigen::VectorXd targets = oracles::random_targets(20, rng);
  const HyperParamVector init = HyperParamVector::se(0.2, 1.0, 1.0);
  const double init_cost = cost_and_grad(init, inputs, targets).cost;
  const OptimizeResult result = optimize(inputs, targets, init, {.seed = 5});
  CHECK(result.cost <= init_cost + 1e-12);
}

TEST_CASE("a local optimum is a fixed point", "[hyperopt]") {
  Eigen::VectorXd inputs(2), targets(2);
  inputs << 0.0, 2.0;
  targets << 0.5, -0.5;
  const HyperParamVector init = HyperParamVector::se(0.3, 1.0, 1.5);
  OptimizeOptions opts;
  opts.restarts = 0;
  opts.tol = 1e-9;
  opts.max_iter = 400;
  const OptimizeResult first = optimize(inputs, targets, init, opts);
  REQUIRE(first.converged);
  const OptimizeResult second = optimize(inputs, targets, first.theta, opts);
  CHECK(second.cost == Approx(first.cost).margin(1e-9));
}

TEST_CASE("all-zero targets drive the signal variance to the bound",
          "[hyperopt]") {
  std::mt19937 rng(223);
  const Eigen::VectorXd inputs = oracles::random_inputs(15, rng);
  const Eigen::VectorXd targets = Eigen::VectorXd::Zero(15);
  OptimizeOptions opts;
  opts.restarts = 0;
  opts.max_iter = 300;
  const OptimizeResult result =
      optimize(inputs, targets, HyperParamVector::se(0.5, 1.0, 1.0), opts);
  // No signal: sigma_sq collapses toward the lower log bound.
  CHECK(result.theta.values[1] < 0.05);
}

TEST_CASE("reporting in natural space is consistent with re-evaluation",
          "[hyperopt]") {
  std::mt19937 rng(227);
  const Eigen::VectorXd inputs = oracles::random_inputs(12, rng);
  const Eigen::VectorXd targets = oracles::random_targets(12, rng);
  const OptimizeResult result = optimize(
      inputs, targets, HyperParamVector::se(0.2, 1.0, 1.0), {.seed = 3});
  const double check = cost_and_grad(result.theta, inputs, targets).cost;
  CHECK(check == Approx(result.cost).margin(1e-10));
}
