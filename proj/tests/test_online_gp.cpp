#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "trajgp/online_gp.hpp"

using namespace trajgp;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("initialization copies the prior onto the grid posterior", "[ogp]") {
  const OnlineGP single(vec({0.0}), KernelSpec(SEParams{1.0, 1.0}), 0.5);
  CHECK(single.mu_g()[0] == 0.0);
  CHECK(single.k_g()(0, 0) == Approx(1.0).epsilon(1e-12));
  CHECK(single.k_bar_inv()(0, 0) == Approx(1.0).epsilon(1e-9));
  CHECK(single.count() == 0);

  const OnlineGP pair(vec({0.0, 1.0}), KernelSpec(SEParams{1.0, 1.0}), 0.5);
  CHECK(pair.k_bar()(0, 1) == Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(pair.k_bar()(0, 0) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("duplicate grid points are rejected", "[ogp]") {
  CHECK_THROWS_AS(OnlineGP(vec({1.0, 1.0}), KernelSpec(SEParams{1.0, 1.0}), 0.1),
                  InvalidInputError);
}

TEST_CASE("inverse of the prior is consistent", "[ogp]") {
  std::mt19937 rng(5);
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(20, 0.0, 10.0);
  const OnlineGP state(grid, KernelSpec(SEParams{1.0, 1.5}), 0.1);
  const Eigen::MatrixXd identity = state.k_bar_inv() * state.k_bar();
  CHECK((identity - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() <
        1e-6);
}

TEST_CASE("hand-traced single-grid recursion step", "[ogp]") {
  OnlineGP state(vec({0.0}), KernelSpec(SEParams{1.0, 1.0}), 1.0);
  state.update(0.0, 2.0);
  CHECK(state.mu_g()[0] == Approx(1.0).epsilon(1e-12));
  CHECK(state.k_g()(0, 0) == Approx(0.5).epsilon(1e-12));
  CHECK(state.count() == 1);

  const PosteriorPrediction p = state.predict(0.0);
  CHECK(p.mean == Approx(1.0).epsilon(1e-12));
  CHECK(p.variance == Approx(1.5).epsilon(1e-12));
}

TEST_CASE("zero innovation leaves the mean unchanged", "[ogp]") {
  OnlineGP state(vec({0.0, 2.0, 4.0}), KernelSpec(SEParams{1.0, 1.5}), 0.3);
  state.update(1.0, 0.7);
  const Eigen::VectorXd mu_before = state.mu_g();
  // Observing exactly the current predictive mean at some input.
  const double d_t = 2.5;
  const Eigen::VectorXd k_row = [&] {
    Eigen::VectorXd row(3);
    for (int i = 0; i < 3; ++i) row[i] = state.kernel().eval(d_t, state.grid()[i]);
    return row;
  }();
  const double mu_p = (state.k_bar_inv() * k_row).dot(state.mu_g());
  state.update(d_t, mu_p);
  CHECK((state.mu_g() - mu_before).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fresh state predicts the prior", "[ogp]") {
  const OnlineGP state(vec({0.0, 1.0, 2.0}), KernelSpec(SEParams{1.3, 1.0}), 0.2);
  for (double d : {-1.0, 0.5, 2.0, 9.0}) {
    const PosteriorPrediction p = state.predict(d);
    CHECK(p.mean == Approx(0.0).margin(1e-10));
    CHECK(p.variance == Approx(1.3 + 0.2).margin(1e-9));
  }
}

TEST_CASE("grid observations reproduce batch conditioning", "[ogp]") {
  const Eigen::VectorXd grid = vec({0.0, 1.5, 3.0});
  const KernelSpec kernel(SEParams{1.0, 1.2});
  const double noise_var = 0.25;
  const std::vector<int> obs_index = {0, 2, 1, 0, 2};
  const std::vector<double> obs_value = {0.8, -0.3, 0.5, 1.0, -0.1};

  OnlineGP state(grid, kernel, noise_var);
  for (std::size_t i = 0; i < obs_index.size(); ++i) {
    state.update(grid[obs_index[i]], obs_value[i]);
  }
  const auto [mean, cov] = oracles::grid_conditioning(
      state.k_bar(), 0.0, noise_var, obs_index, obs_value);
  CHECK((state.mu_g() - mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((state.k_g() - cov).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("final grid posterior is invariant to observation order", "[ogp]") {
  const Eigen::VectorXd grid = vec({0.0, 1.0, 2.0, 3.0});
  const KernelSpec kernel(SEParams{1.0, 1.0});
  std::vector<std::pair<int, double>> obs = {
      {0, 0.5}, {1, -0.2}, {3, 0.9}, {2, 0.1}, {1, -0.4}};

  OnlineGP reference(grid, kernel, 0.2);
  for (const auto& [idx, value] : obs) reference.update(grid[idx], value);

  std::mt19937 rng(77);
  for (int rep = 0; rep < 8; ++rep) {
    std::shuffle(obs.begin(), obs.end(), rng);
    OnlineGP state(grid, kernel, 0.2);
    for (const auto& [idx, value] : obs) state.update(grid[idx], value);
    CHECK((state.mu_g() - reference.mu_g()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((state.k_g() - reference.k_g()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("grid variances never grow across updates", "[ogp]") {
  std::mt19937 rng(83);
  std::uniform_real_distribution<double> input(0.0, 10.0);
  std::normal_distribution<double> value(0.0, 1.0);
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(15, 0.0, 10.0);
  OnlineGP state(grid, KernelSpec(SEParams{1.0, 1.5}), 0.1);
  Eigen::VectorXd previous = state.k_g().diagonal();
  for (int t = 0; t < 50; ++t) {
    state.update(input(rng), value(rng));
    const Eigen::VectorXd current = state.k_g().diagonal();
    CHECK((current.array() <= previous.array() + 1e-10).all());
    CHECK((current.array() <= state.k_bar().diagonal().array() + 1e-8).all());
    previous = current;
  }
}

TEST_CASE("state footprint is independent of the observation count", "[ogp]") {
  std::mt19937 rng(89);
  std::uniform_real_distribution<double> input(0.0, 10.0);
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(25, 0.0, 10.0);
  OnlineGP state(grid, KernelSpec(SEParams{1.0, 1.0}), 0.1);
  const std::size_t initial = state.state_bytes();
  for (int t = 0; t < 200; ++t) {
    state.update(input(rng), 0.5);
    REQUIRE(state.state_bytes() == initial);
    REQUIRE(state.mu_g().size() == grid.size());
    REQUIRE(state.k_g().rows() == grid.size());
  }
  CHECK(state.count() == 200);
}

TEST_CASE("an infinitely noisy observation changes nothing", "[ogp]") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(10, 0.0, 5.0);
  OnlineGP state(grid, KernelSpec(SEParams{1.0, 1.0}), 1e12);
  const Eigen::VectorXd mu_before = state.mu_g();
  const Eigen::MatrixXd k_before = state.k_g();
  state.update(2.5, 4.0);
  CHECK((state.mu_g() - mu_before).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((state.k_g() - k_before).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("checkpoint restores an equivalent state", "[ogp]") {
  std::mt19937 rng(97);
  std::uniform_real_distribution<double> input(0.0, 10.0);
  std::normal_distribution<double> value(2.0, 0.5);
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(12, 0.0, 10.0);
  OnlineGP state(grid, KernelSpec(LocalPeriodicParams{1.0, 0.8, 20.0, 5.0}), 0.2,
                 1.5);
  for (int t = 0; t < 30; ++t) state.update(input(rng), value(rng));

  OnlineGP restored = OnlineGP::restore(state.checkpoint());
  CHECK(restored.count() == state.count());
  for (double d : {0.3, 4.4, 7.9}) {
    CHECK(restored.predict(d).mean == Approx(state.predict(d).mean).margin(1e-12));
    CHECK(restored.predict(d).variance ==
          Approx(state.predict(d).variance).margin(1e-12));
  }
  // Resuming the stream gives the same result as never stopping.
  const double d_next = input(rng);
  state.update(d_next, 3.0);
  restored.update(d_next, 3.0);
  CHECK((restored.mu_g() - state.mu_g()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate innovation variance raises a numerical error", "[ogp]") {
  OnlineGP state(vec({0.0}), KernelSpec(SEParams{1.0, 1.0}), 0.0);
  // With zero noise the first exact observation collapses the posterior...
  state.update(0.0, 1.0);
  CHECK(state.k_g()(0, 0) == 0.0);
  // ...so a second one at the same point has zero innovation variance.
  CHECK_THROWS_AS(state.update(0.0, 2.0), NumericalError);
}
