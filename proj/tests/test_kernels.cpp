#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "trajgp/kernels.hpp"

using namespace trajgp;
using Catch::Approx;

TEST_CASE("SE kernel evaluation", "[kernels]") {
  KernelSpec k2(SEParams{2.0, 1.0});
  CHECK(k2.eval(0.0, 0.0) == Approx(2.0).epsilon(1e-12));

  KernelSpec k1(SEParams{1.0, 1.0});
  CHECK(k1.eval(0.0, 1.0) == Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("local-periodic kernel evaluation", "[kernels]") {
  KernelSpec lp(LocalPeriodicParams{1.0, 1.0, 10.0, 2.5});
  // At one full period the periodic factor is 1, leaving the SE decay.
  CHECK(lp.eval(0.0, 2.5) == Approx(std::exp(-6.25 / 100.0)).epsilon(1e-12));
}

TEST_CASE("composite kernel diagonal adds both variances", "[kernels]") {
  KernelSpec k(CompositeClusterParams{SEParams{1.5, 2.0}, SEParams{0.5, 1.0}});
  CHECK(k.eval(3.0, 3.0) == Approx(2.0).epsilon(1e-12));
  CHECK(k.diag_value() == Approx(2.0).epsilon(1e-12));
}

TEST_CASE("kernel eval rejects non-finite inputs", "[kernels]") {
  KernelSpec k(SEParams{1.0, 1.0});
  CHECK_THROWS_AS(k.eval(std::nan(""), 0.0), InvalidInputError);
  CHECK_THROWS_AS(k.eval(0.0, std::numeric_limits<double>::infinity()),
                  InvalidInputError);
}

TEST_CASE("kernel parameter validation", "[kernels]") {
  CHECK_THROWS_AS(KernelSpec(SEParams{1.0, -1.0}), InvalidInputError);
  CHECK_THROWS_AS(KernelSpec(LocalPeriodicParams{1.0, 0.0, 1.0, 1.0}),
                  InvalidInputError);
  CHECK_THROWS_AS(KernelSpec(LocalPeriodicParams{1.0, 1.0, 1.0, -2.5}),
                  InvalidInputError);
}

TEST_CASE("symmetry over random input pairs", "[kernels]") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-100.0, 100.0);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::LocalPeriodic,
        KernelFamily::CompositeCluster}) {
    const KernelSpec spec = oracles::random_theta(family, rng).kernel();
    for (int i = 0; i < 50; ++i) {
      const double a = dist(rng);
      const double b = dist(rng);
      CHECK(spec.eval(a, b) == Approx(spec.eval(b, a)).epsilon(1e-14));
    }
  }
}

TEST_CASE("diagonal equals the prior variance exactly", "[kernels]") {
  KernelSpec se(SEParams{1.7, 3.0});
  KernelSpec lp(LocalPeriodicParams{0.9, 1.1, 4.0, 2.5});
  KernelSpec comp(CompositeClusterParams{SEParams{1.2, 2.0}, SEParams{0.3, 9.0}});
  for (double d : {-17.0, 0.0, 3.25, 1e4}) {
    CHECK(se.eval(d, d) == 1.7);
    CHECK(lp.eval(d, d) == 0.9);
    CHECK(comp.eval(d, d) == 1.5);
  }
}

TEST_CASE("gram matrix basics", "[kernels]") {
  KernelSpec se(SEParams{1.0, 1.0});

  Eigen::VectorXd one(1);
  one << 0.0;
  const Eigen::MatrixXd g1 = se.gram(one, 0.5);
  CHECK(g1(0, 0) == Approx(1.5).epsilon(1e-14));

  Eigen::VectorXd two(2);
  two << 0.0, 1.0;
  const Eigen::MatrixXd g2 = se.gram(two, 0.0);
  CHECK(g2(0, 0) == Approx(1.0).epsilon(1e-14));
  CHECK(g2(1, 1) == Approx(1.0).epsilon(1e-14));
  CHECK(g2(0, 1) == Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(g2(1, 0) == g2(0, 1));
}

TEST_CASE("gram matches entrywise eval calls for the LP kernel", "[kernels]") {
  std::mt19937 rng(11);
  KernelSpec lp(LocalPeriodicParams{1.3, 0.8, 6.0, 2.5});
  const Eigen::VectorXd inputs = oracles::random_inputs(5, rng);
  const Eigen::MatrixXd g = lp.gram(inputs, 0.1);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      double expected = lp.eval(inputs[i], inputs[j]);
      if (i == j) expected += 0.1;
      CHECK(g(i, j) == Approx(expected).epsilon(1e-13));
    }
  }
}

TEST_CASE("gram reports exactly duplicated inputs", "[kernels]") {
  KernelSpec se(SEParams{1.0, 1.0});
  Eigen::VectorXd dup(2);
  dup << 3.0, 3.0;
  int duplicates = 0;
  se.gram(dup, 0.0, &duplicates);
  CHECK(duplicates == 1);

  Eigen::VectorXd distinct(3);
  distinct << 0.0, 1.0, 2.0;
  duplicates = -1;
  se.gram(distinct, 0.0, &duplicates);
  CHECK(duplicates == 0);
}

TEST_CASE("gram is positive semi-definite on many distinct inputs", "[kernels]") {
  std::mt19937 rng(23);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::LocalPeriodic,
        KernelFamily::CompositeCluster}) {
    const KernelSpec spec = oracles::random_theta(family, rng).kernel();
    const Eigen::VectorXd inputs = oracles::random_inputs(64, rng, 0.0, 50.0);
    const Eigen::MatrixXd g = spec.gram(inputs, 1e-8);
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("LP covariance at whole periods decays monotonically", "[kernels]") {
  KernelSpec lp(LocalPeriodicParams{1.0, 0.7, 8000.0, 2500.0});
  double previous = lp.eval(0.0, 0.0);
  for (int j = 1; j <= 4; ++j) {
    const double value = lp.eval(0.0, j * 2500.0);
    CHECK(value < previous);
    previous = value;
  }
}

TEST_CASE("noise-variance gradient is the identity", "[kernels]") {
  std::mt19937 rng(31);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::LocalPeriodic,
        KernelFamily::CompositeCluster}) {
    const KernelSpec spec = oracles::random_theta(family, rng).kernel();
    const Eigen::VectorXd inputs = oracles::random_inputs(6, rng);
    const Eigen::MatrixXd g = spec.gram_grad(inputs, 0);
    CHECK((g - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("SE length-scale gradient closed form", "[kernels]") {
  KernelSpec se(SEParams{1.0, 1.0});
  Eigen::VectorXd inputs(2);
  inputs << 0.0, 1.0;
  const Eigen::MatrixXd g = se.gram_grad(inputs, 2);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 1) == 0.0);
  CHECK(g(0, 1) == Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(g(1, 0) == g(0, 1));
}

TEST_CASE("gram gradients match finite differences of gram", "[kernels]") {
  std::mt19937 rng(43);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::LocalPeriodic,
        KernelFamily::CompositeCluster}) {
    const HyperParamVector theta = oracles::random_theta(family, rng);
    const KernelSpec spec = theta.kernel();
    const Eigen::VectorXd inputs = oracles::random_inputs(6, rng);
    for (int index = 0; index < spec.gradient_count(); ++index) {
      const Eigen::MatrixXd analytic = spec.gram_grad(inputs, index);
      const Eigen::MatrixXd fd =
          oracles::gram_finite_difference(theta, inputs, index, 1e-6);
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          INFO("family " << to_string(family) << " param " << index << " entry ("
                         << i << "," << j << ")");
          CHECK(oracles::relative_error(analytic(i, j), fd(i, j)) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("gram_grad rejects unknown parameter indices", "[kernels]") {
  KernelSpec se(SEParams{1.0, 1.0});
  Eigen::VectorXd inputs(2);
  inputs << 0.0, 1.0;
  CHECK_THROWS_AS(se.gram_grad(inputs, 3), InvalidInputError);
  CHECK_THROWS_AS(se.gram_grad(inputs, -1), InvalidInputError);
}

TEST_CASE("kernel spec JSON round trip", "[kernels]") {
  std::mt19937 rng(59);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::LocalPeriodic,
        KernelFamily::CompositeCluster}) {
    const KernelSpec spec = oracles::random_theta(family, rng).kernel();
    const KernelSpec loaded = KernelSpec::from_json(spec.to_json());
    CHECK(loaded.family() == spec.family());
    for (int i = 0; i < 20; ++i) {
      const double a = dist(rng);
      const double b = dist(rng);
      CHECK(loaded.eval(a, b) == spec.eval(a, b));
    }
  }
  CHECK_THROWS_AS(KernelSpec::from_json(nlohmann::json{{"family", "matern"}}),
                  ConfigError);
}
