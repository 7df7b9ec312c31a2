#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spdc/analysis.hpp"
#include "spdc/error.hpp"

using namespace spdc;

namespace {

JointDistribution exact(double N, double eta, double eta_p, double M) {
  return joint_distribution_auto(EffectiveSource{N, eta, eta_p, M}, 1e-20);
}

}  // namespace

TEST_CASE("mode number recovers M independently of the pump") {
  for (double M : {1.0, 2.0, 4.0, 16.6}) {
    for (double N : {0.01, 0.1, 1.0}) {
      const auto rho = exact(N, 0.4, 0.7, M);
      CHECK(std::abs(mode_number(rho, Arm::a).value - M) <= 1e-9);
      CHECK(std::abs(mode_number(rho, Arm::b).value - M) <= 1e-9);
    }
  }
}

TEST_CASE("delta statistic equals one minus the harmonic-mean transmission") {
  for (double M : {1.0, 2.0, 4.0}) {
    for (double N : {0.1, 1.0, 3.0}) {
      for (double eta : {0.3, 0.7, 1.0}) {
        for (double eta_p : {0.3, 0.7, 1.0}) {
          const auto rho = exact(N, eta, eta_p, M);
          const double expected = 1.0 - 2.0 / (1.0 / eta + 1.0 / eta_p);
          CHECK(std::abs(delta_squared(rho).value - expected) <= 1e-9);
          CHECK(std::abs(efficiency(rho).value - 2.0 / (1.0 / eta + 1.0 / eta_p)) <= 1e-9);
        }
      }
      for (double eta : {0.2, 0.5, 0.9}) {
        CHECK(std::abs(delta_squared(exact(N, eta, eta, M)).value - (1.0 - eta)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("independent arms give no sub-Poissonian correlation") {
  const Eigen::VectorXd a = exact(0.5, 1.0, 0.0, 1.0).probs.col(0);
  const Eigen::VectorXd b = exact(0.8, 1.0, 0.0, 2.0).probs.col(0);
  const auto size = std::min(a.size(), b.size());
  const auto rho = JointDistribution::from_probs(Matrix(a.head(size) * b.head(size).transpose()));
  const auto eff = efficiency(rho);
  CHECK(eff.warning);
  CHECK(eff.value < 0.0);
  CHECK_FALSE(eff.note.empty());
}

TEST_CASE("contamination of the lossless single mode source") {
  for (double N : {0.5, 1.0, 2.0}) {
    const auto rho = exact(N, 1.0, 1.0, 1.0);
    CHECK(std::abs(contamination2(rho).value - N / (N + 1)) <= 1e-9);
    const double double_pairs = N * N / std::pow(N + 1, 3);
    const double expected4 = 1.0 - double_pairs / std::pow(N / (N + 1), 2);
    CHECK(std::abs(contamination4(rho).value - expected4) <= 1e-9);
  }
}

TEST_CASE("single-pair contamination at weak pumping") {
  // Only two-pair events feed cells with k + l >= 2 other than (1,1).
  for (double eta : {0.2, 0.5, 0.8}) {
    const double N = 1e-6;
    const double b[3] = {(1 - eta) * (1 - eta), 2 * eta * (1 - eta), eta * eta};
    double other = 0.0;
    for (int n = 0; n <= 2; ++n) {
      for (int m = 0; m <= 2; ++m) {
        if (n + m >= 2 && !(n == 1 && m == 1)) other += b[n] * b[m];
      }
    }
    const double expected = N * other / (eta * eta);
    const double eps = contamination2(exact(N, eta, eta, 1.0)).value;
    CHECK(std::abs(eps - expected) <= 0.01 * expected);
  }
}

TEST_CASE("truncation shows up as a half-width") {
  const EffectiveSource src{1.0, 0.8, 0.8, 2.0};
  const auto coarse = joint_distribution(src, 6);
  REQUIRE(coarse.tail_mass > significant_tail);
  const auto fine = joint_distribution_auto(src, 1e-14);
  for (const auto& [c, f] : {std::pair{mode_number(coarse, Arm::a), mode_number(fine, Arm::a)},
                             std::pair{delta_squared(coarse), delta_squared(fine)},
                             std::pair{contamination2(coarse), contamination2(fine)},
                             std::pair{contamination4(coarse), contamination4(fine)}}) {
    CHECK(c.half_width > 0.0);
    CHECK(f.half_width == 0.0);
  }
  const auto eps2_coarse = contamination2(coarse);
  CHECK(std::abs(eps2_coarse.value - contamination2(fine).value) <= eps2_coarse.half_width + 1e-12);
}

TEST_CASE("estimator failures are kept per field") {
  Matrix probs = Matrix::Zero(3, 3);
  probs(0, 0) = 1.0;
  const auto ch = characterize(JointDistribution::from_probs(probs));
  CHECK_FALSE(ch.M_hat.ok());
  CHECK(ch.M_hat.error == ErrorKind::degenerate_input);
  CHECK_FALSE(ch.eps2.ok());
  CHECK(ch.eps2.error == ErrorKind::degenerate_input);

  Matrix poisson_like = Matrix::Zero(3, 3);
  poisson_like(1, 1) = 1.0;
  const auto sub = characterize(JointDistribution::from_probs(poisson_like));
  CHECK(sub.M_hat.error == ErrorKind::sub_poissonian);
  REQUIRE(sub.eps2.ok());
  CHECK(sub.eps2.estimate->value == 0.0);
}

TEST_CASE("characterization of a model distribution") {
  const auto rho = exact(0.2, 0.3, 0.6, 3.0);
  const auto ch = characterize(rho);
  CHECK(ch.mean_n == doctest::Approx(3.0 * 0.3 * 0.2));
  CHECK(ch.mean_n_prime == doctest::Approx(3.0 * 0.6 * 0.2));
  CHECK(ch.var_n == doctest::Approx(0.18 + 0.18 * 0.18 / 3.0));
  CHECK(ch.M_hat.estimate->value == doctest::Approx(3.0));
  CHECK(ch.eta_hat.estimate->value == doctest::Approx(2.0 / (1 / 0.3 + 1 / 0.6)));
  CHECK(ch.p11 == rho.probs(1, 1));
}

TEST_CASE("pump solution reproduces the requested rate") {
  for (double M : {1.0, 5.0}) {
    for (int which : {2, 4}) {
      const double rate = which == 2 ? 1e-3 : 1e-6;
      const auto N = solve_pump_for_rate(0.5, rate, M, which);
      REQUIRE(N.has_value());
      const int k = which / 2;
      const double got = joint_distribution(EffectiveSource{*N, 0.5, 0.5, M}, k).probs(k, k);
      CHECK(got == doctest::Approx(rate).epsilon(1e-9));
    }
  }
  // rho(1,1) of the lossless single mode never exceeds 1/4.
  CHECK_FALSE(solve_pump_for_rate(1.0, 0.3, 1.0, 2).has_value());
  CHECK(solve_pump_for_rate(1.0, 0.2499, 1.0, 2).has_value());
}

TEST_CASE("contamination surfaces are monotone") {
  std::vector<double> etas;
  std::vector<double> rates;
  for (int i = 0; i < 8; ++i) etas.push_back(0.2 + 0.8 * i / 7.0);
  for (int j = 0; j < 8; ++j) rates.push_back(1e-6 * std::pow(10.0, 3.0 * j / 7.0));
  for (int which : {2, 4}) {
    const double scale = which == 2 ? 1.0 : 1e-4;
    std::vector<double> r;
    for (double x : rates) r.push_back(x * scale);
    const auto map = contamination_map(etas, r, 1.0, which, 2);
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        CAPTURE(i);
        CAPTURE(j);
        REQUIRE(map.epsilon(i, j) != ContaminationMap::unreachable);
        if (i > 0) CHECK(map.epsilon(i, j) < map.epsilon(i - 1, j));
        if (j > 0) CHECK(map.epsilon(i, j) > map.epsilon(i, j - 1));
      }
    }
  }
}

TEST_CASE("map marks rates no pump can reach") {
  const std::vector<double> etas{0.1, 1.0};
  const std::vector<double> rates{0.01, 0.3};
  const auto map = contamination_map(etas, rates, 1.0, 2);
  CHECK(map.epsilon(0, 1) == ContaminationMap::unreachable);
  CHECK(map.epsilon(1, 1) == ContaminationMap::unreachable);
  CHECK(std::isnan(map.pump(1, 1)));
  CHECK(map.epsilon(1, 0) == doctest::Approx(map.pump(1, 0) / (map.pump(1, 0) + 1)));
  CHECK_THROWS_AS(contamination_map({}, rates, 1.0, 2), Error);
  CHECK_THROWS_AS(contamination_map(etas, rates, 1.0, 3), Error);
}

TEST_CASE("map does not depend on the thread count") {
  const std::vector<double> etas{0.1, 0.3, 0.6, 0.9};
  const std::vector<double> rates{1e-4, 1e-3};
  const auto one = contamination_map(etas, rates, 2.0, 2, 1);
  const auto four = contamination_map(etas, rates, 2.0, 2, 4);
  CHECK(one.epsilon == four.epsilon);
}
