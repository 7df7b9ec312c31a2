#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "oracles.hpp"
#include "spdc/error.hpp"
#include "spdc/model.hpp"

using namespace spdc;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::validation;
}

}  // namespace

TEST_CASE("recurrence matches the pair-counting construction") {
  for (double M : {1.0, 2.0, 4.0}) {
    for (double N : {0.1, 1.0, 3.0}) {
      for (double eta : {0.3, 0.7, 1.0}) {
        for (double eta_p : {0.3, 0.7, 1.0}) {
          const EffectiveSource src{N, eta, eta_p, M};
          const auto fast = joint_distribution(src, 12);
          const auto slow = joint_distribution_oracle(src, 12);
          CHECK((fast.probs - slow.probs).cwiseAbs().maxCoeff() <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("lossless single mode is diagonal and geometric") {
  for (double N : {0.1, 1.0, 3.0}) {
    const auto rho = joint_distribution(EffectiveSource{N, 1.0, 1.0, 1.0}, 12);
    for (int n = 0; n <= 12; ++n) {
      for (int m = 0; m <= 12; ++m) {
        CHECK(std::abs(rho.probs(n, m) - oracle::lossless_diagonal(N, n, m)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("worked example with one empty arm") {
  const auto rho = joint_distribution(EffectiveSource{1.0, 1.0, 0.0, 1.0}, 4);
  for (int n = 0; n <= 4; ++n) {
    CHECK(std::abs(rho.probs(n, 0) - std::pow(0.5, n + 1)) <= 1e-15);
    for (int m = 1; m <= 4; ++m) CHECK(rho.probs(n, m) == 0.0);
  }
  CHECK(rho.tail_mass == doctest::Approx(1.0 / 32.0));
}

TEST_CASE("random sources: normalization, marginals, symmetry") {
  RandomStream rng = make_stream(7, 100, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const double N = 0.01 + 2.0 * uniform01(rng);
    const double eta = uniform01(rng);
    const double eta_p = uniform01(rng);
    const double M = 1.0 + 10.0 * uniform01(rng);
    const EffectiveSource src{N, eta, eta_p, M};
    const int n_max = 10 + static_cast<int>(20 * uniform01(rng));
    const auto rho = joint_distribution(src, n_max);

    CAPTURE(N);
    CAPTURE(eta);
    CAPTURE(eta_p);
    CAPTURE(M);
    CHECK((rho.probs.array() >= 0.0).all());
    CHECK(rho.tail_mass >= 0.0);
    CHECK(std::abs(rho.probs.sum() + rho.tail_mass - 1.0) <= 1e-12);

    // The a-marginal truncated in m differs from the full marginal by the
    // mass at m > n_max; a large order makes that negligible.
    const auto wide = joint_distribution(src, 400);
    const Matrix rows = wide.probs.rowwise().sum();
    for (int n = 0; n <= 8; ++n) {
      CHECK(std::abs(rows(n) - oracle::marginal(N, eta, M, n)) <= 1e-11);
    }

    const auto swapped = joint_distribution(EffectiveSource{N, eta_p, eta, M}, n_max);
    CHECK((swapped.probs - rho.probs.transpose()).cwiseAbs().maxCoeff() <= 1e-14);

    // Generating function as a power series in x, y <= 1/2.
    const double x = 0.5 * uniform01(rng);
    const double y = 0.5 * uniform01(rng);
    long double series = 0.0L;
    for (int n = 0; n <= wide.n_max(); ++n) {
      for (int m = 0; m <= wide.n_max(); ++m) series += wide.probs(n, m) * std::pow(x, n) * std::pow(y, m);
    }
    CHECK(static_cast<double>(series) == doctest::Approx(generating_fn_value(src, x, y)).epsilon(1e-10));
  }
}

TEST_CASE("generating function at one is one") {
  CHECK(generating_fn_value(EffectiveSource{0.7, 0.4, 0.9, 3.5}, 1.0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("automatic truncation meets the bound") {
  for (double N : {0.01, 0.5, 2.0}) {
    for (double M : {1.0, 16.6}) {
      const EffectiveSource src{N, 0.6, 0.8, M};
      const auto rho = joint_distribution_auto(src, 1e-10);
      CHECK(rho.tail_mass <= 1e-10);
      CHECK(truncation_order(src, 1e-10) == rho.n_max());
      if (rho.n_max() > 0) {
        CHECK(joint_distribution(src, rho.n_max() - 1).tail_mass > 0.0);
      }
    }
  }
}

TEST_CASE("explicit order below the bound throws a truncation error") {
  const EffectiveSource src{1.0, 1.0, 1.0, 1.0};
  try {
    joint_distribution(src, 2, 1e-10);
    FAIL("no throw");
  } catch (const TruncationError& e) {
    CHECK(e.kind() == ErrorKind::truncation);
    CHECK(e.tail_mass() == doctest::Approx(0.125));
  }
}

TEST_CASE("single filtered mode maps back to its own parameters") {
  RandomStream rng = make_stream(11, 100, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const double r = 0.05 + 1.5 * uniform01(rng);
    const double t = 0.1 + 0.9 * uniform01(rng);
    const double tp = 0.1 + 0.9 * uniform01(rng);
    // One strong mode plus dark modes carrying the rest of the filter norm.
    MultimodeSource src;
    src.r = {r, 0.0};
    src.t = {std::polar(t, 0.3), std::sqrt(1 - t * t)};
    src.t_prime = {std::polar(tp, -1.1), std::sqrt(1 - tp * tp)};
    const auto mom = reduce_multimode(src);
    CHECK(mom.n_bar == doctest::Approx(t * t * std::sinh(r) * std::sinh(r)));
    CHECK(std::abs(mom.S) == doctest::Approx(t * tp * std::sinh(2 * r) / 2));
    const auto eff = effective_params(mom, 1.0);
    CHECK(eff.N == doctest::Approx(std::sinh(r) * std::sinh(r)).epsilon(1e-9));
    CHECK(eff.eta == doctest::Approx(t * t).epsilon(1e-9));
    CHECK(eff.eta_prime == doctest::Approx(tp * tp).epsilon(1e-9));
  }
}

TEST_CASE("moment mapping rejects classical and unphysical moments") {
  CHECK(kind_of([] { effective_params(ReducedMoments{0.2, 0.3, 0.0}, 1.0); }) ==
        ErrorKind::classical_regime);
  CHECK(kind_of([] { effective_params(ReducedMoments{0.01, 0.01, 0.2}, 1.0); }) ==
        ErrorKind::physicality);
  CHECK(kind_of([] { effective_params(ReducedMoments{0.0, 0.1, 0.1}, 1.0); }) ==
        ErrorKind::physicality);
}

TEST_CASE("input validation") {
  CHECK(kind_of([] { joint_distribution(EffectiveSource{0.0, 1, 1, 1}, 4); }) == ErrorKind::validation);
  CHECK(kind_of([] { joint_distribution(EffectiveSource{1.0, 1.5, 1, 1}, 4); }) == ErrorKind::validation);
  CHECK(kind_of([] { joint_distribution(EffectiveSource{1.0, 1, 1, 0.5}, 4); }) == ErrorKind::validation);
  CHECK(kind_of([] { joint_distribution(EffectiveSource{1.0, 1, 1, 1}, -1); }) == ErrorKind::validation);
  CHECK(kind_of([] { joint_distribution_oracle(EffectiveSource{1.0, 1, 1, 1.5}, 4); }) ==
        ErrorKind::validation);
  MultimodeSource bad;
  bad.r = {0.1};
  bad.t = {0.5};
  bad.t_prime = {1.0};
  CHECK(kind_of([&] { reduce_multimode(bad); }) == ErrorKind::validation);
  CHECK(kind_of([] { JointDistribution::from_probs(Matrix::Constant(2, 2, 0.3)); }) ==
        ErrorKind::validation);
}

TEST_CASE("perturbative contamination fraction for weak pumping") {
  for (double eta : {0.3, 0.5, 0.9}) {
    const double N = 1e-4;
    const double fraction = perturbative_contamination_fraction(EffectiveSource{N, eta, eta, 1.0});
    const double expected = 2.0 * (1.0 - eta) * (1.0 - eta) * N;
    CHECK(std::abs(fraction - expected) <= 0.01 * expected);
  }
}
