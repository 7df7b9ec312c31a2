#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "spdc/error.hpp"
#include "spdc/reconstruction.hpp"

using namespace spdc;

namespace {

// Multinomial sample of `pulses` draws from a normalized click law.
ClickHistogram sample_histogram(const Matrix& p, std::int64_t pulses, RandomStream& rng) {
  ClickHistogram hist;
  hist.pulses = pulses;
  hist.counts = CountMatrix::Zero(p.rows(), p.cols());
  std::vector<double> cdf;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) cdf.push_back(acc += p.data()[i]);
  for (std::int64_t i = 0; i < pulses; ++i) {
    const double u = uniform01(rng) * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = std::min<std::ptrdiff_t>(it - cdf.begin(), p.size() - 1);
    ++hist.counts.data()[idx];
  }
  return hist;
}

double total_variation(const Matrix& a, const Matrix& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

}  // namespace

TEST_CASE("log-likelihood never decreases") {
  RandomStream rng = make_stream(21, 300, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int B = 2 + static_cast<int>(7 * uniform01(rng));
    const int n_max = 1 + static_cast<int>(B * uniform01(rng));
    const auto ra = response_matrix(oracle::random_weights(B, rng), n_max);
    const auto rb = response_matrix(oracle::random_weights(B, rng), n_max);
    const Matrix truth = oracle::random_stochastic(n_max + 1, n_max + 1, rng);
    const Matrix p = ra.P * truth * rb.P.transpose();
    const auto hist = sample_histogram(p, 2000, rng);
    const auto fit = em_reconstruct(hist, ra, rb, n_max, EmOptions{1e-12, 500});
    const auto& trace = fit.log_likelihood_trace;
    CHECK(trace.size() == static_cast<std::size_t>(fit.iterations) + 1);
    for (std::size_t i = 1; i < trace.size(); ++i) {
      CHECK(trace[i] >= trace[i - 1] - 1e-10);
    }
    CHECK(fit.final_log_likelihood() == doctest::Approx(log_likelihood(hist, fit.rho, ra, rb)));
  }
}

TEST_CASE("noiseless data are inverted exactly") {
  RandomStream rng = make_stream(21, 300, 1);
  const auto ra = response_matrix(PathWeights::uniform(8), 3);
  const auto rb = response_matrix(PathWeights::uniform(8), 3);
  for (int trial = 0; trial < 3; ++trial) {
    const Matrix truth = oracle::random_stochastic(4, 4, rng);
    const Matrix p = ra.P * truth * rb.P.transpose();
    const auto fit = em_reconstruct_weights(p, ra, rb, Matrix::Constant(4, 4, 1.0), EmOptions{0.0, 200000});
    CAPTURE(fit.iterations);
    CHECK(total_variation(fit.rho.probs, truth) <= 1e-6);
  }
}

TEST_CASE("the true distribution is a fixed point") {
  RandomStream rng = make_stream(21, 300, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const int B = 3 + static_cast<int>(6 * uniform01(rng));
    const int n_max = 1 + static_cast<int>((B - 1) * uniform01(rng));
    const auto ra = response_matrix(oracle::random_weights(B, rng), n_max);
    const auto rb = response_matrix(oracle::random_weights(B, rng), n_max);
    const Matrix truth = oracle::random_stochastic(n_max + 1, n_max + 1, rng);
    const Matrix p = ra.P * truth * rb.P.transpose();
    CHECK((em_step(p, truth, ra, rb) - truth).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("observed cells outside the model support") {
  const auto ra = response_matrix(PathWeights::uniform(4), 1);
  ClickHistogram hist;
  hist.pulses = 10;
  hist.counts = CountMatrix::Zero(5, 5);
  hist.counts(2, 0) = 3;
  hist.counts(0, 0) = 7;
  try {
    em_reconstruct(hist, ra, ra, 1);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::support);
  }
}

TEST_CASE("shape and coverage checks") {
  const auto r4 = response_matrix(PathWeights::uniform(4), 4);
  const auto r8 = response_matrix(PathWeights::uniform(8), 4);
  ClickHistogram hist;
  hist.pulses = 100;
  hist.counts = CountMatrix::Constant(5, 5, 1);
  CHECK_THROWS_AS(em_reconstruct(hist, r8, r4, 2), Error);
  CHECK_THROWS_AS(em_reconstruct(hist, r4, r4, 5), Error);
  CHECK_NOTHROW(em_reconstruct(hist, r4, r4, 4, EmOptions{1e-6, 50}));
  hist.counts(0, 0) = -1;
  CHECK_THROWS_AS(em_reconstruct(hist, r4, r4, 2), Error);
  hist.counts.setZero();
  try {
    em_reconstruct(hist, r4, r4, 2);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_input);
  }
}

TEST_CASE("iteration cap is reported as not converged") {
  RandomStream rng = make_stream(21, 300, 3);
  const auto r = response_matrix(PathWeights::uniform(8), 4);
  const Matrix truth = oracle::random_stochastic(5, 5, rng);
  const auto hist = sample_histogram(r.P * truth * r.P.transpose(), 5000, rng);
  const auto fit = em_reconstruct(hist, r, r, 4, EmOptions{0.0, 3});
  CHECK_FALSE(fit.converged);
  CHECK(fit.iterations == 3);
  CHECK(std::abs(fit.rho.probs.sum() - 1.0) <= 1e-12);
}

TEST_CASE("bootstrap resampling keeps the total and the support") {
  RandomStream rng = make_stream(21, 300, 4);
  ClickHistogram hist;
  hist.pulses = 1000;
  hist.counts = CountMatrix::Zero(3, 3);
  hist.counts << 500, 100, 0, 100, 200, 0, 0, 0, 50;
  Matrix mean = Matrix::Zero(3, 3);
  const int replicas = 2000;
  for (int i = 0; i < replicas; ++i) {
    const auto r = resample(hist, rng);
    CHECK(r.total() == hist.total());
    CHECK(r.counts(0, 2) == 0);
    mean += r.counts.cast<double>();
  }
  mean /= replicas;
  CHECK(mean(0, 0) == doctest::Approx(500).epsilon(0.01));
  CHECK(mean(2, 2) == doctest::Approx(50).epsilon(0.03));
}
