#include "spdc/reconstruction.hpp"

#include <cmath>

#include "spdc/error.hpp"

namespace spdc {

namespace {

void check_shapes(Eigen::Index rows, Eigen::Index cols, const DetectorResponse& resp_a,
                  const DetectorResponse& resp_b) {
  if (rows != resp_a.bins() + 1 || cols != resp_b.bins() + 1) {
    fail(ErrorKind::validation, "histogram is " + std::to_string(rows) + "x" + std::to_string(cols) +
                                    " but responses have B=" + std::to_string(resp_a.bins()) +
                                    " and B'=" + std::to_string(resp_b.bins()));
  }
}

void check_coverage(int n_max, const DetectorResponse& resp_a, const DetectorResponse& resp_b) {
  if (resp_a.n_max() < n_max || resp_b.n_max() < n_max) {
    fail(ErrorKind::validation,
         "response matrices do not cover photon numbers up to n_max=" + std::to_string(n_max));
  }
}

Matrix click_law(const Matrix& rho, const DetectorResponse& resp_a, const DetectorResponse& resp_b) {
  const auto size = rho.rows();
  return resp_a.P.leftCols(size) * rho * resp_b.P.leftCols(size).transpose();
}

double weighted_log_sum(const Matrix& weights, const Matrix& p) {
  long double acc = 0.0L;
  for (Eigen::Index k = 0; k < weights.rows(); ++k) {
    for (Eigen::Index l = 0; l < weights.cols(); ++l) {
      const double f = weights(k, l);
      if (f == 0.0) continue;
      if (!(p(k, l) > 0.0)) {
        fail(ErrorKind::support, "cell (" + std::to_string(k) + "," + std::to_string(l) +
                                     ") is observed but has zero model probability");
      }
      acc += static_cast<long double>(f) * std::log(p(k, l));
    }
  }
  return static_cast<double>(acc);
}

Matrix update_factors(const Matrix& frequencies, const Matrix& p, const DetectorResponse& resp_a,
                      const DetectorResponse& resp_b, Eigen::Index size) {
  Matrix ratio = Matrix::Zero(p.rows(), p.cols());
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    for (Eigen::Index l = 0; l < p.cols(); ++l) {
      if (frequencies(k, l) == 0.0) continue;
      if (!(p(k, l) > 0.0)) {
        fail(ErrorKind::support, "cell (" + std::to_string(k) + "," + std::to_string(l) +
                                     ") is observed but has zero model probability");
      }
      ratio(k, l) = frequencies(k, l) / p(k, l);
    }
  }
  return resp_a.P.leftCols(size).transpose() * ratio * resp_b.P.leftCols(size);
}

}  // namespace

void ClickHistogram::validate() const {
  if (counts.rows() < 2 || counts.cols() < 2) fail(ErrorKind::validation, "histogram too small");
  if (pulses <= 0) fail(ErrorKind::validation, "histogram needs pulses > 0");
  if ((counts.array() < 0).any()) fail(ErrorKind::validation, "histogram counts must be >= 0");
  if (total() > pulses) fail(ErrorKind::validation, "histogram holds more counts than pulses");
}

double log_likelihood(const ClickHistogram& hist, const JointDistribution& rho,
                      const DetectorResponse& resp_a, const DetectorResponse& resp_b) {
  hist.validate();
  check_shapes(hist.counts.rows(), hist.counts.cols(), resp_a, resp_b);
  const auto p = apply_response(rho, resp_a, resp_b).p;
  return weighted_log_sum(hist.counts.cast<double>(), p);
}

Matrix em_step(const Matrix& frequencies, const Matrix& rho, const DetectorResponse& resp_a,
               const DetectorResponse& resp_b) {
  const Matrix p = click_law(rho, resp_a, resp_b);
  return rho.cwiseProduct(update_factors(frequencies, p, resp_a, resp_b, rho.rows()));
}

ReconstructionResult em_reconstruct_weights(const Matrix& weights, const DetectorResponse& resp_a,
                                            const DetectorResponse& resp_b, Matrix start,
                                            const EmOptions& options) {
  check_shapes(weights.rows(), weights.cols(), resp_a, resp_b);
  if (start.rows() != start.cols() || start.rows() == 0) {
    fail(ErrorKind::validation, "EM start must be a non-empty square matrix");
  }
  check_coverage(static_cast<int>(start.rows()) - 1, resp_a, resp_b);
  if ((weights.array() < 0.0).any()) fail(ErrorKind::validation, "cell weights must be >= 0");
  const double total = weights.sum();
  if (!(total > 0.0)) fail(ErrorKind::degenerate_input, "histogram is empty");
  if (!(start.array() >= 0.0).all() || !(start.sum() > 0.0)) {
    fail(ErrorKind::validation, "EM start must be nonnegative with positive mass");
  }
  if (options.max_iter < 0) fail(ErrorKind::validation, "max_iter must be >= 0");

  const Matrix frequencies = weights / total;
  Matrix rho = start / start.sum();

  ReconstructionResult out;
  for (int iter = 0;; ++iter) {
    const Matrix p = click_law(rho, resp_a, resp_b);
    const double ll = weighted_log_sum(weights, p);
    if (!out.log_likelihood_trace.empty()) {
      const double previous = out.log_likelihood_trace.back();
      const double gain = ll - previous;
      const double relative = previous != 0.0 ? gain / std::abs(previous) : gain;
      out.log_likelihood_trace.push_back(ll);
      if (relative < options.tol) {
        out.converged = true;
        break;
      }
    } else {
      out.log_likelihood_trace.push_back(ll);
    }
    if (iter >= options.max_iter) break;

    rho = rho.cwiseProduct(update_factors(frequencies, p, resp_a, resp_b, rho.rows()));
    rho /= rho.sum();
    out.iterations = iter + 1;
  }
  out.rho = JointDistribution::from_probs(std::move(rho));
  return out;
}

ReconstructionResult em_reconstruct(const ClickHistogram& hist, const DetectorResponse& resp_a,
                                    const DetectorResponse& resp_b, int n_max,
                                    const EmOptions& options) {
  hist.validate();
  if (n_max < 0) fail(ErrorKind::validation, "n_max must be >= 0");
  check_shapes(hist.counts.rows(), hist.counts.cols(), resp_a, resp_b);
  check_coverage(n_max, resp_a, resp_b);
  if (hist.total() == 0) fail(ErrorKind::degenerate_input, "histogram is empty");
  const Matrix start = Matrix::Constant(n_max + 1, n_max + 1, 1.0);
  return em_reconstruct_weights(hist.counts.cast<double>(), resp_a, resp_b, start, options);
}

ClickHistogram resample(const ClickHistogram& hist, RandomStream& rng) {
  hist.validate();
  ClickHistogram out;
  out.pulses = hist.pulses;
  out.counts = CountMatrix::Zero(hist.counts.rows(), hist.counts.cols());
  // Multinomial draw as a chain of conditional binomials.
  std::int64_t remaining = hist.total();
  std::int64_t mass_left = hist.total();
  for (Eigen::Index k = 0; k < hist.counts.rows() && remaining > 0; ++k) {
    for (Eigen::Index l = 0; l < hist.counts.cols() && remaining > 0; ++l) {
      const std::int64_t cell = hist.counts(k, l);
      if (cell == 0) continue;
      std::int64_t draw = remaining;
      if (cell < mass_left) {
        std::binomial_distribution<std::int64_t> binom(
            remaining, static_cast<double>(cell) / static_cast<double>(mass_left));
        draw = binom(rng);
      }
      out.counts(k, l) = draw;
      remaining -= draw;
      mass_left -= cell;
    }
  }
  return out;
}

}  // namespace spdc
