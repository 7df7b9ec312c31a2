#pragma once

#include <cstdint>
#include <vector>

#include "spdc/loop_detector.hpp"
#include "spdc/model.hpp"
#include "spdc/random.hpp"

namespace spdc {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Joint click counts f(k, l) collected over a number of pulses.
struct ClickHistogram {
  CountMatrix counts;
  std::int64_t pulses = 0;

  int bins() const { return static_cast<int>(counts.rows()) - 1; }
  std::int64_t total() const { return counts.sum(); }

  void validate() const;
};

struct EmOptions {
  double tol = 1e-10;      // stop once the relative log-likelihood gain drops below this
  int max_iter = 100000;
};

struct ReconstructionResult {
  JointDistribution rho;
  std::vector<double> log_likelihood_trace;  // one entry per iterate, starting point included
  int iterations = 0;
  bool converged = false;

  double final_log_likelihood() const { return log_likelihood_trace.back(); }
};

/// Sum over cells of f(k, l) ln p(k, l), with p the click law of rho.
double log_likelihood(const ClickHistogram& hist, const JointDistribution& rho,
                      const DetectorResponse& resp_a, const DetectorResponse& resp_b);

/// Expectation-maximization inversion of p = P rho P'^T from the uniform start.
ReconstructionResult em_reconstruct(const ClickHistogram& hist, const DetectorResponse& resp_a,
                                    const DetectorResponse& resp_b, int n_max,
                                    const EmOptions& options = {});

/// Same iteration on real-valued nonnegative cell weights (normalized
/// internally) from an arbitrary strictly positive start.
ReconstructionResult em_reconstruct_weights(const Matrix& weights, const DetectorResponse& resp_a,
                                            const DetectorResponse& resp_b, Matrix start,
                                            const EmOptions& options = {});

/// One multiplicative update applied to rho against normalized frequencies.
Matrix em_step(const Matrix& frequencies, const Matrix& rho, const DetectorResponse& resp_a,
               const DetectorResponse& resp_b);

/// Nonparametric bootstrap replica: resample total() pulses from the
/// empirical cell frequencies.
ClickHistogram resample(const ClickHistogram& hist, RandomStream& rng);

}  // namespace spdc
