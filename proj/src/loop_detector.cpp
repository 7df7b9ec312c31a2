#include "spdc/loop_detector.hpp"

#include <bit>
#include <cmath>
#include <numeric>

#include "spdc/error.hpp"

namespace spdc {

namespace {
constexpr double weight_sum_tol = 1e-12;
constexpr double column_sum_tol = 1e-9;
}  // namespace

PathWeights::PathWeights(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty() || weights_.size() > static_cast<std::size_t>(max_bins)) {
    fail(ErrorKind::validation,
         "path weights need between 1 and " + std::to_string(max_bins) + " entries");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) fail(ErrorKind::validation, "path weights must be >= 0");
    sum += w;
    cumulative_.push_back(sum);
  }
  if (std::abs(sum - 1.0) > weight_sum_tol) {
    fail(ErrorKind::validation, "path weights must sum to 1");
  }
}

PathWeights PathWeights::uniform(int bins) {
  if (bins < 1) fail(ErrorKind::validation, "need at least one path");
  return PathWeights(std::vector<double>(static_cast<std::size_t>(bins), 1.0 / bins));
}

int PathWeights::path_for(double u) const {
  for (std::size_t i = 0; i < cumulative_.size(); ++i) {
    if (u < cumulative_[i]) return static_cast<int>(i);
  }
  // u landed in the rounding gap above the last partial sum.
  for (std::size_t i = weights_.size(); i-- > 0;) {
    if (weights_[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

void DetectorResponse::validate() const {
  if (P.rows() < 2 || P.cols() < 1) fail(ErrorKind::validation, "response matrix too small");
  if (P.rows() - 1 > max_bins) fail(ErrorKind::validation, "response matrix has too many bins");
  for (Eigen::Index n = 0; n < P.cols(); ++n) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < P.rows(); ++k) {
      const double v = P(k, n);
      if (!(v >= 0.0 && v <= 1.0 + 1e-12)) fail(ErrorKind::validation, "response entries must lie in [0, 1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > column_sum_tol) {
      fail(ErrorKind::validation, "response column " + std::to_string(n) + " does not sum to 1");
    }
  }
  if (weights && weights->bins() != bins()) {
    fail(ErrorKind::validation, "response weights disagree with matrix bin count");
  }
}

DetectorResponse response_matrix(const PathWeights& weights, int n_max) {
  if (n_max < 0) fail(ErrorKind::validation, "n_max must be >= 0");
  const int bins = weights.bins();
  const std::size_t states = std::size_t{1} << bins;

  // Markov chain over the set of occupied paths: each photon adds path i
  // with probability w_i. Every update is a sum of nonnegative terms.
  std::vector<double> current(states, 0.0);
  std::vector<double> next(states, 0.0);
  current[0] = 1.0;

  DetectorResponse out;
  out.P = Matrix::Zero(bins + 1, n_max + 1);
  out.P(0, 0) = 1.0;
  for (int n = 1; n <= n_max; ++n) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t set = 0; set < states; ++set) {
      const double mass = current[set];
      if (mass == 0.0) continue;
      for (int i = 0; i < bins; ++i) next[set | (std::size_t{1} << i)] += mass * weights[i];
    }
    current.swap(next);
    for (std::size_t set = 0; set < states; ++set) {
      out.P(std::popcount(set), n) += current[set];
    }
  }
  out.weights = weights;
  return out;
}

std::uint32_t occupied_paths(int n, const PathWeights& weights, RandomStream& rng) {
  std::uint32_t mask = 0;
  for (int i = 0; i < n; ++i) mask |= std::uint32_t{1} << weights.path_for(uniform01(rng));
  return mask;
}

int simulate_clicks(int n, const PathWeights& weights, RandomStream& rng) {
  return std::popcount(occupied_paths(n, weights, rng));
}

CalibrationReport calibrate(std::span<const std::int64_t> bin_counts) {
  if (bin_counts.empty() || bin_counts.size() > static_cast<std::size_t>(max_bins)) {
    fail(ErrorKind::validation, "calibration needs between 1 and " + std::to_string(max_bins) + " bins");
  }
  std::int64_t total = 0;
  for (auto c : bin_counts) {
    if (c < 0) fail(ErrorKind::validation, "calibration counts must be >= 0");
    total += c;
  }
  if (total == 0) fail(ErrorKind::degenerate_input, "calibration counts are all zero");

  std::vector<double> w;
  std::vector<double> se;
  const double n = static_cast<double>(total);
  for (auto c : bin_counts) {
    const double p = static_cast<double>(c) / n;
    w.push_back(p);
    se.push_back(std::sqrt(p * (1.0 - p) / n));
  }
  // Renormalize away the last-ulp drift of the division.
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= sum;
  return CalibrationReport{PathWeights(std::move(w)), std::move(se), total};
}

ClickDistribution apply_response(const JointDistribution& rho, const DetectorResponse& resp_a,
                                 const DetectorResponse& resp_b) {
  const int size = rho.n_max() + 1;
  if (resp_a.n_max() < rho.n_max() || resp_b.n_max() < rho.n_max()) {
    fail(ErrorKind::validation, "response matrices cover n <= " +
                                    std::to_string(std::min(resp_a.n_max(), resp_b.n_max())) +
                                    " but rho extends to n_max=" + std::to_string(rho.n_max()));
  }
  ClickDistribution out;
  out.p = resp_a.P.leftCols(size) * rho.probs * resp_b.P.leftCols(size).transpose();
  out.deficit = rho.tail_mass;
  return out;
}

}  // namespace spdc
