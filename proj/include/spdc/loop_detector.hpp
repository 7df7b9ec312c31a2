#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spdc/model.hpp"
#include "spdc/random.hpp"

namespace spdc {

inline constexpr int default_bins = 8;
inline constexpr int max_bins = 16;

/// Probability that a photon entering the loop leaves through each path.
class PathWeights {
 public:
  explicit PathWeights(std::vector<double> weights);

  static PathWeights uniform(int bins = default_bins);

  int bins() const { return static_cast<int>(weights_.size()); }
  double operator[](int i) const { return weights_[static_cast<std::size_t>(i)]; }
  std::span<const double> values() const { return weights_; }

  // Path index for a uniform draw u in [0, 1).
  int path_for(double u) const;

 private:
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

/// P(k, n): probability of k clicks given n photons, k <= B, n <= n_max.
struct DetectorResponse {
  Matrix P;
  std::optional<PathWeights> weights;

  int bins() const { return static_cast<int>(P.rows()) - 1; }
  int n_max() const { return static_cast<int>(P.cols()) - 1; }

  void validate() const;
};

/// Joint click law p(k, l); deficit is the mass lost to photon-number
/// truncation of the input distribution.
struct ClickDistribution {
  Matrix p;
  double deficit = 0.0;
};

struct CalibrationReport {
  PathWeights weights;
  std::vector<double> std_errors;
  std::int64_t total_counts = 0;
};

DetectorResponse response_matrix(const PathWeights& weights, int n_max);

/// Bit mask of the paths hit by n photons.
std::uint32_t occupied_paths(int n, const PathWeights& weights, RandomStream& rng);

/// Number of paths hit by n photons, i.e. the click count.
int simulate_clicks(int n, const PathWeights& weights, RandomStream& rng);

/// Weight estimate from single-photon per-bin tallies taken at low intensity.
CalibrationReport calibrate(std::span<const std::int64_t> bin_counts);

ClickDistribution apply_response(const JointDistribution& rho, const DetectorResponse& resp_a,
                                 const DetectorResponse& resp_b);

}  // namespace spdc
