#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spdc/analysis.hpp"
#include "spdc/loop_detector.hpp"
#include "spdc/model.hpp"
#include "spdc/random.hpp"
#include "spdc/reconstruction.hpp"

namespace spdc {

struct ExperimentConfig {
  EffectiveSource source{0.01, 0.05, 0.05, 1.0};  // M must be an integer
  std::int64_t pulses = 10'000'000;
  PathWeights weights_a = PathWeights::uniform();
  PathWeights weights_b = PathWeights::uniform();
  std::uint64_t seed = 1;
  std::int64_t calibration_pulses = 1'000'000;
  double calibration_N = 1e-3;
  int n_max = -1;  // reconstruction order; -1 means max(B, B')
  EmOptions em;
  int bootstrap = 100;

  void validate() const;
  std::vector<std::string> warnings() const;
  int reconstruction_order() const;
};

/// Draws per-pulse photon numbers (n, m): M geometric pair counts, each
/// thinned binomially per arm.
class PulseSampler {
 public:
  explicit PulseSampler(const EffectiveSource& src);

  std::pair<int, int> operator()(RandomStream& rng) const;

 private:
  int modes_;
  double q_;
  double log_q_;
  double eta_;
  double eta_prime_;
};

std::pair<int, int> sample_pulse(const EffectiveSource& src, RandomStream& rng);

/// Pulses are cut into fixed blocks, each with its own stream derived from
/// (seed, block), so the result does not depend on the thread count.
inline constexpr std::int64_t pulses_per_block = 1 << 16;

ClickHistogram simulate_experiment(const ExperimentConfig& cfg, int threads = 1);

/// Per-bin click tallies for both arms at the calibration intensity.
std::array<std::vector<std::int64_t>, 2> simulate_calibration(const ExperimentConfig& cfg,
                                                              int threads = 1);

struct BootstrapSummary {
  int replicas = 0;
  int failed = 0;
  // Standard deviations across replicas, NaN when fewer than two succeeded.
  double M_hat_sd = 0.0;
  double eta_hat_sd = 0.0;
  double eps2_sd = 0.0;
  double eps4_sd = 0.0;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<std::string> warnings;
  std::array<std::vector<std::int64_t>, 2> calibration_counts;
  std::optional<CalibrationReport> calibration_a;
  std::optional<CalibrationReport> calibration_b;
  std::optional<DetectorResponse> response_a;
  std::optional<DetectorResponse> response_b;
  ClickHistogram histogram;
  std::optional<ReconstructionResult> reconstruction;
  std::optional<SourceCharacterization> characterization;
  std::optional<BootstrapSummary> bootstrap;
  std::vector<std::string> failures;  // "<stage>: <kind>: <message>"
};

/// Calibration run, weight estimates, main run, EM reconstruction,
/// characterization and bootstrap errors. Stage failures end up in
/// report.failures with whatever was finished before them.
RunReport run_full(const ExperimentConfig& cfg, int threads = 1);

BootstrapSummary bootstrap_errors(const ClickHistogram& hist, const DetectorResponse& resp_a,
                                  const DetectorResponse& resp_b, const ReconstructionResult& fit,
                                  const ExperimentConfig& cfg, int threads = 1);

}  // namespace spdc
