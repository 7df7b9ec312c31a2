#include "spdc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "spdc/error.hpp"

namespace spdc {

namespace {

enum StreamPurpose : std::uint32_t {
  main_run = 1,
  calibration_run = 2,
  bootstrap_run = 3,
};

// Runs task(index, worker) for index in [0, count) on up to `threads`
// workers. Callers make results independent of which worker ran what.
void parallel_for(std::int64_t count, int threads,
                  const std::function<void(std::int64_t, int)>& task) {
  const int workers = static_cast<int>(std::clamp<std::int64_t>(threads, 1, std::max<std::int64_t>(count, 1)));
  if (workers == 1) {
    for (std::int64_t i = 0; i < count; ++i) task(i, 0);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = next++; i < count; i = next++) task(i, w);
    });
  }
  for (auto& t : pool) t.join();
}

std::int64_t block_count(std::int64_t pulses) {
  return (pulses + pulses_per_block - 1) / pulses_per_block;
}

std::int64_t block_size(std::int64_t block, std::int64_t pulses) {
  return std::min(pulses_per_block, pulses - block * pulses_per_block);
}

double sample_sd(const std::vector<double>& values) {
  if (values.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::string stage_failure(const char* stage, const Error& e) {
  return std::string(stage) + ": " + to_string(e.kind()) + ": " + e.what();
}

}  // namespace

void ExperimentConfig::validate() const {
  source.validate();
  source.integer_modes();
  if (pulses <= 0) fail(ErrorKind::validation, "pulses must be > 0");
  if (calibration_pulses <= 0) fail(ErrorKind::validation, "calibration_pulses must be > 0");
  if (!std::isfinite(calibration_N) || !(calibration_N > 0.0)) {
    fail(ErrorKind::validation, "calibration_N must be > 0");
  }
  if (n_max < -1) fail(ErrorKind::validation, "n_max must be >= 0 (or -1 for the bin count)");
  if (bootstrap < 0) fail(ErrorKind::validation, "bootstrap must be >= 0");
  if (!(em.tol >= 0.0)) fail(ErrorKind::validation, "tol must be >= 0");
  if (em.max_iter < 0) fail(ErrorKind::validation, "max_iter must be >= 0");
}

std::vector<std::string> ExperimentConfig::warnings() const {
  std::vector<std::string> out;
  const double single_rate =
      calibration_N * source.M * std::max(source.eta, source.eta_prime);
  if (single_rate > 0.01) {
    std::ostringstream os;
    os << "calibration intensity N*M*eta = " << single_rate
       << " exceeds 0.01; multi-photon events bias the path weights";
    out.push_back(os.str());
  }
  const int order = reconstruction_order();
  if (order > std::max(weights_a.bins(), weights_b.bins())) {
    out.push_back("n_max exceeds the bin count; photon numbers above it are not identifiable");
  }
  return out;
}

int ExperimentConfig::reconstruction_order() const {
  return n_max >= 0 ? n_max : std::max(weights_a.bins(), weights_b.bins());
}

PulseSampler::PulseSampler(const EffectiveSource& src)
    : modes_(0), q_(0), log_q_(0), eta_(src.eta), eta_prime_(src.eta_prime) {
  src.validate();
  modes_ = src.integer_modes();
  q_ = src.N / (src.N + 1.0);
  log_q_ = std::log(q_);
}

std::pair<int, int> PulseSampler::operator()(RandomStream& rng) const {
  int n = 0;
  int m = 0;
  for (int mode = 0; mode < modes_; ++mode) {
    // Inverse CDF of P(j >= k) = q^k; u in (0, 1].
    const double u = 1.0 - uniform01(rng);
    if (u > q_) continue;
    const int pairs = static_cast<int>(std::floor(std::log(u) / log_q_));
    for (int p = 0; p < pairs; ++p) {
      if (uniform01(rng) < eta_) ++n;
      if (uniform01(rng) < eta_prime_) ++m;
    }
  }
  return {n, m};
}

std::pair<int, int> sample_pulse(const EffectiveSource& src, RandomStream& rng) {
  return PulseSampler(src)(rng);
}

ClickHistogram simulate_experiment(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  const PulseSampler sampler(cfg.source);
  const int rows = cfg.weights_a.bins() + 1;
  const int cols = cfg.weights_b.bins() + 1;
  const std::int64_t blocks = block_count(cfg.pulses);
  const int workers = std::max(1, threads);

  std::vector<CountMatrix> partial(static_cast<std::size_t>(workers), CountMatrix::Zero(rows, cols));
  parallel_for(blocks, workers, [&](std::int64_t block, int worker) {
    RandomStream rng = make_stream(cfg.seed, main_run, static_cast<std::uint64_t>(block));
    CountMatrix& counts = partial[static_cast<std::size_t>(worker)];
    const std::int64_t size = block_size(block, cfg.pulses);
    for (std::int64_t i = 0; i < size; ++i) {
      const auto [n, m] = sampler(rng);
      const int k = simulate_clicks(n, cfg.weights_a, rng);
      const int l = simulate_clicks(m, cfg.weights_b, rng);
      ++counts(k, l);
    }
  });

  ClickHistogram out;
  out.pulses = cfg.pulses;
  out.counts = CountMatrix::Zero(rows, cols);
  for (const auto& c : partial) out.counts += c;
  return out;
}

std::array<std::vector<std::int64_t>, 2> simulate_calibration(const ExperimentConfig& cfg,
                                                              int threads) {
  cfg.validate();
  EffectiveSource dim = cfg.source;
  dim.N = cfg.calibration_N;
  const PulseSampler sampler(dim);
  const auto bins_a = static_cast<std::size_t>(cfg.weights_a.bins());
  const auto bins_b = static_cast<std::size_t>(cfg.weights_b.bins());
  const std::int64_t blocks = block_count(cfg.calibration_pulses);
  const int workers = std::max(1, threads);

  using Tally = std::array<std::vector<std::int64_t>, 2>;
  std::vector<Tally> partial(static_cast<std::size_t>(workers),
                             Tally{std::vector<std::int64_t>(bins_a), std::vector<std::int64_t>(bins_b)});
  parallel_for(blocks, workers, [&](std::int64_t block, int worker) {
    RandomStream rng = make_stream(cfg.seed, calibration_run, static_cast<std::uint64_t>(block));
    Tally& tally = partial[static_cast<std::size_t>(worker)];
    const std::int64_t size = block_size(block, cfg.calibration_pulses);
    for (std::int64_t i = 0; i < size; ++i) {
      const auto [n, m] = sampler(rng);
      // Every occupied path is one time-resolved click in its bin.
      for (std::uint32_t mask = occupied_paths(n, cfg.weights_a, rng); mask != 0; mask &= mask - 1) {
        ++tally[0][static_cast<std::size_t>(std::countr_zero(mask))];
      }
      for (std::uint32_t mask = occupied_paths(m, cfg.weights_b, rng); mask != 0; mask &= mask - 1) {
        ++tally[1][static_cast<std::size_t>(std::countr_zero(mask))];
      }
    }
  });

  Tally out{std::vector<std::int64_t>(bins_a), std::vector<std::int64_t>(bins_b)};
  for (const auto& t : partial) {
    for (std::size_t i = 0; i < bins_a; ++i) out[0][i] += t[0][i];
    for (std::size_t i = 0; i < bins_b; ++i) out[1][i] += t[1][i];
  }
  return out;
}

BootstrapSummary bootstrap_errors(const ClickHistogram& hist, const DetectorResponse& resp_a,
                                  const DetectorResponse& resp_b, const ReconstructionResult& fit,
                                  const ExperimentConfig& cfg, int threads) {
  BootstrapSummary out;
  out.replicas = cfg.bootstrap;
  struct Replica {
    bool ok = false;
    double M_hat = 0, eta_hat = 0, eps2 = 0, eps4 = 0;
  };
  std::vector<Replica> replicas(static_cast<std::size_t>(cfg.bootstrap));

  // Warm start near the point estimate; the uniform admixture keeps every
  // cell reachable since EM never revives an exact zero.
  const Matrix& best = fit.rho.probs;
  const Matrix start = best + Matrix::Constant(best.rows(), best.cols(), 1e-3 / best.size());

  parallel_for(cfg.bootstrap, threads, [&](std::int64_t r, int) {
    RandomStream rng = make_stream(cfg.seed, bootstrap_run, static_cast<std::uint64_t>(r));
    const ClickHistogram replica = resample(hist, rng);
    try {
      const auto refit =
          em_reconstruct_weights(replica.counts.cast<double>(), resp_a, resp_b, start, cfg.em);
      const auto ch = characterize(refit.rho);
      if (!ch.M_hat.ok() || !ch.eta_hat.ok() || !ch.eps2.ok() || !ch.eps4.ok()) return;
      replicas[static_cast<std::size_t>(r)] = {true, ch.M_hat.estimate->value,
                                               ch.eta_hat.estimate->value, ch.eps2.estimate->value,
                                               ch.eps4.estimate->value};
    } catch (const Error&) {
    }
  });

  std::vector<double> m, e, e2, e4;
  for (const auto& r : replicas) {
    if (!r.ok) {
      ++out.failed;
      continue;
    }
    m.push_back(r.M_hat);
    e.push_back(r.eta_hat);
    e2.push_back(r.eps2);
    e4.push_back(r.eps4);
  }
  out.M_hat_sd = sample_sd(m);
  out.eta_hat_sd = sample_sd(e);
  out.eps2_sd = sample_sd(e2);
  out.eps4_sd = sample_sd(e4);
  return out;
}

RunReport run_full(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  RunReport report;
  report.config = cfg;
  report.warnings = cfg.warnings();

  try {
    report.calibration_counts = simulate_calibration(cfg, threads);
    report.calibration_a = calibrate(report.calibration_counts[0]);
    report.calibration_b = calibrate(report.calibration_counts[1]);
    const int order = cfg.reconstruction_order();
    report.response_a = response_matrix(report.calibration_a->weights, order);
    report.response_b = response_matrix(report.calibration_b->weights, order);
  } catch (const Error& e) {
    report.failures.push_back(stage_failure("calibration", e));
  }

  report.histogram = simulate_experiment(cfg, threads);
  if (!report.response_a || !report.response_b) return report;

  try {
    report.reconstruction = em_reconstruct(report.histogram, *report.response_a,
                                           *report.response_b, cfg.reconstruction_order(), cfg.em);
    if (!report.reconstruction->converged) {
      report.warnings.push_back("EM stopped at max_iter before reaching the tolerance");
    }
  } catch (const Error& e) {
    report.failures.push_back(stage_failure("reconstruction", e));
    return report;
  }

  report.characterization = characterize(report.reconstruction->rho);

  if (cfg.bootstrap > 0) {
    report.bootstrap = bootstrap_errors(report.histogram, *report.response_a, *report.response_b,
                                        *report.reconstruction, cfg, threads);
  }
  return report;
}

}  // namespace spdc
