#include "spdc/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

namespace spdc {

namespace {

// How the probability lost to truncation is put back before taking moments.
enum class Completion {
  renormalized,  // spread proportionally over the stored cells
  corner,        // placed at (n_max + 1, n_max + 1)
};

struct Moments {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double fact2_a = 0.0;  // <n (n - 1)>
  double fact2_b = 0.0;
};

struct Cell {
  int n;
  int m;
  double p;
};

// Visits every cell of the completed distribution with its probability.
void for_each_cell(const JointDistribution& rho, Completion completion,
                   const std::function<void(const Cell&)>& visit) {
  const int size = rho.n_max() + 1;
  double scale = 1.0;
  if (completion == Completion::renormalized) {
    const double stored = rho.probs.sum();
    scale = stored > 0.0 ? 1.0 / stored : 0.0;
  }
  for (int n = 0; n < size; ++n) {
    for (int m = 0; m < size; ++m) visit({n, m, rho.probs(n, m) * scale});
  }
  if (completion == Completion::corner && rho.tail_mass > 0.0) {
    visit({size, size, rho.tail_mass});
  }
}

Moments moments(const JointDistribution& rho, Completion completion) {
  long double ma = 0, mb = 0, fa = 0, fb = 0;
  for_each_cell(rho, completion, [&](const Cell& c) {
    ma += static_cast<long double>(c.p) * c.n;
    mb += static_cast<long double>(c.p) * c.m;
    fa += static_cast<long double>(c.p) * c.n * (c.n - 1);
    fb += static_cast<long double>(c.p) * c.m * (c.m - 1);
  });
  return {static_cast<double>(ma), static_cast<double>(mb), static_cast<double>(fa),
          static_cast<double>(fb)};
}

double mode_number_from(const Moments& mom, Arm arm) {
  const double mean = arm == Arm::a ? mom.mean_a : mom.mean_b;
  const double fact2 = arm == Arm::a ? mom.fact2_a : mom.fact2_b;
  if (!(mean > 0.0)) fail(ErrorKind::degenerate_input, "marginal mean is zero");
  // (Delta n)^2 - <n> = <n(n-1)> - <n>^2
  const double excess = fact2 - mean * mean;
  if (!(excess > 0.0)) {
    fail(ErrorKind::sub_poissonian, "marginal variance does not exceed its mean");
  }
  return mean * mean / excess;
}

double delta_squared_from(const JointDistribution& rho, Completion completion) {
  const Moments mom = moments(rho, completion);
  if (!(mom.mean_a > 0.0) || !(mom.mean_b > 0.0)) {
    fail(ErrorKind::degenerate_input, "delta statistic needs nonzero means in both arms");
  }
  // Summed cell by cell so that no large terms cancel.
  long double acc = 0.0L;
  for_each_cell(rho, completion, [&](const Cell& c) {
    const double diff = c.n / mom.mean_a - c.m / mom.mean_b;
    acc += static_cast<long double>(c.p) * diff * diff;
  });
  return static_cast<double>(acc) / (1.0 / mom.mean_a + 1.0 / mom.mean_b);
}

// Point value from the renormalized completion; half-width from the corner
// completion when the tail is large enough to matter.
Estimate with_tail_spread(const JointDistribution& rho,
                          const std::function<double(Completion)>& estimator) {
  Estimate out;
  out.value = estimator(Completion::renormalized);
  if (rho.tail_mass > significant_tail) {
    try {
      out.half_width = std::abs(estimator(Completion::corner) - out.value);
    } catch (const Error&) {
      out.half_width = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

Estimate contamination(const JointDistribution& rho, int pairs) {
  const int threshold = 2 * pairs;
  const int size = rho.n_max() + 1;
  const double target = pairs < size ? rho.probs(pairs, pairs) : 0.0;
  long double sector = 0.0L;
  for (int n = 0; n < size; ++n) {
    for (int m = std::max(0, threshold - n); m < size; ++m) sector += rho.probs(n, m);
  }
  const double stored = static_cast<double>(sector);
  // Every truncated cell has n + m > n_max, so with n_max >= threshold - 1
  // the whole tail belongs to the multiphoton sector.
  const double denominator = stored + rho.tail_mass;
  if (!(denominator > 0.0)) {
    fail(ErrorKind::degenerate_input,
         "no probability with k + l >= " + std::to_string(threshold));
  }
  Estimate out;
  out.value = std::clamp(1.0 - target / denominator, 0.0, 1.0);
  if (rho.tail_mass > significant_tail) {
    out.half_width = stored > 0.0 ? target / stored - target / denominator
                                  : std::numeric_limits<double>::infinity();
  }
  return out;
}

template <class F>
FieldResult capture(F&& estimator) {
  FieldResult out;
  try {
    out.estimate = estimator();
  } catch (const Error& e) {
    out.error = e.kind();
    out.message = e.what();
  }
  return out;
}

}  // namespace

Estimate mode_number(const JointDistribution& rho, Arm arm) {
  return with_tail_spread(rho, [&](Completion c) { return mode_number_from(moments(rho, c), arm); });
}

Estimate delta_squared(const JointDistribution& rho) {
  return with_tail_spread(rho, [&](Completion c) { return delta_squared_from(rho, c); });
}

Estimate efficiency(const JointDistribution& rho) {
  Estimate out = delta_squared(rho);
  out.value = 1.0 - out.value;
  if (out.value <= 0.0) {
    out.warning = true;
    out.note = "no sub-Poissonian correlation: classical or noisy data";
  }
  return out;
}

Estimate contamination2(const JointDistribution& rho) { return contamination(rho, 1); }

Estimate contamination4(const JointDistribution& rho) { return contamination(rho, 2); }

std::optional<double> solve_pump_for_rate(double eta, double rate, double M, int which) {
  if (which != 2 && which != 4) fail(ErrorKind::validation, "which must be 2 or 4");
  if (!(rate > 0.0) || !std::isfinite(rate)) fail(ErrorKind::validation, "rate must be > 0");
  if (!(eta >= 0.0 && eta <= 1.0)) fail(ErrorKind::validation, "eta must lie in [0, 1]");
  if (!(M >= 1.0)) fail(ErrorKind::validation, "M must be >= 1");
  const int pairs = which / 2;
  auto rate_at = [&](double N) {
    return joint_distribution(EffectiveSource{N, eta, eta, M}, pairs).probs(pairs, pairs);
  };

  constexpr double lowest = 1e-12;
  constexpr double highest = 1e12;
  constexpr double rel_tol = 1e-12;

  auto bisect = [&](double lo, double hi) {
    // rate_at(lo) < rate <= rate_at(hi) on the rising branch
    while (hi - lo > rel_tol * hi) {
      const double mid = 0.5 * (lo + hi);
      if (rate_at(mid) >= rate) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  };

  double hi = lowest;
  double previous = rate_at(hi);
  if (previous >= rate) return bisect(0.0, hi);
  while (hi < highest) {
    const double next = 2.0 * hi;
    const double value = rate_at(next);
    if (value >= rate) return bisect(hi, next);
    if (value < previous) {
      // Passed the maximum between hi/2 and next without reaching the rate;
      // locate the peak by golden-section search in log N.
      double a = std::log(hi / 2.0);
      double b = std::log(next);
      const double g = (std::sqrt(5.0) - 1.0) / 2.0;
      for (int i = 0; i < 200 && b - a > 1e-14; ++i) {
        const double x1 = b - g * (b - a);
        const double x2 = a + g * (b - a);
        if (rate_at(std::exp(x1)) < rate_at(std::exp(x2))) {
          a = x1;
        } else {
          b = x2;
        }
      }
      const double peak = std::exp(0.5 * (a + b));
      if (rate_at(peak) >= rate) return bisect(hi / 2.0, peak);
      return std::nullopt;
    }
    previous = value;
    hi = next;
  }
  return std::nullopt;
}

ContaminationMap contamination_map(std::span<const double> eta_grid,
                                   std::span<const double> rate_grid, double M, int which,
                                   int threads) {
  if (eta_grid.empty() || rate_grid.empty()) fail(ErrorKind::validation, "grids must be non-empty");
  if (which != 2 && which != 4) fail(ErrorKind::validation, "which must be 2 or 4");
  if (!(M >= 1.0)) fail(ErrorKind::validation, "M must be >= 1");

  ContaminationMap out;
  out.which = which;
  out.M = M;
  out.eta_grid.assign(eta_grid.begin(), eta_grid.end());
  out.rate_grid.assign(rate_grid.begin(), rate_grid.end());
  const auto rows = static_cast<Eigen::Index>(eta_grid.size());
  const auto cols = static_cast<Eigen::Index>(rate_grid.size());
  out.epsilon = Matrix::Constant(rows, cols, ContaminationMap::unreachable);
  out.pump = Matrix::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());

  auto fill_row = [&](Eigen::Index i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double eta = out.eta_grid[static_cast<std::size_t>(i)];
      const auto N = solve_pump_for_rate(eta, out.rate_grid[static_cast<std::size_t>(j)], M, which);
      if (!N) continue;
      const EffectiveSource src{*N, eta, eta, M};
      const int n_max = std::max(truncation_order(src, 1e-15), which);
      const auto rho = joint_distribution(src, n_max);
      out.epsilon(i, j) = (which == 2 ? contamination2(rho) : contamination4(rho)).value;
      out.pump(i, j) = *N;
    }
  };

  // Rows are independent and write disjoint cells.
  const int workers = std::clamp(threads, 1, static_cast<int>(rows));
  if (workers == 1) {
    for (Eigen::Index i = 0; i < rows; ++i) fill_row(i);
  } else {
    std::atomic<Eigen::Index> next_row{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Eigen::Index i = next_row++; i < rows; i = next_row++) fill_row(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

SourceCharacterization characterize(const JointDistribution& rho) {
  SourceCharacterization out;
  const Moments mom = moments(rho, Completion::renormalized);
  out.mean_n = mom.mean_a;
  out.mean_n_prime = mom.mean_b;
  out.var_n = mom.fact2_a + mom.mean_a - mom.mean_a * mom.mean_a;
  out.var_n_prime = mom.fact2_b + mom.mean_b - mom.mean_b * mom.mean_b;
  out.p11 = rho.n_max() >= 1 ? rho.probs(1, 1) : 0.0;
  out.p22 = rho.n_max() >= 2 ? rho.probs(2, 2) : 0.0;
  out.tail_mass = rho.tail_mass;
  out.M_hat = capture([&] { return mode_number(rho, Arm::a); });
  out.M_hat_prime = capture([&] { return mode_number(rho, Arm::b); });
  out.delta_sq = capture([&] { return delta_squared(rho); });
  out.eta_hat = capture([&] { return efficiency(rho); });
  out.eps2 = capture([&] { return contamination2(rho); });
  out.eps4 = capture([&] { return contamination4(rho); });
  return out;
}

}  // namespace spdc
