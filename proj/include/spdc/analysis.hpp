#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdc/error.hpp"
#include "spdc/model.hpp"

namespace spdc {

enum class Arm { a, b };

/// Point value of an estimator plus a truncation half-width. The half-width
/// is nonzero only when the input's tail_mass exceeds 1e-9.
struct Estimate {
  double value = 0.0;
  double half_width = 0.0;
  bool warning = false;
  std::string note;
};

inline constexpr double significant_tail = 1e-9;

/// <n>^2 / ((Delta n)^2 - <n>) from one arm's marginal.
Estimate mode_number(const JointDistribution& rho, Arm arm);

/// <delta^2> of the normalized count difference; below one means
/// sub-Poissonian correlations.
Estimate delta_squared(const JointDistribution& rho);

/// 1 - <delta^2>. Flags a warning instead of throwing when the result is <= 0.
Estimate efficiency(const JointDistribution& rho);

/// 1 - rho(1,1) / sum_{k+l>=2} rho(k,l)
Estimate contamination2(const JointDistribution& rho);

/// 1 - rho(2,2) / sum_{k+l>=4} rho(k,l)
Estimate contamination4(const JointDistribution& rho);

/// Contamination over an (eta, production rate) grid at equal arm
/// transmissions. Rows follow eta_grid, columns rate_grid. The rate is
/// rho(1,1) for which == 2 and rho(2,2) for which == 4.
struct ContaminationMap {
  static constexpr double unreachable = -1.0;

  int which = 2;
  double M = 1.0;
  std::vector<double> eta_grid;
  std::vector<double> rate_grid;
  Matrix epsilon;  // unreachable where no N attains the rate
  Matrix pump;     // solved N, NaN where unreachable
};

ContaminationMap contamination_map(std::span<const double> eta_grid,
                                   std::span<const double> rate_grid, double M, int which,
                                   int threads = 1);

/// Smallest N with rho(k,k)(N) = rate at eta = eta' and the given M, k = which/2.
std::optional<double> solve_pump_for_rate(double eta, double rate, double M, int which);

/// Estimator outcome inside a characterization: either a value or the error
/// that prevented it.
struct FieldResult {
  std::optional<Estimate> estimate;
  std::optional<ErrorKind> error;
  std::string message;

  bool ok() const { return estimate.has_value(); }
};

struct SourceCharacterization {
  double mean_n = 0.0;
  double mean_n_prime = 0.0;
  double var_n = 0.0;
  double var_n_prime = 0.0;
  double p11 = 0.0;
  double p22 = 0.0;
  double tail_mass = 0.0;
  FieldResult M_hat;        // arm a
  FieldResult M_hat_prime;  // arm b
  FieldResult delta_sq;
  FieldResult eta_hat;
  FieldResult eps2;
  FieldResult eps4;
};

/// Runs every estimator; failures are recorded per field, never thrown.
SourceCharacterization characterize(const JointDistribution& rho);

}  // namespace spdc
