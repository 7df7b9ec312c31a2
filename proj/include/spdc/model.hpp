#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace spdc {

using Matrix = Eigen::MatrixXd;

/// Multimode squeezed source in its characteristic-mode basis, seen through
/// one filter per arm. Entry k of each list belongs to the k-th mode pair.
struct MultimodeSource {
  std::vector<double> r;                      // squeezing parameters, >= 0
  std::vector<std::complex<double>> t;        // arm a amplitude transmissivities
  std::vector<std::complex<double>> t_prime;  // arm b amplitude transmissivities

  void validate() const;
};

/// Second-order moments of the two filtered modes.
struct ReducedMoments {
  double n_bar = 0.0;        // <a^dag a>
  double n_bar_prime = 0.0;  // <b^dag b>
  std::complex<double> S;    // <a b>
};

/// Lossy two-mode squeezed vacuum replicated over M identical mode pairs:
/// N photons per mode before losses, arm transmissions eta and eta_prime.
struct EffectiveSource {
  double N = 0.0;
  double eta = 1.0;
  double eta_prime = 1.0;
  double M = 1.0;

  void validate() const;
  bool has_integer_modes() const;
  int integer_modes() const;  // throws unless M is an integer

  double mean_n() const { return M * eta * N; }
  double mean_n_prime() const { return M * eta_prime * N; }
};

/// Truncated joint photon-number law rho(n, m), 0 <= n, m <= n_max.
struct JointDistribution {
  Matrix probs;
  double tail_mass = 0.0;

  int n_max() const { return static_cast<int>(probs.rows()) - 1; }

  // Builds from a square matrix and sets tail_mass = 1 - sum (clamped at 0).
  static JointDistribution from_probs(Matrix probs);
};

inline constexpr double default_tail_bound = 1e-10;

ReducedMoments reduce_multimode(const MultimodeSource& src);

/// Maps filtered-mode moments onto (N, eta, eta_prime). Requires
/// |S|^2 > n_bar * n_bar_prime; below that the losses are not identifiable.
EffectiveSource effective_params(const ReducedMoments& mom, double M);

/// [N + 1 - N (eta x + 1 - eta)(eta' y + 1 - eta')]^(-M)
double generating_fn_value(const EffectiveSource& src, double x, double y);

/// Taylor coefficients of the generating function up to order n_max in each
/// variable. Throws TruncationError when the excluded mass exceeds max_tail.
JointDistribution joint_distribution(const EffectiveSource& src, int n_max,
                                     double max_tail = 1.0);

/// Same, with n_max chosen so that the excluded mass is below tail_bound.
JointDistribution joint_distribution(const EffectiveSource& src);
JointDistribution joint_distribution_auto(const EffectiveSource& src, double tail_bound);

/// Smallest n_max whose two marginal tails together stay below tail_bound.
int truncation_order(const EffectiveSource& src, double tail_bound);

/// Reference construction from the physical process: geometric pair number
/// per mode, binomial loss per arm, M-fold convolution. Integer M only.
JointDistribution joint_distribution_oracle(const EffectiveSource& src, int n_max);

/// (rho(2,0) + rho(0,2)) / rho(1,1) for a single-mode source with equal losses.
double perturbative_contamination_fraction(const EffectiveSource& src);

}  // namespace spdc
