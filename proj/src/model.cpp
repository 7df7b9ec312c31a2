#include "spdc/model.hpp"

#include <cmath>
#include <sstream>

#include "spdc/error.hpp"

namespace spdc {

namespace {

constexpr double unit_norm_tol = 1e-12;
constexpr int max_truncation_order = 4000;

std::string describe(const EffectiveSource& src) {
  std::ostringstream os;
  os << "N=" << src.N << " eta=" << src.eta << " eta_prime=" << src.eta_prime << " M=" << src.M;
  return os.str();
}

void check_order(int n_max) {
  if (n_max < 0 || n_max > max_truncation_order) {
    fail(ErrorKind::validation, "n_max must lie in [0, " + std::to_string(max_truncation_order) +
                                    "], got " + std::to_string(n_max));
  }
}

// Tail sums P(n > k) of the negative binomial marginal with shape M and
// ratio q, returned for k = 0, 1, ... until the remaining mass is below
// floor. Suffix summation keeps tiny tails accurate.
std::vector<double> marginal_tails(double M, double q, double floor) {
  std::vector<double> pmf;
  if (q <= 0.0) return {0.0};
  double term = std::pow(1.0 - q, M);
  const double mode = M * q / (1.0 - q);
  for (int n = 0;; ++n) {
    pmf.push_back(term);
    const double ratio = (M + n) * q / (n + 1);
    term *= ratio;
    if (n + 1 > mode && ratio < 1.0 && term / (1.0 - ratio) < floor) break;
    if (n > 4 * max_truncation_order) break;
  }
  std::vector<double> tails(pmf.size());
  long double acc = term;  // bound on everything beyond the stored terms
  for (std::size_t k = pmf.size(); k-- > 0;) {
    tails[k] = static_cast<double>(acc);
    acc += pmf[k];
  }
  return tails;
}

}  // namespace

void MultimodeSource::validate() const {
  if (r.empty()) fail(ErrorKind::validation, "multimode source needs at least one mode pair");
  if (t.size() != r.size() || t_prime.size() != r.size()) {
    fail(ErrorKind::validation, "r, t and t_prime must have the same length");
  }
  double norm = 0.0;
  double norm_prime = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!std::isfinite(r[k]) || r[k] < 0.0) {
      fail(ErrorKind::validation, "squeezing parameter r[" + std::to_string(k) + "] must be >= 0");
    }
    norm += std::norm(t[k]);
    norm_prime += std::norm(t_prime[k]);
  }
  if (std::abs(norm - 1.0) > unit_norm_tol) {
    fail(ErrorKind::validation, "sum |t_k|^2 must equal 1");
  }
  if (std::abs(norm_prime - 1.0) > unit_norm_tol) {
    fail(ErrorKind::validation, "sum |t'_k|^2 must equal 1");
  }
}

void EffectiveSource::validate() const {
  if (!std::isfinite(N) || !(N > 0.0)) {
    fail(ErrorKind::validation, "N must be > 0 (" + describe(*this) + ")");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) {
    fail(ErrorKind::validation, "eta must lie in [0, 1] (" + describe(*this) + ")");
  }
  if (!(eta_prime >= 0.0 && eta_prime <= 1.0)) {
    fail(ErrorKind::validation, "eta_prime must lie in [0, 1] (" + describe(*this) + ")");
  }
  if (!std::isfinite(M) || !(M >= 1.0)) {
    fail(ErrorKind::validation, "M must be >= 1 (" + describe(*this) + ")");
  }
}

bool EffectiveSource::has_integer_modes() const {
  return std::isfinite(M) && M == std::floor(M) && M <= 1e6;
}

int EffectiveSource::integer_modes() const {
  if (!has_integer_modes()) {
    fail(ErrorKind::validation, "an integer mode count is required, got M=" + std::to_string(M));
  }
  return static_cast<int>(M);
}

JointDistribution JointDistribution::from_probs(Matrix probs) {
  if (probs.rows() != probs.cols() || probs.rows() == 0) {
    fail(ErrorKind::validation, "joint distribution matrix must be square and non-empty");
  }
  long double sum = 0.0L;
  for (Eigen::Index n = 0; n < probs.rows(); ++n) {
    for (Eigen::Index m = 0; m < probs.cols(); ++m) {
      const double p = probs(n, m);
      if (!(p >= 0.0 && p <= 1.0)) {
        fail(ErrorKind::validation, "joint distribution entries must lie in [0, 1]");
      }
      sum += p;
    }
  }
  JointDistribution out;
  out.probs = std::move(probs);
  out.tail_mass = std::max(0.0, static_cast<double>(1.0L - sum));
  if (sum > 1.0L + 1e-9L) {
    fail(ErrorKind::validation, "joint distribution sums to more than one");
  }
  return out;
}

ReducedMoments reduce_multimode(const MultimodeSource& src) {
  src.validate();
  ReducedMoments out;
  for (std::size_t k = 0; k < src.r.size(); ++k) {
    // (cosh 2r - 1)/2 written as sinh^2 r to keep small r accurate.
    const double occupation = std::pow(std::sinh(src.r[k]), 2);
    out.n_bar += std::norm(src.t[k]) * occupation;
    out.n_bar_prime += std::norm(src.t_prime[k]) * occupation;
    out.S += src.t[k] * src.t_prime[k] * (std::sinh(2.0 * src.r[k]) / 2.0);
  }
  return out;
}

EffectiveSource effective_params(const ReducedMoments& mom, double M) {
  if (!(mom.n_bar >= 0.0) || !(mom.n_bar_prime >= 0.0)) {
    fail(ErrorKind::validation, "mean photon numbers must be >= 0");
  }
  const double product = mom.n_bar * mom.n_bar_prime;
  const double excess = std::norm(mom.S) - product;
  if (!(excess > 0.0)) {
    fail(ErrorKind::classical_regime,
         "|S|^2 <= n_bar * n_bar_prime: correlations are classical and losses are not "
         "identifiable");
  }
  if (mom.n_bar <= 0.0 || mom.n_bar_prime <= 0.0) {
    fail(ErrorKind::physicality, "nonzero <ab> with an empty arm is inconsistent");
  }
  EffectiveSource out;
  out.eta = excess / mom.n_bar_prime;
  out.eta_prime = excess / mom.n_bar;
  out.N = product / excess;
  out.M = M;
  // Round-off on lossless input lands a few ulps above one.
  for (double* e : {&out.eta, &out.eta_prime}) {
    if (*e > 1.0 + unit_norm_tol) {
      fail(ErrorKind::physicality, "moments imply a transmission above one (" + describe(out) + ")");
    }
    *e = std::min(*e, 1.0);
  }
  out.validate();
  return out;
}

double generating_fn_value(const EffectiveSource& src, double x, double y) {
  src.validate();
  if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) {
    fail(ErrorKind::validation, "generating function arguments must lie in [0, 1]");
  }
  const double base = src.N + 1.0 -
                      src.N * (src.eta * x + 1.0 - src.eta) * (src.eta_prime * y + 1.0 - src.eta_prime);
  return std::pow(base, -src.M);
}

JointDistribution joint_distribution(const EffectiveSource& src, int n_max, double max_tail) {
  src.validate();
  check_order(n_max);

  // Xi(x, y) = (a - b x - c y - d x y)^(-M). Matching powers in
  // (a - b x - c y - d x y) dXi/dx = M (b + d y) Xi gives
  //   a (n+1) g[n+1][m] = (M+n) b g[n][m] + (M+n) d g[n][m-1] + c (n+1) g[n+1][m-1],
  // a recurrence with nonnegative terms only.
  const double N = src.N;
  const double e = src.eta;
  const double ep = src.eta_prime;
  const double M = src.M;
  const double a = N + 1.0 - N * (1.0 - e) * (1.0 - ep);
  const double b = N * e * (1.0 - ep);
  const double c = N * (1.0 - e) * ep;
  const double d = N * e * ep;

  const int size = n_max + 1;
  Matrix g = Matrix::Zero(size, size);
  g(0, 0) = std::pow(a, -M);
  for (int m = 0; m + 1 < size; ++m) {
    g(0, m + 1) = g(0, m) * (M + m) * c / (a * (m + 1));
  }
  for (int n = 0; n + 1 < size; ++n) {
    const double scale = 1.0 / (a * (n + 1));
    g(n + 1, 0) = (M + n) * b * g(n, 0) * scale;
    for (int m = 1; m < size; ++m) {
      g(n + 1, m) =
          ((M + n) * (b * g(n, m) + d * g(n, m - 1)) + c * (n + 1) * g(n + 1, m - 1)) * scale;
    }
  }

  JointDistribution out = JointDistribution::from_probs(std::move(g));
  if (out.tail_mass > max_tail) throw TruncationError(out.tail_mass, max_tail);
  return out;
}

int truncation_order(const EffectiveSource& src, double tail_bound) {
  src.validate();
  if (!(tail_bound > 0.0)) fail(ErrorKind::validation, "tail bound must be > 0");
  // Marginal of each arm is negative binomial with shape M and ratio
  // eta N / (1 + eta N); the joint tail is bounded by the sum of both.
  const double floor = tail_bound * 1e-6;
  const auto ta = marginal_tails(src.M, src.eta * src.N / (1.0 + src.eta * src.N), floor);
  const auto tb =
      marginal_tails(src.M, src.eta_prime * src.N / (1.0 + src.eta_prime * src.N), floor);
  const std::size_t len = std::max(ta.size(), tb.size());
  for (std::size_t k = 0; k < len; ++k) {
    const double tail = (k < ta.size() ? ta[k] : 0.0) + (k < tb.size() ? tb[k] : 0.0);
    if (tail < tail_bound) {
      if (k > static_cast<std::size_t>(max_truncation_order)) break;
      return static_cast<int>(k);
    }
  }
  const double best = ta.back() + tb.back();
  throw TruncationError(best, tail_bound);
}

JointDistribution joint_distribution_auto(const EffectiveSource& src, double tail_bound) {
  return joint_distribution(src, truncation_order(src, tail_bound));
}

JointDistribution joint_distribution(const EffectiveSource& src) {
  return joint_distribution_auto(src, default_tail_bound);
}

namespace {

double binomial_pmf(int k, int trials, double p) {
  if (k < 0 || k > trials) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == trials ? 1.0 : 0.0;
  const double log_choose =
      std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0);
  return std::exp(log_choose + k * std::log(p) + (trials - k) * std::log1p(-p));
}

Matrix convolve_truncated(const Matrix& x, const Matrix& y) {
  const Eigen::Index size = x.rows();
  Matrix out = Matrix::Zero(size, size);
  for (Eigen::Index n = 0; n < size; ++n) {
    for (Eigen::Index m = 0; m < size; ++m) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i <= n; ++i) {
        for (Eigen::Index k = 0; k <= m; ++k) acc += x(i, k) * y(n - i, m - k);
      }
      out(n, m) = acc;
    }
  }
  return out;
}

}  // namespace

JointDistribution joint_distribution_oracle(const EffectiveSource& src, int n_max) {
  src.validate();
  check_order(n_max);
  const int modes = src.integer_modes();

  // Pair number j has P(j) = q^j / (N + 1) with q = N/(N+1); cut the sum
  // where the remaining geometric tail q^(J+1) drops below 1e-20.
  const double q = src.N / (src.N + 1.0);
  int cutoff = n_max;
  if (q > 0.0) {
    cutoff = std::max(n_max, static_cast<int>(std::ceil(std::log(1e-20) / std::log(q))));
  }
  if (cutoff > 200000) fail(ErrorKind::truncation, "oracle pair cutoff too large for N");

  const int size = n_max + 1;
  Matrix single = Matrix::Zero(size, size);
  std::vector<double> ba(size), bb(size);
  for (int j = 0; j <= cutoff; ++j) {
    const double pj = std::exp(j * std::log(q) - std::log1p(src.N));
    if (pj == 0.0) break;
    for (int n = 0; n < size; ++n) {
      ba[n] = binomial_pmf(n, j, src.eta);
      bb[n] = binomial_pmf(n, j, src.eta_prime);
    }
    for (int n = 0; n < size; ++n) {
      if (ba[n] == 0.0) continue;
      for (int m = 0; m < size; ++m) single(n, m) += pj * ba[n] * bb[m];
    }
  }

  Matrix total = single;
  for (int k = 1; k < modes; ++k) total = convolve_truncated(total, single);
  return JointDistribution::from_probs(std::move(total));
}

double perturbative_contamination_fraction(const EffectiveSource& src) {
  src.validate();
  if (src.M != 1.0) fail(ErrorKind::validation, "contamination fraction needs a single mode pair");
  if (std::abs(src.eta - src.eta_prime) > unit_norm_tol) {
    fail(ErrorKind::validation, "contamination fraction needs equal arm transmissions");
  }
  const auto rho = joint_distribution(src, 2);
  const double single_pairs = rho.probs(1, 1);
  if (single_pairs <= 0.0) fail(ErrorKind::degenerate_input, "rho(1,1) vanishes");
  return (rho.probs(2, 0) + rho.probs(0, 2)) / single_pairs;
}

}  // namespace spdc
