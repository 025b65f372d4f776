#pragma once

// Hidden Markov model with Gaussian emissions. States are 0-based.
// The forward pass normalises every row and keeps the log of the per-step
// normaliser, so likelihoods stay representable for long series; the
// backward pass reuses the same normalisers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace windtree {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }

  static Matrix identity(std::size_t n);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct HmmParams {
  std::size_t m = 0;
  std::vector<double> delta;  // initial distribution
  Matrix gamma;               // gamma(i, j) = Pr(C_{t+1} = j | C_t = i)
  std::vector<double> mu;
  std::vector<double> sigma;
  double sigma_floor = 0.0;

  /// Throws std::invalid_argument unless every field has size m, delta and
  /// the rows of gamma are probability vectors (1e-12), and sigma >= floor > 0.
  void validate() const;
};

inline constexpr double kStochasticTolerance = 1e-12;

double emission_density(const HmmParams& params, std::size_t state, double x);
double log_emission_density(const HmmParams& params, std::size_t state, double x);
double normal_cdf(double x, double mean, double sd);

struct ForwardBackwardTables {
  Matrix alpha_hat;           // T x m, rows sum to 1
  Matrix beta_hat;            // T x m, same scale factors as alpha_hat
  std::vector<double> log_c;  // log normaliser of each forward step
  double log_likelihood = 0.0;
};

/// Throws EmptyObservations for an empty series and NumericalUnderflow when
/// no state can explain an observation.
ForwardBackwardTables forward_backward(const HmmParams& params, std::span<const double> obs);

/// log L_T via the scaled forward recursion.
double log_likelihood(const HmmParams& params, std::span<const double> obs);

struct PosteriorTables {
  Matrix state_prob;             // T x m: Pr(C_t = j | all observations)
  std::vector<Matrix> pair_prob;  // T-1 entries; pair_prob[s](j, k) = Pr(C_s = j, C_{s+1} = k | all)
};

PosteriorTables posterior_pairs(const HmmParams& params, std::span<const double> obs,
                                const ForwardBackwardTables& tables);

enum class InitScheme { Quantile, QuantileKMeans };

std::string_view to_string(InitScheme scheme);

/// Starting point for EM. Gamma has `gamma_diag` on the diagonal and the rest
/// of each row spread evenly; delta is uniform. The sorted observations are
/// split into m equal-count groups (QuantileKMeans then runs 1-D Lloyd
/// iterations from those groups to a fixed point); each state takes its
/// group's mean and sd, the latter floored at 1e-6 * sd(obs).
HmmParams initial_params(std::span<const double> obs, std::size_t m, double gamma_diag,
                         InitScheme scheme = InitScheme::QuantileKMeans);

struct FitOptions {
  int max_iters = 15;
  double tol = 0.0;  // stop once an iteration improves log L by less than tol
  bool update_delta = true;
};

struct FitReport {
  HmmParams params;                 // states sorted by ascending mean
  std::vector<double> loglik_trace;  // log L after each M step
  int iterations = 0;
  std::vector<std::size_t> state_order;  // state_order[i] = input label of reported state i
  std::vector<std::size_t> degenerate_states;  // input labels frozen for lack of posterior mass
};

/// Baum-Welch EM. A state whose posterior mass drops below 1e-8 is frozen
/// (its emission and transition row keep their previous values) and listed
/// in degenerate_states.
FitReport baum_welch(std::span<const double> obs, const HmmParams& init,
                     const FitOptions& options = {});

/// Reorders states by ascending mean (stable). perm[i] is the old index of
/// new state i.
HmmParams canonical_order(const HmmParams& params, std::vector<std::size_t>* perm = nullptr);

/// Stationary distribution of a row-stochastic matrix.
std::vector<double> stationary_distribution(const Matrix& gamma);

enum class ResidualVariant { Conditional, Marginal };

std::string_view to_string(ResidualVariant variant);

struct PseudoResiduals {
  std::vector<double> u;
  ResidualVariant variant = ResidualVariant::Conditional;
};

/// u_t = Pr(X_t <= x_t) as a mixture of state CDFs. Conditional weights
/// condition on every other observation (forward row before t times the
/// backward row at t); Marginal weights are the stationary distribution.
PseudoResiduals pseudo_residuals(const HmmParams& params, std::span<const double> obs,
                                 ResidualVariant variant = ResidualVariant::Conditional);

/// Equal-width bins on [0, 1]; u = 1 falls in the last bin.
std::vector<std::int64_t> residual_histogram(std::span<const double> u, int bins);

/// Pearson statistic of bin counts against a uniform expectation.
double chi_square_uniform(std::span<const std::int64_t> counts);

}  // namespace windtree
