#include "windtree/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "windtree/errors.hpp"

namespace windtree {

namespace {

constexpr double kDegenerateMass = 1e-8;

double sample_sd(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

double default_sigma_floor(std::span<const double> obs) {
  return std::max(1e-6 * sample_sd(obs), 1e-12);
}

// Emission densities divided by their per-step maximum: scaled(t, j) =
// p_j(x_t) / exp(offset[t]). Keeps at least one entry per row equal to 1.
struct ScaledEmissions {
  Matrix scaled;
  std::vector<double> offset;
};

ScaledEmissions scaled_emissions(const HmmParams& params, std::span<const double> obs) {
  const std::size_t T = obs.size();
  const std::size_t m = params.m;
  ScaledEmissions e{Matrix(T, m), std::vector<double>(T)};
  std::vector<double> lp(m);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < m; ++j) lp[j] = log_emission_density(params, j, obs[t]);
    const double top = *std::max_element(lp.begin(), lp.end());
    e.offset[t] = top;
    for (std::size_t j = 0; j < m; ++j) e.scaled(t, j) = std::exp(lp[j] - top);
  }
  return e;
}

void normalise(std::span<double> v) {
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= s;
}

std::vector<double> solve_linear(Matrix a, std::vector<double> b, bool& ok) {
  const std::size_t n = b.size();
  ok = true;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    }
    if (std::abs(a(piv, col)) < 1e-12) {
      ok = false;
      return {};
    }
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a(i, c) * x[c];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix id(n, n);
  for (std::size_t i = 0; i < n; ++i) id(i, i) = 1.0;
  return id;
}

void HmmParams::validate() const {
  if (m == 0) throw std::invalid_argument("HMM needs at least one state");
  if (delta.size() != m || mu.size() != m || sigma.size() != m || gamma.rows() != m ||
      gamma.cols() != m) {
    throw std::invalid_argument("HMM parameter sizes disagree with m");
  }
  auto check_prob = [](std::span<const double> p, const char* what) {
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " has a negative entry");
      s += v;
    }
    if (std::abs(s - 1.0) > kStochasticTolerance) {
      throw std::invalid_argument(std::string(what) + " does not sum to 1");
    }
  };
  check_prob(delta, "delta");
  for (std::size_t i = 0; i < m; ++i) check_prob(gamma.row(i), "gamma row");
  if (!(sigma_floor > 0.0)) throw std::invalid_argument("sigma_floor must be positive");
  for (std::size_t j = 0; j < m; ++j) {
    if (!std::isfinite(mu[j])) throw std::invalid_argument("mu must be finite");
    if (!(sigma[j] >= sigma_floor) || !std::isfinite(sigma[j])) {
      throw std::invalid_argument("sigma below floor");
    }
  }
}

double log_emission_density(const HmmParams& params, std::size_t state, double x) {
  const double z = (x - params.mu[state]) / params.sigma[state];
  return -0.5 * z * z - std::log(params.sigma[state]) -
         0.5 * std::log(2.0 * std::numbers::pi);
}

double emission_density(const HmmParams& params, std::size_t state, double x) {
  return std::exp(log_emission_density(params, state, x));
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

ForwardBackwardTables forward_backward(const HmmParams& params, std::span<const double> obs) {
  if (obs.empty()) throw EmptyObservations("observation sequence is empty");
  params.validate();
  const std::size_t T = obs.size();
  const std::size_t m = params.m;
  const ScaledEmissions e = scaled_emissions(params, obs);

  ForwardBackwardTables fb{Matrix(T, m), Matrix(T, m, 1.0), std::vector<double>(T), 0.0};
  // Scaled normaliser of each step: c_t / exp(offset[t]).
  std::vector<double> norm(T);

  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      double prior = 0.0;
      if (t == 0) {
        prior = params.delta[k];
      } else {
        for (std::size_t j = 0; j < m; ++j) prior += fb.alpha_hat(t - 1, j) * params.gamma(j, k);
      }
      fb.alpha_hat(t, k) = prior * e.scaled(t, k);
      sum += fb.alpha_hat(t, k);
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      throw NumericalUnderflow("observation " + std::to_string(t + 1) +
                               " has zero density under every reachable state");
    }
    for (std::size_t k = 0; k < m; ++k) fb.alpha_hat(t, k) /= sum;
    norm[t] = sum;
    fb.log_c[t] = e.offset[t] + std::log(sum);
    fb.log_likelihood += fb.log_c[t];
  }

  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        s += params.gamma(i, k) * e.scaled(t + 1, k) * fb.beta_hat(t + 1, k);
      }
      fb.beta_hat(t, i) = s / norm[t + 1];
    }
  }
  return fb;
}

double log_likelihood(const HmmParams& params, std::span<const double> obs) {
  return forward_backward(params, obs).log_likelihood;
}

PosteriorTables posterior_pairs(const HmmParams& params, std::span<const double> obs,
                                const ForwardBackwardTables& tables) {
  const std::size_t T = obs.size();
  const std::size_t m = params.m;
  if (tables.alpha_hat.rows() != T || tables.alpha_hat.cols() != m) {
    throw std::invalid_argument("tables do not match observations");
  }
  const ScaledEmissions e = scaled_emissions(params, obs);

  PosteriorTables post{Matrix(T, m), {}};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      post.state_prob(t, j) = tables.alpha_hat(t, j) * tables.beta_hat(t, j);
    }
    normalise(post.state_prob.row(t));
  }

  // alpha_{s}(j) gamma(j,k) p_k(x_{s+1}) beta_{s+1}(k) / L_T, with the scale
  // factors of alpha and beta cancelling against L_T up to step s+1's own.
  post.pair_prob.reserve(T > 0 ? T - 1 : 0);
  for (std::size_t s = 0; s + 1 < T; ++s) {
    const double scaled_c = std::exp(tables.log_c[s + 1] - e.offset[s + 1]);
    Matrix xi(m, m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < m; ++k) {
        xi(j, k) = tables.alpha_hat(s, j) * params.gamma(j, k) * e.scaled(s + 1, k) *
                   tables.beta_hat(s + 1, k) / scaled_c;
      }
    }
    post.pair_prob.push_back(std::move(xi));
  }
  return post;
}

std::string_view to_string(InitScheme scheme) {
  return scheme == InitScheme::Quantile ? "quantile" : "quantile_kmeans";
}

HmmParams initial_params(std::span<const double> obs, std::size_t m, double gamma_diag,
                         InitScheme scheme) {
  if (m == 0) throw std::invalid_argument("m must be >= 1");
  if (obs.size() < m) throw InsufficientData("need at least m observations");
  if (!(gamma_diag >= 0.0 && gamma_diag <= 1.0)) {
    throw std::invalid_argument("gamma_diag must lie in [0, 1]");
  }
  std::vector<double> sorted(obs.begin(), obs.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t T = sorted.size();

  // label[i] = group of sorted[i]; groups are contiguous in sorted order.
  std::vector<std::size_t> label(T);
  const std::size_t base = T / m;
  const std::size_t extra = T % m;
  for (std::size_t g = 0, i = 0; g < m; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    for (std::size_t c = 0; c < size; ++c) label[i++] = g;
  }

  auto group_means = [&](std::vector<double> fallback) {
    std::vector<double> sum(m, 0.0);
    std::vector<std::size_t> n(m, 0);
    for (std::size_t i = 0; i < T; ++i) {
      sum[label[i]] += sorted[i];
      ++n[label[i]];
    }
    for (std::size_t g = 0; g < m; ++g) {
      if (n[g] > 0) fallback[g] = sum[g] / static_cast<double>(n[g]);
    }
    return fallback;
  };

  std::vector<double> centers = group_means(std::vector<double>(m, 0.0));
  if (scheme == InitScheme::QuantileKMeans) {
    for (int iter = 0; iter < 1000; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < T; ++i) {
        std::size_t best = 0;
        for (std::size_t g = 1; g < m; ++g) {
          if (std::abs(sorted[i] - centers[g]) < std::abs(sorted[i] - centers[best])) best = g;
        }
        if (best != label[i]) {
          label[i] = best;
          changed = true;
        }
      }
      centers = group_means(centers);
      if (!changed) break;
    }
  }

  HmmParams p;
  p.m = m;
  p.sigma_floor = default_sigma_floor(obs);
  p.delta.assign(m, 1.0 / static_cast<double>(m));
  p.gamma = Matrix(m, m, m > 1 ? (1.0 - gamma_diag) / static_cast<double>(m - 1) : 0.0);
  for (std::size_t i = 0; i < m; ++i) p.gamma(i, i) = m > 1 ? gamma_diag : 1.0;
  p.mu = centers;
  p.sigma.assign(m, p.sigma_floor);
  for (std::size_t g = 0; g < m; ++g) {
    std::vector<double> members;
    for (std::size_t i = 0; i < T; ++i) {
      if (label[i] == g) members.push_back(sorted[i]);
    }
    p.sigma[g] = std::max(sample_sd(members), p.sigma_floor);
  }
  return p;
}

HmmParams canonical_order(const HmmParams& params, std::vector<std::size_t>* perm) {
  std::vector<std::size_t> order(params.m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return params.mu[a] < params.mu[b]; });
  HmmParams out = params;
  for (std::size_t i = 0; i < params.m; ++i) {
    out.delta[i] = params.delta[order[i]];
    out.mu[i] = params.mu[order[i]];
    out.sigma[i] = params.sigma[order[i]];
    for (std::size_t j = 0; j < params.m; ++j) out.gamma(i, j) = params.gamma(order[i], order[j]);
  }
  if (perm) *perm = order;
  return out;
}

FitReport baum_welch(std::span<const double> obs, const HmmParams& init, const FitOptions& options) {
  if (obs.empty()) throw EmptyObservations("observation sequence is empty");
  if (obs.size() < init.m) throw InsufficientData("need at least m observations");
  if (options.max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
  HmmParams p = init;
  if (!(p.sigma_floor > 0.0)) p.sigma_floor = default_sigma_floor(obs);
  p.validate();

  const std::size_t T = obs.size();
  const std::size_t m = p.m;
  FitReport report;
  std::vector<bool> frozen(m, false);

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const ForwardBackwardTables fb = forward_backward(p, obs);
    const PosteriorTables post = posterior_pairs(p, obs, fb);

    HmmParams next = p;
    for (std::size_t j = 0; j < m; ++j) {
      double mass = 0.0;
      double weighted = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        mass += post.state_prob(t, j);
        weighted += post.state_prob(t, j) * obs[t];
      }
      if (mass < kDegenerateMass) {
        frozen[j] = true;
        continue;
      }
      const double mean = weighted / mass;
      double var = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        var += post.state_prob(t, j) * (obs[t] - mean) * (obs[t] - mean);
      }
      next.mu[j] = mean;
      next.sigma[j] = std::max(std::sqrt(var / mass), p.sigma_floor);

      std::vector<double> counts(m, 0.0);
      for (const Matrix& xi : post.pair_prob) {
        for (std::size_t k = 0; k < m; ++k) counts[k] += xi(j, k);
      }
      const double leaving = std::accumulate(counts.begin(), counts.end(), 0.0);
      if (leaving >= kDegenerateMass) {
        for (std::size_t k = 0; k < m; ++k) next.gamma(j, k) = counts[k] / leaving;
      }
    }
    if (options.update_delta) {
      for (std::size_t j = 0; j < m; ++j) next.delta[j] = post.state_prob(0, j);
      normalise(next.delta);
    }

    p = std::move(next);
    report.loglik_trace.push_back(log_likelihood(p, obs));
    report.iterations = iter + 1;
    const std::size_t n = report.loglik_trace.size();
    if (options.tol > 0.0 && n >= 2 &&
        report.loglik_trace[n - 1] - report.loglik_trace[n - 2] < options.tol) {
      break;
    }
  }

  for (std::size_t j = 0; j < m; ++j) {
    if (frozen[j]) report.degenerate_states.push_back(j);
  }
  report.params = canonical_order(p, &report.state_order);
  return report;
}

std::vector<double> stationary_distribution(const Matrix& gamma) {
  const std::size_t m = gamma.rows();
  // pi (I - Gamma + U) = 1, solved as the transposed system.
  Matrix a(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      a(j, i) = (i == j ? 1.0 : 0.0) - gamma(i, j) + 1.0;
    }
  }
  bool ok = false;
  std::vector<double> pi = solve_linear(a, std::vector<double>(m, 1.0), ok);
  if (ok && std::all_of(pi.begin(), pi.end(), [](double v) { return v > -1e-12; })) {
    for (double& v : pi) v = std::max(v, 0.0);
    normalise(pi);
    return pi;
  }
  // Reducible chain: Cesaro average of the uniform start.
  std::vector<double> cur(m, 1.0 / static_cast<double>(m));
  std::vector<double> avg(m, 0.0);
  constexpr int kSteps = 10000;
  for (int n = 0; n < kSteps; ++n) {
    for (std::size_t j = 0; j < m; ++j) avg[j] += cur[j] / kSteps;
    std::vector<double> nxt(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) nxt[j] += cur[i] * gamma(i, j);
    }
    cur = std::move(nxt);
  }
  normalise(avg);
  return avg;
}

std::string_view to_string(ResidualVariant variant) {
  return variant == ResidualVariant::Conditional ? "conditional" : "marginal";
}

PseudoResiduals pseudo_residuals(const HmmParams& params, std::span<const double> obs,
                                 ResidualVariant variant) {
  const std::size_t T = obs.size();
  const std::size_t m = params.m;
  PseudoResiduals out{std::vector<double>(T), variant};

  std::vector<double> weights(m);
  if (variant == ResidualVariant::Marginal) {
    params.validate();
    if (obs.empty()) throw EmptyObservations("observation sequence is empty");
    weights = stationary_distribution(params.gamma);
    for (std::size_t t = 0; t < T; ++t) {
      double u = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        u += weights[k] * normal_cdf(obs[t], params.mu[k], params.sigma[k]);
      }
      out.u[t] = std::clamp(u, 0.0, 1.0);
    }
    return out;
  }

  const ForwardBackwardTables fb = forward_backward(params, obs);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < m; ++k) {
      double prior = 0.0;
      if (t == 0) {
        prior = params.delta[k];
      } else {
        for (std::size_t j = 0; j < m; ++j) prior += fb.alpha_hat(t - 1, j) * params.gamma(j, k);
      }
      weights[k] = prior * fb.beta_hat(t, k);
    }
    normalise(weights);
    double u = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      u += weights[k] * normal_cdf(obs[t], params.mu[k], params.sigma[k]);
    }
    out.u[t] = std::clamp(u, 0.0, 1.0);
  }
  return out;
}

std::vector<std::int64_t> residual_histogram(std::span<const double> u, int bins) {
  if (bins < 2) throw std::invalid_argument("need at least 2 bins");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : u) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("pseudo-residual outside [0, 1]");
    const auto b = std::min(static_cast<std::size_t>(v * bins), counts.size() - 1);
    ++counts[b];
  }
  return counts;
}

double chi_square_uniform(std::span<const std::int64_t> counts) {
  if (counts.empty()) return 0.0;
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    chi += d * d / expected;
  }
  return chi;
}

}  // namespace windtree
