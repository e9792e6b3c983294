#include "bclr/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "bclr/clr.hpp"
#include "bclr/error.hpp"

namespace bclr {

void SamplerConfig::validate() const {
  if (chains < 1) fail(ErrorCode::InvalidArgument, "chains must be >= 1");
  if (warmup < 100) fail(ErrorCode::InvalidArgument, "warmup must be >= 100");
  if (draws_per_chain < 1) fail(ErrorCode::InvalidArgument, "draws per chain must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    fail(ErrorCode::InvalidArgument, "target_accept must lie in (0, 1)");
  }
  if (max_leapfrog < 1) fail(ErrorCode::InvalidArgument, "max_leapfrog must be >= 1");
  if (!(init_jitter >= 0.0)) fail(ErrorCode::InvalidArgument, "init_jitter must be >= 0");
  if (!(integration_time > 0.0)) {
    fail(ErrorCode::InvalidArgument, "integration_time must be positive");
  }
}

std::vector<double> PosteriorSamples::pooled_beta_w() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(chains) * static_cast<std::size_t>(draws));
  for (int c = 0; c < chains; ++c) {
    for (int t = 0; t < draws; ++t) out.push_back(beta_w(c, t));
  }
  return out;
}

std::vector<double> PosteriorSamples::pooled_g() const {
  std::vector<double> out;
  if (!g) return out;
  for (int c = 0; c < chains; ++c) {
    for (int t = 0; t < draws; ++t) out.push_back((*g)(c, t));
  }
  return out;
}

namespace {

// Hoffman & Gelman (2014) step-size dual averaging, Stan's default constants.
class DualAveraging {
 public:
  void restart(double step, double delta) {
    mu_ = std::log(10.0 * step);
    delta_ = delta;
    h_bar_ = 0.0;
    log_step_bar_ = 0.0;
    counter_ = 0;
  }

  double update(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double m = static_cast<double>(counter_);
    const double eta = 1.0 / (m + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (delta_ - accept_stat);
    const double log_step = mu_ - std::sqrt(m) / kGamma * h_bar_;
    const double w = std::pow(m, -kKappa);
    log_step_bar_ = w * log_step + (1.0 - w) * log_step_bar_;
    return std::exp(log_step);
  }

  double final_step() const { return std::exp(log_step_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_ = 0.0;
  double delta_ = 0.8;
  double h_bar_ = 0.0;
  double log_step_bar_ = 0.0;
  long counter_ = 0;
};

class Welford {
 public:
  explicit Welford(Eigen::Index dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(mean_) {}
  void add(const Eigen::VectorXd& x) {
    ++n_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += (delta.array() * (x - mean_).array()).matrix();
  }
  long count() const { return n_; }
  /// Variance shrunk towards 1e-3, as in Stan's diagonal adaptation.
  Eigen::VectorXd regularized() const {
    const double n = static_cast<double>(n_);
    const Eigen::VectorXd var = m2_ / (n - 1.0);
    return (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
  }
  void reset() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }

 private:
  long n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

/// Metric adaptation windows within warmup: a fast initial buffer, doubling
/// slow windows (the last absorbs the remainder, covering roughly the second
/// half of warmup) and a terminal step-size-only buffer.
std::vector<int> slow_window_ends(int warmup) {
  const int init_buffer = static_cast<int>(0.15 * warmup);
  const int term_buffer = static_cast<int>(0.1 * warmup);
  const int slow_end = warmup - term_buffer;
  std::vector<int> ends;
  int start = init_buffer;
  int size = 25;
  while (start < slow_end) {
    int end = start + size;
    if (end + 2 * size > slow_end) end = slow_end;
    ends.push_back(end);
    start = end;
    size *= 2;
  }
  return ends;
}

struct State {
  Eigen::VectorXd theta;
  Eigen::VectorXd grad;
  double lp = 0.0;
};

class Hmc {
 public:
  Hmc(const LogDensityFn& f, const SamplerConfig& cfg, Rng& rng, Eigen::Index dim,
      const ChainHooks& hooks)
      : f_(f),
        cfg_(cfg),
        rng_(rng),
        hooks_(hooks),
        adapted_(Eigen::VectorXd::Ones(dim)),
        inv_metric_(adapted_) {
    refresh_metric();
  }

  void set_adapted_metric(Eigen::VectorXd m) {
    adapted_ = std::move(m);
    refresh_metric();
  }

  void refresh_metric() {
    inv_metric_ = adapted_;
    if (hooks_.condition_metric) hooks_.condition_metric(inv_metric_);
  }

  const Eigen::VectorXd& adapted_metric() const { return adapted_; }

  void evaluate(State& s) const {
    s.lp = f_({s.theta.data(), static_cast<std::size_t>(s.theta.size())},
              {s.grad.data(), static_cast<std::size_t>(s.grad.size())});
  }

  struct Outcome {
    double accept_stat = 0.0;
    bool divergent = false;
  };

  /// One transition with `n_steps` leapfrog steps. Updates `s` on acceptance.
  Outcome transition(State& s, double step, int n_steps) {
    const Eigen::Index dim = s.theta.size();
    Eigen::VectorXd momentum(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      momentum(i) = normal_(rng_) / std::sqrt(inv_metric_(i));
    }
    const double h0 = -s.lp + 0.5 * momentum.dot(inv_metric_.cwiseProduct(momentum));

    State prop = s;
    bool finite = true;
    momentum += 0.5 * step * prop.grad;
    for (int l = 0; l < n_steps; ++l) {
      prop.theta += step * inv_metric_.cwiseProduct(momentum);
      evaluate(prop);
      if (!std::isfinite(prop.lp) || !prop.grad.allFinite()) {
        finite = false;
        break;
      }
      momentum += (l + 1 == n_steps ? 0.5 : 1.0) * step * prop.grad;
    }

    Outcome out;
    const double h1 =
        finite ? -prop.lp + 0.5 * momentum.dot(inv_metric_.cwiseProduct(momentum))
               : std::numeric_limits<double>::infinity();
    const double error = h1 - h0;
    if (!std::isfinite(error) || error > sampler_limits::kDivergenceEnergy) {
      out.divergent = true;
      return out;
    }
    out.accept_stat = error <= 0.0 ? 1.0 : std::exp(-error);
    if (uniform_(rng_) < out.accept_stat) s = std::move(prop);
    return out;
  }

  /// Doubles or halves the step until the one-step acceptance crosses 1/2.
  double reasonable_step(const State& s, double step) {
    auto accept = [&](double e) {
      State copy = s;
      Rng saved = rng_;
      const double a = transition(copy, e, 1).accept_stat;
      rng_ = saved;
      return a;
    };
    const double a0 = accept(step);
    const int direction = a0 > 0.5 ? 1 : -1;
    for (int i = 0; i < 60; ++i) {
      const double a = accept(step);
      if (direction == 1 && !(a > 0.5)) break;
      if (direction == -1 && !(a < 0.5)) break;
      const double next = direction == 1 ? 2.0 * step : 0.5 * step;
      if (direction == 1 && next > 1e3) break;
      step = next;
    }
    return step;
  }

  int trajectory_steps(double step) {
    const double cap = std::round(cfg_.integration_time / step);
    const int max_steps =
        static_cast<int>(std::clamp(cap, 1.0, static_cast<double>(cfg_.max_leapfrog)));
    return std::uniform_int_distribution<int>(1, max_steps)(rng_);
  }

 private:
  const LogDensityFn& f_;
  const SamplerConfig& cfg_;
  Rng& rng_;
  const ChainHooks& hooks_;
  Eigen::VectorXd adapted_;
  Eigen::VectorXd inv_metric_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace

ChainResult run_hmc_chain(const LogDensityFn& log_density, Eigen::VectorXd init,
                          const SamplerConfig& cfg, Rng& rng, const ChainHooks& hooks) {
  const Eigen::Index dim = init.size();
  Hmc hmc(log_density, cfg, rng, dim, hooks);
  State s{std::move(init), Eigen::VectorXd::Zero(dim), 0.0};
  hmc.evaluate(s);
  if (!std::isfinite(s.lp)) {
    fail(ErrorCode::NonFiniteState, "log density is not finite at the initial point");
  }

  auto after = [&](bool sampling) {
    if (hooks.after_transition &&
        hooks.after_transition({s.theta.data(), static_cast<std::size_t>(dim)}, sampling)) {
      hmc.evaluate(s);
      hmc.refresh_metric();
    }
  };

  ChainResult result;
  double step = hmc.reasonable_step(s, 1.0);
  DualAveraging da;
  da.restart(step, cfg.target_accept);
  Welford welford(dim);
  const std::vector<int> window_ends = slow_window_ends(cfg.warmup);
  const int slow_begin = static_cast<int>(0.15 * cfg.warmup);
  std::size_t window = 0;

  for (int it = 0; it < cfg.warmup; ++it) {
    const auto out = hmc.transition(s, step, hmc.trajectory_steps(step));
    step = da.update(out.accept_stat);
    after(false);
    if (hooks.warmup_ok && !hooks.warmup_ok({s.theta.data(), static_cast<std::size_t>(dim)})) {
      result.aborted = true;
      return result;
    }
    if (it >= slow_begin && window < window_ends.size()) {
      welford.add(s.theta);
      if (it + 1 == window_ends[window]) {
        hmc.set_adapted_metric(welford.regularized());
        welford.reset();
        ++window;
        step = hmc.reasonable_step(s, step);
        da.restart(step, cfg.target_accept);
      }
    }
  }
  step = da.final_step();

  result.draws.resize(cfg.draws_per_chain, dim);
  double accept_sum = 0.0;
  for (int it = 0; it < cfg.draws_per_chain; ++it) {
    const auto out = hmc.transition(s, step, hmc.trajectory_steps(step));
    accept_sum += out.accept_stat;
    if (out.divergent) ++result.divergences;
    after(true);
    result.draws.row(it) = s.theta.transpose();
  }
  result.accept_rate = accept_sum / cfg.draws_per_chain;
  result.step_size = step;
  result.inv_metric = hmc.adapted_metric();
  return result;
}

namespace {

constexpr std::uint64_t kChainStream = 0xC4A1;

struct ChainOutput {
  ChainResult result;
  std::vector<double> g;
};

ChainOutput run_posterior_chain(const PairData& pairs, const PriorSpec& spec,
                                const SamplerConfig& cfg, int chain) {
  const auto p = static_cast<Eigen::Index>(spec.n_covariates());
  const Eigen::Index dim = p + 1;
  const bool gibbs = has_g(spec.kind());
  Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(chain), kChainStream);
  std::normal_distribution<double> normal(0.0, 1.0);

  double g = 1.0;
  std::vector<double> scratch(static_cast<std::size_t>(dim));
  const bool has_pairs = pairs.n_pairs() > 0;
  LogDensityFn density = [&](std::span<const double> theta, std::span<double> grad) {
    double lp = 0.0;
    if (has_pairs) {
      lp = clr_loglik_grad(pairs, theta, grad);
    } else {
      std::fill(grad.begin(), grad.end(), 0.0);
    }
    const double prior = spec.log_density_fixed_g(theta, g, scratch);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += scratch[k];
    return lp + prior;
  };

  ChainOutput out;
  ChainHooks hooks;
  if (gibbs) {
    hooks.after_transition = [&](std::span<const double> theta, bool sampling) {
      g = g_conditional_draw(theta.subspan(1), spec, rng);
      if (sampling) out.g.push_back(g);
      return true;
    };
    // Given g, the prior alone caps the conditional variance of beta_j at
    // g / (Sigma_C^{-1})_jj; small g otherwise makes the adapted step stiff.
    hooks.condition_metric = [&](Eigen::VectorXd& inv_metric) {
      const Eigen::VectorXd prec = spec.sigma_c_inv().diagonal();
      for (Eigen::Index j = 0; j < prec.size(); ++j) {
        inv_metric(j + 1) = 1.0 / (1.0 / inv_metric(j + 1) + prec(j) / g);
      }
    };
  }
  if (spec.kind() == PriorKind::Pmp) {
    hooks.warmup_ok = [](std::span<const double> theta) {
      return std::abs(theta[0]) <= sampler_limits::kPmpDriftBound;
    };
  }

  for (int attempt = 0; attempt < 2; ++attempt) {
    Eigen::VectorXd init(dim);
    for (Eigen::Index i = 0; i < dim; ++i) init(i) = cfg.init_jitter * normal(rng);
    g = 1.0;
    out.g.clear();
    out.result = run_hmc_chain(density, init, cfg, rng, hooks);
    if (!out.result.aborted) return out;
  }
  fail(ErrorCode::AllDivergent,
       "chain " + std::to_string(chain) +
           " drifted to |beta_w| > 50 during warmup twice (improper PMP direction)");
}

}  // namespace

PosteriorSamples sample_posterior(const DiscordantDiffs& d, const PriorSpec& spec,
                                  const SamplerConfig& cfg) {
  cfg.validate();
  if (d.n_covariates() != spec.n_covariates()) {
    fail(ErrorCode::DimensionMismatch, "prior and pairs disagree on the covariate count");
  }
  if (spec.n_discordant() != d.n_pairs()) {
    fail(ErrorCode::DimensionMismatch, "prior was built for a different set of pairs");
  }
  const PairData pairs(d);

  std::vector<ChainOutput> outputs(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(outputs.size());
  auto work = [&](int chain) {
    try {
      outputs[static_cast<std::size_t>(chain)] = run_posterior_chain(pairs, spec, cfg, chain);
    } catch (...) {
      errors[static_cast<std::size_t>(chain)] = std::current_exception();
    }
  };
  const int threads = std::clamp(cfg.threads, 1, cfg.chains);
  if (threads == 1) {
    for (int c = 0; c < cfg.chains; ++c) work(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int c = next++; c < cfg.chains; c = next++) work(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PosteriorSamples s;
  s.chains = cfg.chains;
  s.draws = cfg.draws_per_chain;
  s.p = static_cast<int>(spec.n_covariates());
  s.beta_w.resize(s.chains, s.draws);
  if (has_g(spec.kind())) s.g = Eigen::MatrixXd(s.chains, s.draws);
  for (int c = 0; c < s.chains; ++c) {
    const ChainOutput& o = outputs[static_cast<std::size_t>(c)];
    const Eigen::MatrixXd& draws = o.result.draws;
    if (!draws.allFinite()) {
      fail(ErrorCode::NonFiniteState, "non-finite retained draw in chain " + std::to_string(c));
    }
    s.beta_w.row(c) = draws.col(0).transpose();
    s.beta.push_back(draws.rightCols(s.p));
    if (s.g) {
      for (int t = 0; t < s.draws; ++t) (*s.g)(c, t) = o.g[static_cast<std::size_t>(t)];
    }
    s.accept_rate.push_back(o.result.accept_rate);
    s.divergences.push_back(o.result.divergences);
    s.step_size.push_back(o.result.step_size);
    if (static_cast<double>(o.result.divergences) >
        sampler_limits::kMaxDivergentFraction * s.draws) {
      fail(ErrorCode::AllDivergent,
           "chain " + std::to_string(c) + " diverged in " +
               std::to_string(o.result.divergences) + " of " + std::to_string(s.draws) +
               " post-warmup transitions");
    }
  }
  return s;
}

namespace {

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance_of(const std::vector<double>& x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

void check_chains(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) fail(ErrorCode::InsufficientDraws, "need at least 2 chains");
  const std::size_t n = chains.front().size();
  if (n < 4) fail(ErrorCode::InsufficientDraws, "need at least 4 draws per chain");
  for (const auto& c : chains) {
    if (c.size() != n) fail(ErrorCode::DimensionMismatch, "chains differ in length");
  }
}

/// Autocovariance at lags 0..n-1 (biased, divided by n).
std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const double m = mean_of(x);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = x[i] - m;
  std::vector<double> acov(n, 0.0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += centered[i] * centered[i + lag];
    acov[lag] = s / static_cast<double>(n);
  }
  return acov;
}

bool is_constant(const std::vector<std::vector<double>>& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains) {
    for (double v : c) {
      if (v != first) return false;
    }
  }
  return true;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  check_chains(chains);
  if (is_constant(chains)) return 1.0;
  const std::size_t half = chains.front().size() / 2;
  std::vector<std::vector<double>> split;
  for (const auto& c : chains) {
    split.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    split.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  const double n = static_cast<double>(half);
  const double m = static_cast<double>(split.size());
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : split) {
    means.push_back(mean_of(c));
    within += variance_of(c, means.back());
  }
  within /= m;
  const double grand = mean_of(means);
  double between = 0.0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between *= n / (m - 1.0);
  if (!(within > 0.0)) return std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * within + between / n;
  return std::max(1.0, std::sqrt(var_plus / within));
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  check_chains(chains);
  const double m = static_cast<double>(chains.size());
  const std::size_t n_draws = chains.front().size();
  const double n = static_cast<double>(n_draws);
  const double total = m * n;
  if (is_constant(chains)) return total;

  std::vector<std::vector<double>> acov;
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : chains) {
    acov.push_back(autocovariance(c));
    means.push_back(mean_of(c));
    within += acov.back()[0] * n / (n - 1.0);
  }
  within /= m;
  double var_plus = within * (n - 1.0) / n;
  if (chains.size() > 1) var_plus += variance_of(means, mean_of(means));
  if (!(var_plus > 0.0)) return total;

  auto rho = [&](std::size_t lag) {
    double s = 0.0;
    for (const auto& a : acov) s += a[lag];
    return 1.0 - (within - s / m) / var_plus;
  };

  // Geyer's initial positive sequence on paired sums, made monotone.
  std::vector<double> pairs;
  for (std::size_t t = 0; t + 1 < n_draws; t += 2) {
    const double g = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (!(g > 0.0)) break;
    pairs.push_back(g);
  }
  for (std::size_t k = 1; k < pairs.size(); ++k) pairs[k] = std::min(pairs[k], pairs[k - 1]);
  double tau = -1.0;
  for (double g : pairs) tau += 2.0 * g;
  tau = std::max(tau, 2.0 / 3.0);
  return total / tau;
}

Diagnostics diagnose(const PosteriorSamples& s) {
  if (s.chains < 2 || s.draws < 4) {
    fail(ErrorCode::InsufficientDraws, "diagnostics need >= 2 chains and >= 4 draws each");
  }
  Diagnostics out;
  auto add = [&](const std::string& name, const auto& column) {
    std::vector<std::vector<double>> chains(static_cast<std::size_t>(s.chains));
    for (int c = 0; c < s.chains; ++c) {
      for (int t = 0; t < s.draws; ++t) chains[static_cast<std::size_t>(c)].push_back(column(c, t));
    }
    out.names.push_back(name);
    out.rhat.push_back(split_rhat(chains));
    out.ess.push_back(effective_sample_size(chains));
  };
  add("beta_w", [&](int c, int t) { return s.beta_w(c, t); });
  for (int j = 0; j < s.p; ++j) {
    add("beta[" + std::to_string(j) + "]",
        [&](int c, int t) { return s.beta[static_cast<std::size_t>(c)](t, j); });
  }
  if (s.g) add("g", [&](int c, int t) { return (*s.g)(c, t); });
  return out;
}

}  // namespace bclr
