#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bclr/data.hpp"
#include "bclr/priors.hpp"
#include "bclr/rng.hpp"

namespace bclr {

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int draws_per_chain = 500;
  double target_accept = 0.8;
  int max_leapfrog = 256;
  std::uint64_t seed = 0;
  double init_jitter = 0.1;
  /// Integration time targeted by the trajectory-length cap L (step * L).
  double integration_time = 1.5;
  /// Chains run concurrently on up to this many threads.
  int threads = 1;

  void validate() const;
};

struct PosteriorSamples {
  int chains = 0;
  int draws = 0;
  int p = 0;
  Eigen::MatrixXd beta_w;             // chains x draws
  std::vector<Eigen::MatrixXd> beta;  // per chain: draws x p
  std::optional<Eigen::MatrixXd> g;   // chains x draws
  std::vector<double> accept_rate;
  std::vector<int> divergences;
  std::vector<double> step_size;

  /// Retained beta_w draws pooled across chains (chain-major).
  std::vector<double> pooled_beta_w() const;
  std::vector<double> pooled_g() const;
};

/// Posterior of (beta_w, beta) given the discordant pairs and a prior.
/// Dual-averaging HMC with a diagonal metric and jittered trajectory
/// length, plus an exact Gibbs step for g when the prior has one. With no
/// discordant pairs the likelihood is constant and the prior is sampled.
PosteriorSamples sample_posterior(const DiscordantDiffs& d, const PriorSpec& spec,
                                  const SamplerConfig& cfg);

struct Diagnostics {
  std::vector<std::string> names;
  std::vector<double> rhat;
  std::vector<double> ess;
};

/// Split R-hat and multi-chain ESS for beta_w, each beta_j and g.
Diagnostics diagnose(const PosteriorSamples& s);

/// Split R-hat over equal-length chains.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// ESS by Geyer's initial monotone positive sequence.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

// ---------------------------------------------------------------------------
// Generic HMC kernel, usable with any differentiable log density.

/// Returns log density at theta and writes its gradient.
using LogDensityFn =
    std::function<double(std::span<const double> theta, std::span<double> grad)>;

struct ChainHooks {
  /// Called after every HMC transition. Returning true signals that the
  /// target changed (e.g. a Gibbs update), so the cached density is refreshed.
  std::function<bool(std::span<const double> theta, bool sampling)> after_transition;
  /// Checked during warmup; returning false aborts the chain.
  std::function<bool(std::span<const double> theta)> warmup_ok;
  /// Maps the adapted diagonal inverse metric to the one used by the next
  /// transitions; re-applied after every refresh signalled above.
  std::function<void(Eigen::VectorXd& inv_metric)> condition_metric;
};

struct ChainResult {
  Eigen::MatrixXd draws;  // draws x dim
  double accept_rate = 0.0;
  int divergences = 0;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  bool aborted = false;
};

ChainResult run_hmc_chain(const LogDensityFn& log_density, Eigen::VectorXd init,
                          const SamplerConfig& cfg, Rng& rng,
                          const ChainHooks& hooks = {});

namespace sampler_limits {
inline constexpr double kDivergenceEnergy = 1000.0;
inline constexpr double kMaxDivergentFraction = 0.5;
inline constexpr double kPmpDriftBound = 50.0;
}  // namespace sampler_limits

}  // namespace bclr
