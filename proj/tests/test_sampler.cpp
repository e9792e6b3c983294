#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bclr/error.hpp"
#include "bclr/sampler.hpp"
#include "oracles.hpp"

using namespace bclr;

namespace {

using Chains = std::vector<std::vector<double>>;

Chains beta_w_chains(const PosteriorSamples& s) {
  Chains out(static_cast<std::size_t>(s.chains));
  for (int c = 0; c < s.chains; ++c) {
    for (int t = 0; t < s.draws; ++t) out[static_cast<std::size_t>(c)].push_back(s.beta_w(c, t));
  }
  return out;
}

Chains beta_chains(const PosteriorSamples& s, int j) {
  Chains out(static_cast<std::size_t>(s.chains));
  for (int c = 0; c < s.chains; ++c) {
    for (int t = 0; t < s.draws; ++t) {
      out[static_cast<std::size_t>(c)].push_back(s.beta[static_cast<std::size_t>(c)](t, j));
    }
  }
  return out;
}

double sample_sd(const Chains& chains) {
  double s = 0, s2 = 0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    for (double v : c) {
      s += v;
      s2 += v * v;
      ++n;
    }
  }
  const double m = s / n;
  return std::sqrt((s2 - n * m * m) / (n - 1));
}

Chains iid_normal(std::uint64_t seed, int chains, int n, std::vector<double> shifts = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  Chains out(static_cast<std::size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    const double shift = shifts.empty() ? 0.0 : shifts[static_cast<std::size_t>(c)];
    for (int t = 0; t < n; ++t) out[static_cast<std::size_t>(c)].push_back(shift + norm(rng));
  }
  return out;
}

}  // namespace

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.warmup = 50;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.target_accept = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.draws_per_chain = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("hmc kernel on a standard normal target") {
  const LogDensityFn f = [](std::span<const double> x, std::span<double> g) {
    g[0] = -x[0];
    return -0.5 * x[0] * x[0];
  };
  SamplerConfig cfg;
  cfg.warmup = 1000;
  cfg.draws_per_chain = 4000;
  Rng rng(3);
  const ChainResult r = run_hmc_chain(f, Eigen::VectorXd::Zero(1), cfg, rng);
  std::vector<double> x(r.draws.col(0).data(), r.draws.col(0).data() + r.draws.rows());
  double mean = 0, var = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  for (double v : x) var += (v - mean) * (v - mean);
  var /= x.size() - 1;
  const Chains halves{{x.begin(), x.begin() + 2000}, {x.begin() + 2000, x.end()}};
  const double ess = effective_sample_size(halves);
  CHECK(std::abs(mean) < 3.0 * std::sqrt(var / ess));
  CHECK(var >= 0.9);
  CHECK(var <= 1.1);
  CHECK(r.divergences == 0);
  CHECK(r.accept_rate > 0.6);
}

TEST_CASE("hmc reproduces a correlated 2-dim Gaussian covariance") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.8, 0.8, 2.0;
  const Eigen::Matrix2d prec = cov.inverse();
  const LogDensityFn f = [&](std::span<const double> x, std::span<double> g) {
    const Eigen::Vector2d v(x[0], x[1]);
    const Eigen::Vector2d gv = -prec * v;
    g[0] = gv(0);
    g[1] = gv(1);
    return -0.5 * v.dot(prec * v);
  };
  SamplerConfig cfg;
  cfg.warmup = 1000;
  cfg.draws_per_chain = 10000;
  Rng rng(5);
  const ChainResult r = run_hmc_chain(f, Eigen::VectorXd::Zero(2), cfg, rng);
  const Eigen::MatrixXd& d = r.draws;
  for (int a = 0; a < 2; ++a) {
    for (int b = a; b < 2; ++b) {
      // Products of the (known zero-mean) coordinates estimate the covariance entry.
      std::vector<double> prod(static_cast<std::size_t>(d.rows()));
      for (Eigen::Index t = 0; t < d.rows(); ++t) prod[static_cast<std::size_t>(t)] = d(t, a) * d(t, b);
      const std::size_t h = prod.size() / 2;
      const Chains halves{{prod.begin(), prod.begin() + h}, {prod.begin() + h, prod.end()}};
      double m = 0, v = 0;
      for (double x : prod) m += x;
      m /= prod.size();
      for (double x : prod) v += (x - m) * (x - m);
      v /= prod.size() - 1;
      const double se = std::sqrt(v / effective_sample_size(halves));
      CHECK(std::abs(m - cov(a, b)) < 3.0 * se);
    }
  }
}

TEST_CASE("flat likelihood samples the naive prior") {
  const auto empty = DiscordantDiffs::empty(1);
  const double tau2 = 1e4, s2 = 0.3;
  const PriorSpec spec(PriorKind::Naive, Eigen::VectorXd::Constant(1, 0.4),
                       Eigen::MatrixXd::Constant(1, 1, s2), empty, tau2);
  SamplerConfig cfg;
  cfg.seed = 17;
  const PosteriorSamples s = sample_posterior(empty, spec, cfg);
  CHECK(s.chains == 4);
  CHECK(s.draws == 500);
  CHECK(sample_sd(beta_w_chains(s)) == doctest::Approx(100.0).epsilon(0.05));
  CHECK(sample_sd(beta_chains(s, 0)) == doctest::Approx(std::sqrt(s2)).epsilon(0.05));

  std::mt19937_64 ref_rng(19);
  std::normal_distribution<double> ref_dist(0.0, 100.0);
  std::vector<double> ref(10000);
  for (double& v : ref) v = ref_dist(ref_rng);
  const auto pooled = s.pooled_beta_w();
  CHECK(oracle::ks_statistic(pooled, ref) < oracle::ks_critical_1pct(pooled.size(), ref.size()));
}

TEST_CASE("naive posterior matches grid quadrature") {
  std::mt19937_64 gen(23);
  const auto d = oracle::random_diffs(gen, 20, 1, 0.4);
  const double b = 0.2, s2 = 0.5, tau2 = 1e4;
  const PriorSpec spec(PriorKind::Naive, Eigen::VectorXd::Constant(1, b),
                       Eigen::MatrixXd::Constant(1, 1, s2), d, tau2);
  const auto ref = oracle::grid_moments_2d([&](double bw, double beta) {
    return oracle::direct_clr_loglik(d, bw, Eigen::VectorXd::Constant(1, beta)) -
           0.5 * bw * bw / tau2 - 0.5 * (beta - b) * (beta - b) / s2;
  });
  SamplerConfig cfg;
  cfg.seed = 29;
  const PosteriorSamples s = sample_posterior(d, spec, cfg);
  const auto z = oracle::moment_z(beta_w_chains(s), ref, effective_sample_size);
  CHECK(std::abs(z.mean_z) < 3.0);
  CHECK(std::abs(z.sd_z) < 3.0);
}

TEST_CASE("g-prior posterior matches quadrature of the Cauchy marginal") {
  // Integrating g out of N(beta; b, g s2) InvGamma(g; 1/2, |D|/2) leaves a
  // Cauchy(b, sqrt(|D| s2)) prior on beta.
  std::mt19937_64 gen(31);
  const auto d = oracle::random_diffs(gen, 20, 1, 0.4);
  const double b = 0.2, s2 = 0.05, tau2 = 1e4;
  const double scale2 = 20 * s2;
  const PriorSpec spec(PriorKind::G, Eigen::VectorXd::Constant(1, b),
                       Eigen::MatrixXd::Constant(1, 1, s2), d, tau2);
  const auto ref = oracle::grid_moments_2d([&](double bw, double beta) {
    return oracle::direct_clr_loglik(d, bw, Eigen::VectorXd::Constant(1, beta)) -
           0.5 * bw * bw / tau2 - std::log1p((beta - b) * (beta - b) / scale2);
  });
  SamplerConfig cfg;
  cfg.seed = 37;
  cfg.draws_per_chain = 1000;
  const PosteriorSamples s = sample_posterior(d, spec, cfg);
  const auto z = oracle::moment_z(beta_w_chains(s), ref, effective_sample_size);
  CHECK(std::abs(z.mean_z) < 3.0);
  CHECK(std::abs(z.sd_z) < 3.0);
  REQUIRE(s.g.has_value());
  CHECK(s.g->minCoeff() > 0.0);
}

TEST_CASE("sampling is deterministic and independent of thread count") {
  std::mt19937_64 gen(41);
  const auto d = oracle::random_diffs(gen, 30, 2);
  for (auto kind : {PriorKind::Naive, PriorKind::Hybrid}) {
    const PriorSpec spec(kind, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), d);
    SamplerConfig cfg;
    cfg.seed = 43;
    cfg.warmup = 300;
    cfg.draws_per_chain = 200;
    const auto a = sample_posterior(d, spec, cfg);
    cfg.threads = 4;
    const auto b = sample_posterior(d, spec, cfg);
    CHECK(a.beta_w == b.beta_w);
    for (int c = 0; c < a.chains; ++c) CHECK(a.beta[c] == b.beta[c]);
    CHECK(a.g.has_value() == has_g(kind));
    if (a.g) {
      CHECK(*a.g == *b.g);
      CHECK(a.g->minCoeff() > 0.0);
    }
    cfg.seed = 44;
    const auto other = sample_posterior(d, spec, cfg);
    CHECK(other.beta_w != a.beta_w);
  }
}

TEST_CASE("all prior kinds produce finite draws") {
  std::mt19937_64 gen(47);
  const auto d = oracle::random_diffs(gen, 40, 3, 0.8);
  for (int k = 0; k < 4; ++k) {
    const PriorSpec spec(static_cast<PriorKind>(k), Eigen::VectorXd::Zero(3),
                         0.5 * Eigen::MatrixXd::Identity(3, 3), d);
    SamplerConfig cfg;
    cfg.seed = 53 + k;
    const auto s = sample_posterior(d, spec, cfg);
    CHECK(s.beta_w.allFinite());
    const Diagnostics diag = diagnose(s);
    CHECK(diag.names.front() == "beta_w");
    CHECK(diag.names.size() == 4u + (has_g(spec.kind()) ? 1u : 0u));
    for (std::size_t i = 0; i < diag.rhat.size(); ++i) {
      CHECK(diag.rhat[i] >= 1.0 - 1e-8);
      CHECK(diag.ess[i] > 0.0);
      CHECK(diag.ess[i] <= 1.5 * s.chains * s.draws);
    }
    CHECK(diag.rhat[0] < 1.05);
  }
}

TEST_CASE("split rhat on iid and shifted chains") {
  const double r = split_rhat(iid_normal(59, 4, 500));
  CHECK(r >= 1.0);
  CHECK(r <= 1.02);
  CHECK(split_rhat(iid_normal(61, 2, 500, {0.0, 10.0})) > 1.5);
  CHECK(split_rhat(Chains{{2, 2, 2, 2}, {2, 2, 2, 2}}) == 1.0);
}

TEST_CASE("ess of iid draws is close to the draw count") {
  for (std::uint64_t seed : {67, 71, 73}) {
    const double ess = effective_sample_size(iid_normal(seed, 4, 500));
    CHECK(ess >= 0.75 * 2000);
    CHECK(ess <= 1.25 * 2000);
  }
}

TEST_CASE("ess is capped for anti-correlated chains") {
  Chains alt(2);
  for (int t = 0; t < 400; ++t) {
    alt[0].push_back(t % 2 ? 1.0 : -1.0);
    alt[1].push_back(t % 2 ? -1.0 : 1.0);
  }
  CHECK(effective_sample_size(alt) <= 1.5 * 800);
}

TEST_CASE("diagnostics need enough chains and draws") {
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code([] { split_rhat(iid_normal(1, 1, 100)); }) == ErrorCode::InsufficientDraws);
  CHECK(code([] { effective_sample_size(iid_normal(1, 2, 3)); }) == ErrorCode::InsufficientDraws);
  PosteriorSamples s;
  s.chains = 1;
  s.draws = 100;
  CHECK(code([&] { diagnose(s); }) == ErrorCode::InsufficientDraws);
}
