#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "bclr/error.hpp"
#include "bclr/priors.hpp"
#include "oracles.hpp"

using namespace bclr;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

DiscordantDiffs centered_diffs(int n, int p, std::mt19937_64& rng) {
  auto d = oracle::random_diffs(rng, n, p);
  for (int j = 0; j < p; ++j) d.delta_x.col(j).array() -= d.delta_x.col(j).mean();
  return d;
}

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int p) {
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::MatrixXd a(p, p);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = norm(rng);
  return 0.3 * a * a.transpose() + 0.2 * Eigen::MatrixXd::Identity(p, p);
}

PriorState state_from(const Eigen::VectorXd& x, int p, bool with_g) {
  PriorState s;
  s.coefficients.beta_w = x(0);
  s.coefficients.beta = x.segment(1, p);
  if (with_g) s.g = std::exp(x(p + 1));
  return s;
}

}  // namespace

TEST_CASE("orthogonalize_treatment closed forms") {
  std::mt19937_64 rng(61);
  const auto d = centered_diffs(12, 3, rng);
  const Eigen::VectorXd w = orthogonalize_treatment(d);
  CHECK((w - Eigen::VectorXd::Ones(12)).cwiseAbs().maxCoeff() < 1e-12);

  DiscordantDiffs c;
  c.delta_x = Eigen::MatrixXd::Constant(6, 1, 2.5);
  c.case_is_treated.assign(6, 1);
  c.pair_id.assign(6, "x");
  CHECK(orthogonalize_treatment(c).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(orthogonalize_treatment(DiscordantDiffs::empty(2)), Error);
}

TEST_CASE("orthogonalize_treatment matches a least-squares residual") {
  std::mt19937_64 rng(67);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_diffs(rng, 30, 1 + rep % 4);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(30);
    const Eigen::VectorXd coef = d.delta_x.householderQr().solve(ones);
    const Eigen::VectorXd ref = ones - d.delta_x * coef;
    CHECK((orthogonalize_treatment(d) - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fisher_info_ww closed forms and direct summation") {
  std::mt19937_64 rng(71);
  const auto d = oracle::random_diffs(rng, 10, 2);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(10);
  CHECK(fisher_info_ww({0.0, Eigen::VectorXd::Zero(2)}, d, ones) == doctest::Approx(2.5));
  CHECK(fisher_info_ww({50.0, Eigen::VectorXd::Zero(2)}, d, ones) < 1e-18);

  const Eigen::VectorXd w = Eigen::VectorXd::Random(10);
  const Coefficients c{0.4, Eigen::Vector2d(-0.7, 0.3)};
  double ref = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double q = oracle::sigmoid(c.beta_w + d.delta_x.row(i).dot(c.beta));
    ref += w(i) * w(i) * q * (1 - q);
  }
  CHECK(fisher_info_ww(c, d, w) == doctest::Approx(ref).epsilon(1e-13));
  CHECK_THROWS_AS(fisher_info_ww(c, d, Eigen::VectorXd::Ones(3)), Error);
}

TEST_CASE("naive prior at its mode") {
  std::mt19937_64 rng(73);
  const auto d = oracle::random_diffs(rng, 8, 2);
  const Eigen::MatrixXd s = random_spd(rng, 2);
  const Eigen::Vector2d b(0.3, -0.2);
  const PriorSpec spec(PriorKind::Naive, b, s, d, 7.0);
  const auto v = log_prior_and_grad(spec, {{0.0, b}, std::nullopt});
  const double expected = -0.5 * (3 * kLog2Pi + std::log(7.0) + std::log(s.determinant()));
  CHECK(v.value == doctest::Approx(expected).epsilon(1e-13));
  CHECK(v.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pmp prior closed form") {
  std::mt19937_64 rng(79);
  const auto d = centered_diffs(10, 1, rng);
  const PriorSpec spec(PriorKind::Pmp, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), d);
  const auto v = log_prior_and_grad(spec, {{0.0, Eigen::VectorXd::Zero(1)}, std::nullopt});
  CHECK(v.value == doctest::Approx(0.5 * std::log(2.5) - 0.5 * kLog2Pi).epsilon(1e-12));
}

TEST_CASE("pmp prior with vanishing information is -inf, never NaN") {
  std::mt19937_64 rng(83);
  const auto d = oracle::random_diffs(rng, 10, 1);
  PriorSpec spec(PriorKind::Pmp, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), d);
  spec.set_w_tilde(Eigen::VectorXd::Zero(10));
  const auto v = log_prior_and_grad(spec, {{0.3, Eigen::VectorXd::Zero(1)}, std::nullopt});
  CHECK(std::isinf(v.value));
  CHECK(v.value < 0);
  CHECK(!v.finite);
  CHECK(v.grad.allFinite());
}

TEST_CASE("pmp value depends on w_tilde only through I_ww") {
  std::mt19937_64 rng(89);
  const auto d = oracle::random_diffs(rng, 15, 2);
  PriorSpec spec(PriorKind::Pmp, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), d);
  const Coefficients c{0.2, Eigen::Vector2d(0.1, -0.4)};
  const Eigen::VectorXd shifted = spec.w_tilde().array() + 0.37;
  spec.set_w_tilde(shifted);
  const auto v = log_prior_and_grad(spec, {c, std::nullopt});
  const double info = fisher_info_ww(c, d, shifted);
  const double ref = 0.5 * std::log(info) - 0.5 * c.beta.squaredNorm() - kLog2Pi;
  CHECK(v.value == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("prior gradients match finite differences for all kinds") {
  std::mt19937_64 rng(97);
  std::normal_distribution<double> norm(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto kind = static_cast<PriorKind>(rep % 4);
    const int p = 1 + (rep / 4) % 3;
    const auto d = oracle::random_diffs(rng, 25, p);
    Eigen::VectorXd b(p);
    for (int j = 0; j < p; ++j) b(j) = norm(rng);
    const PriorSpec spec(kind, b, random_spd(rng, p), d, 4.0);
    const bool with_g = has_g(kind);
    Eigen::VectorXd x(p + 1 + (with_g ? 1 : 0));
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = norm(rng);
    auto f = [&](const Eigen::VectorXd& t) {
      return log_prior_and_grad(spec, state_from(t, p, with_g)).value;
    };
    const auto v = log_prior_and_grad(spec, state_from(x, p, with_g));
    worst = std::max(worst, oracle::max_rel_error(v.grad, oracle::fd_gradient(f, x)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("prior state must match the prior kind") {
  std::mt19937_64 rng(101);
  const auto d = oracle::random_diffs(rng, 5, 1);
  const PriorSpec g(PriorKind::G, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), d);
  CHECK_THROWS_AS(log_prior_and_grad(g, {{0.0, Eigen::VectorXd::Zero(1)}, std::nullopt}), Error);
  const PriorSpec n(PriorKind::Naive, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), d);
  try {
    log_prior_and_grad(n, {{std::nan(""), Eigen::VectorXd::Zero(1)}, std::nullopt});
    FAIL("expected NonFiniteState");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteState);
  }
}

TEST_CASE("priors that use the pairs need discordant pairs") {
  const auto empty = DiscordantDiffs::empty(1);
  for (auto k : {PriorKind::G, PriorKind::Pmp, PriorKind::Hybrid}) {
    try {
      PriorSpec(k, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), empty);
      FAIL("expected NoDiscordantPairs");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoDiscordantPairs);
    }
  }
  CHECK_NOTHROW(PriorSpec(PriorKind::Naive, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), empty));
}

TEST_CASE("naive prior integrates to one") {
  std::mt19937_64 rng(103);
  const auto d = oracle::random_diffs(rng, 5, 1);
  const double tau2 = 4.0, s2 = 0.5;
  const PriorSpec spec(PriorKind::Naive, Eigen::VectorXd::Constant(1, 0.3),
                       Eigen::MatrixXd::Constant(1, 1, s2), d, tau2);
  const int n = 801;
  const double bw_half = 10 * std::sqrt(tau2), b_half = 10 * std::sqrt(s2);
  const double hw = 2 * bw_half / (n - 1), hb = 2 * b_half / (n - 1);
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Coefficients c{-bw_half + i * hw, Eigen::VectorXd::Constant(1, 0.3 - b_half + j * hb)};
      mass += std::exp(log_prior_and_grad(spec, {c, std::nullopt}).value);
    }
  }
  CHECK(mass * hw * hb == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("g prior has Cauchy-like marginal tails") {
  std::mt19937_64 rng(107);
  const auto d = oracle::random_diffs(rng, 10, 1);
  const PriorSpec spec(PriorKind::G, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), d);
  auto marginal = [&](double beta) {
    double total = 0.0;
    const double lo = -20, hi = 30, h = 0.005;
    for (double u = lo; u <= hi; u += h) {
      const PriorState s{{0.0, Eigen::VectorXd::Constant(1, beta)}, std::exp(u)};
      total += std::exp(log_prior_and_grad(spec, s).value) * h;
    }
    return total;
  };
  const double ref = 100.0 * marginal(10.0);
  for (double k : {10.0, 20.0, 50.0, 100.0}) {
    const double scaled = k * k * marginal(k);
    CHECK(scaled / ref < 1.5);
    CHECK(ref / scaled < 1.5);
  }
}

TEST_CASE("g conditional draw: gamma mean identity") {
  std::mt19937_64 gen(109);
  const auto d = oracle::random_diffs(gen, 7, 2);
  const Eigen::Vector2d b(0.5, -0.5);
  const PriorSpec spec(PriorKind::G, b, Eigen::MatrixXd::Identity(2, 2), d);
  Rng rng(5);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = g_conditional_draw(std::span<const double>(b.data(), 2), spec, rng);
    REQUIRE(g > 0.0);
    sum += 1.0 / g;
    sum2 += 1.0 / (g * g);
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.5 / 3.5) < 3 * se);
}

TEST_CASE("g conditional draw matches log-grid integration of the unnormalized conditional") {
  std::mt19937_64 gen(113);
  const auto d = oracle::random_diffs(gen, 10, 1);
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(1, -0.1);
  const PriorSpec spec(PriorKind::G, b, Eigen::MatrixXd::Constant(1, 1, 0.3), d);
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 0.2);
  const double q = 0.09 / 0.3;

  // E[1/g] under N(beta; b, g Sigma) InvGamma(g; 1/2, |D|/2), integrated over u = log g.
  const double scale = 5.0;
  double num = 0.0, den = 0.0;
  for (double u = -25.0; u <= 25.0; u += 1e-3) {
    const double g = std::exp(u);
    const double dens = std::pow(g, -0.5) * std::exp(-0.5 * q / g) * std::pow(g, -1.5) *
                        std::exp(-scale / g) * g;
    num += dens / g;
    den += dens;
  }
  const double expected = num / den;
  CHECK(expected == doctest::Approx(1.0 / (scale + 0.5 * q)).epsilon(1e-6));

  Rng rng(7);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = 1.0 / g_conditional_draw(std::span<const double>(beta.data(), 1), spec, rng);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - expected) < 3 * se);
  CHECK(std::abs(mean - expected) < 0.01 * expected);
}

TEST_CASE("g conditional draw passes KS against an inverse-transform sampler") {
  std::mt19937_64 gen(127);
  const auto d = oracle::random_diffs(gen, 9, 2);
  const Eigen::Vector2d b(0.1, 0.4);
  const PriorSpec spec(PriorKind::Hybrid, b, Eigen::MatrixXd::Identity(2, 2), d);
  const Eigen::Vector2d beta(0.9, -0.3);
  const double shape = 0.5 + 1.0;
  const double rate = 4.5 + 0.5 * spec.quad_form(std::span<const double>(beta.data(), 2));
  Rng rng(11);
  std::mt19937_64 ref_rng(13);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> a, r;
  for (int i = 0; i < 10000; ++i) {
    a.push_back(g_conditional_draw(std::span<const double>(beta.data(), 2), spec, rng));
    const double u = unif(ref_rng);
    r.push_back(rate / boost::math::gamma_q_inv(shape, u));
  }
  CHECK(oracle::ks_statistic(a, r) < oracle::ks_critical_1pct(a.size(), r.size()));
}
