#include "bclr/simharness.hpp"

#include <algorithm>
#include <charconv>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "bclr/clr.hpp"
#include "bclr/error.hpp"
#include "bclr/math.hpp"

namespace bclr {

namespace {

constexpr std::uint64_t kDesignTag = 0xD5;
constexpr std::uint64_t kTreatmentTag = 0x77;
constexpr std::uint64_t kResponseTag = 0x4E5;
constexpr std::uint64_t kSamplerTag = 0x5A;

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

}  // namespace

std::string_view to_string(ResponseModel m) noexcept {
  return m == ResponseModel::Linear ? "linear" : "friedman";
}

ResponseModel parse_response_model(std::string_view name) {
  if (name == "linear") return ResponseModel::Linear;
  if (name == "friedman") return ResponseModel::Friedman;
  fail(ErrorCode::InvalidArgument, "unknown response model '" + std::string(name) + "'");
}

MethodSpec MethodSpec::parse(std::string_view d) {
  MethodSpec m;
  if (d == "lr") {
    m.kind = Kind::Lr;
  } else if (d == "clr") {
    m.kind = Kind::Clr;
  } else if (d == "gee") {
    m.kind = Kind::Gee;
  } else if (d == "bclr") {
    m.kind = Kind::Bclr;
  } else if (d.starts_with("bclr:")) {
    const std::string_view rest = d.substr(5);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) {
      fail(ErrorCode::InvalidArgument,
           "method '" + std::string(d) + "' must be bclr:<premodel>:<prior>");
    }
    m.kind = Kind::Bclr;
    m.premodel = parse_premodel(rest.substr(0, colon));
    m.prior = parse_prior_kind(rest.substr(colon + 1));
  } else {
    fail(ErrorCode::InvalidArgument, "unknown method '" + std::string(d) + "'");
  }
  return m;
}

std::string MethodSpec::label() const {
  switch (kind) {
    case Kind::Lr: return "lr";
    case Kind::Clr: return "clr";
    case Kind::Gee: return "gee";
    case Kind::Bclr: break;
  }
  return "bclr:" + std::string(to_string(premodel)) + ":" + std::string(to_string(prior));
}

std::vector<MethodSpec> parse_methods(std::string_view list) {
  std::vector<MethodSpec> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t end = std::min(list.find(',', start), list.size());
    std::string_view item = list.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) fail(ErrorCode::InvalidArgument, "empty method in list");
    out.push_back(MethodSpec::parse(item));
    start = end + 1;
  }
  return out;
}

void SimConfig::validate() const {
  if (n_sim == 0) fail(ErrorCode::EmptyStudy, "n_sim must be >= 1");
  if (n_sim < 0) fail(ErrorCode::InvalidArgument, "n_sim must be >= 1");
  if (n_total < 4 || n_total % 2 != 0) {
    fail(ErrorCode::InvalidArgument, "n_total must be even and >= 4");
  }
  if (p < 1) fail(ErrorCode::InvalidArgument, "p must be >= 1");
  if (model == ResponseModel::Friedman && p < 5) {
    fail(ErrorCode::InvalidArgument, "the Friedman model needs p >= 5");
  }
  if (covariates_observed < 0 || covariates_observed > p) {
    fail(ErrorCode::InvalidArgument, "covariates_observed must lie in [0, p]");
  }
  if (!(noise_sd >= 0.0)) fail(ErrorCode::InvalidArgument, "noise_sd must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (methods.empty()) fail(ErrorCode::InvalidArgument, "no methods selected");
  if (threads < 1) fail(ErrorCode::InvalidArgument, "threads must be >= 1");
  SamplerConfig s;
  s.chains = chains;
  s.warmup = warmup;
  s.draws_per_chain = draws_per_chain;
  s.validate();
}

Eigen::MatrixXd gen_design_matrix(int n_pairs, int p, double noise_sd, std::uint64_t seed) {
  if (n_pairs < 1) fail(ErrorCode::InvalidArgument, "n_pairs must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::MatrixXd x(2 * n_pairs, p);
  for (int i = 0; i < n_pairs; ++i) {
    for (int j = 0; j < p; ++j) x(2 * i, j) = unif(rng);
    for (int j = 0; j < p; ++j) x(2 * i + 1, j) = x(2 * i, j) + noise_sd * noise(rng);
  }
  if (p > 0) {
    std::vector<double> col(x.col(0).data(), x.col(0).data() + x.rows());
    std::shuffle(col.begin(), col.end(), rng);
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, 0) = col[static_cast<std::size_t>(r)];
  }
  return x;
}

std::vector<std::uint8_t> assign_treatment(int n_pairs, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::uint8_t> w(2 * static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) {
    const bool first = coin(rng);
    w[2 * static_cast<std::size_t>(i)] = first ? 1 : 0;
    w[2 * static_cast<std::size_t>(i) + 1] = first ? 0 : 1;
  }
  return w;
}

double response_probability(const Eigen::Ref<const Eigen::RowVectorXd>& x, int w,
                            const SimConfig& cfg) {
  double eta = cfg.beta_w * w;
  if (cfg.model == ResponseModel::Linear) {
    eta += cfg.beta0 + cfg.beta_value * x.sum();
  } else {
    eta += std::sin(std::numbers::pi * x(0) * x(1)) + x(2) * x(2) * x(2) + x(3) * x(3) +
           x(4) * x(4);
  }
  return logistic(eta);
}

PairedDataset simulate_dataset(const SimConfig& cfg, const Eigen::MatrixXd& x_fixed,
                               int iter_index) {
  const auto iter = static_cast<std::uint64_t>(iter_index);
  const int n = cfg.n_pairs();
  PairedDataset data;
  data.treatment = assign_treatment(n, derive_seed(cfg.master_seed, iter, kTreatmentTag));
  Rng rng = make_rng(cfg.master_seed, iter, kResponseTag);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  data.response.resize(data.treatment.size());
  data.pair_id.resize(data.treatment.size());
  for (Eigen::Index r = 0; r < x_fixed.rows(); ++r) {
    const auto k = static_cast<std::size_t>(r);
    const double prob = response_probability(x_fixed.row(r), data.treatment[k], cfg);
    data.response[k] = unif(rng) < prob ? 1 : 0;
    data.pair_id[k] = std::to_string(r / 2);
  }
  data.covariates = x_fixed.leftCols(cfg.covariates_observed);
  return data;
}

namespace {

MethodRecord run_method(const MethodSpec& m, const SimConfig& cfg, const PairedDataset& data,
                        int iter_index) {
  MethodRecord rec;
  try {
    if (m.kind == MethodSpec::Kind::Bclr) {
      BclrOptions opts;
      opts.premodel = m.premodel;
      opts.prior = m.prior;
      opts.tau2 = cfg.tau2;
      opts.sampler.chains = cfg.chains;
      opts.sampler.warmup = cfg.warmup;
      opts.sampler.draws_per_chain = cfg.draws_per_chain;
      opts.sampler.seed =
          derive_seed(cfg.master_seed, static_cast<std::uint64_t>(iter_index), kSamplerTag);
      const BclrFit fit = fit_bclr(data, opts);
      const std::vector<double> draws = fit.samples.pooled_beta_w();
      const TestDecision d = decide(draws, cfg.alpha, 0.0, cfg.test_method);
      rec.reject = d.reject;
      rec.estimate = d.point_estimate;
      rec.covered = d.interval_set.contains(cfg.beta_w);
      if (fit.samples.g) rec.log10_g = fit.samples.g->array().log10().mean();
    } else {
      WaldTest t;
      if (m.kind == MethodSpec::Kind::Lr) t = lr_treatment_test(data);
      if (m.kind == MethodSpec::Kind::Clr) t = clr_treatment_test(data);
      if (m.kind == MethodSpec::Kind::Gee) t = gee_treatment_test(data);
      if (!t.converged || !std::isfinite(t.std_error)) {
        fail(ErrorCode::SeparationDetected, "estimator did not converge");
      }
      const double z = normal_quantile(1.0 - 0.5 * cfg.alpha);
      rec.reject = t.p_value < cfg.alpha;
      rec.estimate = t.estimate;
      rec.covered = std::abs(t.estimate - cfg.beta_w) <= z * t.std_error;
    }
  } catch (const Error& e) {
    rec = MethodRecord{};
    rec.failed = true;
    rec.error = std::string(to_string(e.code()));
  }
  return rec;
}

}  // namespace

std::vector<MethodRecord> run_iteration(const SimConfig& cfg, const Eigen::MatrixXd& x_fixed,
                                        int iter_index) {
  const PairedDataset data = simulate_dataset(cfg, x_fixed, iter_index);
  std::vector<MethodRecord> out;
  out.reserve(cfg.methods.size());
  for (const auto& m : cfg.methods) out.push_back(run_method(m, cfg, data, iter_index));
  return out;
}

SimResult run_study(const SimConfig& cfg) {
  cfg.validate();
  const Eigen::MatrixXd x =
      gen_design_matrix(cfg.n_pairs(), cfg.p, cfg.noise_sd, derive_seed(cfg.master_seed, 0, kDesignTag));

  std::vector<std::vector<MethodRecord>> records(static_cast<std::size_t>(cfg.n_sim));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < cfg.n_sim; i = next++) {
      records[static_cast<std::size_t>(i)] = run_iteration(cfg, x, i);
    }
  };
  const int threads = std::min(cfg.threads, cfg.n_sim);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SimResult result;
  result.config = cfg;
  for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
    MethodSummary s;
    s.method = cfg.methods[k].label();
    s.n_sim = cfg.n_sim;
    int rejections = 0;
    int covered = 0;
    double sq_err = 0.0;
    double log_g = 0.0;
    int n_g = 0;
    for (const auto& it : records) {
      const MethodRecord& r = it[k];
      if (r.failed) {
        ++s.n_failed;
        continue;
      }
      rejections += r.reject ? 1 : 0;
      covered += r.covered ? 1 : 0;
      sq_err += (r.estimate - cfg.beta_w) * (r.estimate - cfg.beta_w);
      if (r.log10_g) {
        log_g += *r.log10_g;
        ++n_g;
      }
    }
    const int ok = s.n_sim - s.n_failed;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.power_or_size = ok > 0 ? static_cast<double>(rejections) / ok : nan;
    s.power_all = static_cast<double>(rejections) / s.n_sim;
    s.mse = ok > 0 ? sq_err / ok : nan;
    s.coverage = ok > 0 ? static_cast<double>(covered) / ok : nan;
    s.mc_se = ok > 0 ? std::sqrt(s.power_or_size * (1.0 - s.power_or_size) / ok) : nan;
    if (n_g > 0) s.mean_log10_g = log_g / n_g;
    result.methods.push_back(s);
  }
  return result;
}

std::vector<std::pair<std::string, std::string>> describe(const SimConfig& cfg) {
  std::string methods;
  for (const auto& m : cfg.methods) methods += (methods.empty() ? "" : ",") + m.label();
  return {
      {"n_total", std::to_string(cfg.n_total)},
      {"p", std::to_string(cfg.p)},
      {"covariates_observed", std::to_string(cfg.covariates_observed)},
      {"model", std::string(to_string(cfg.model))},
      {"beta_w", fmt_g(cfg.beta_w)},
      {"beta0", fmt_g(cfg.beta0)},
      {"beta_value", fmt_g(cfg.beta_value)},
      {"noise_sd", fmt_g(cfg.noise_sd)},
      {"n_sim", std::to_string(cfg.n_sim)},
      {"alpha", fmt_g(cfg.alpha)},
      {"methods", methods},
      {"seed", std::to_string(cfg.master_seed)},
      {"test", std::string(to_string(cfg.test_method))},
      {"tau2", fmt_g(cfg.tau2)},
      {"chains", std::to_string(cfg.chains)},
      {"warmup", std::to_string(cfg.warmup)},
      {"draws", std::to_string(cfg.draws_per_chain)},
  };
}

std::string to_csv(const SimResult& r) {
  std::ostringstream out;
  for (const auto& [k, v] : describe(r.config)) out << "# " << k << '=' << v << '\n';
  out << "method,power_or_size,power_failures_as_nonrejections,mse,coverage,mc_se,n_failed,"
         "n_sim,mean_log10_g\n";
  for (const auto& s : r.methods) {
    out << s.method << ',' << fmt(s.power_or_size) << ',' << fmt(s.power_all) << ','
        << fmt(s.mse) << ',' << fmt(s.coverage) << ',' << fmt(s.mc_se) << ',' << s.n_failed
        << ',' << s.n_sim << ',' << (s.mean_log10_g ? fmt(*s.mean_log10_g) : "NA") << '\n';
  }
  return out.str();
}

std::string to_json(const SimResult& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json config;
  for (const auto& [k, v] : describe(r.config)) config[k] = v;
  j["config"] = config;
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json() : nlohmann::ordered_json(v); };
  j["methods"] = nlohmann::ordered_json::array();
  for (const auto& s : r.methods) {
    nlohmann::ordered_json m;
    m["method"] = s.method;
    m["power_or_size"] = num(s.power_or_size);
    m["power_failures_as_nonrejections"] = num(s.power_all);
    m["mse"] = num(s.mse);
    m["coverage"] = num(s.coverage);
    m["mc_se"] = num(s.mc_se);
    m["n_failed"] = s.n_failed;
    m["n_sim"] = s.n_sim;
    m["mean_log10_g"] = s.mean_log10_g ? nlohmann::ordered_json(*s.mean_log10_g) : nlohmann::ordered_json();
    j["methods"].push_back(m);
  }
  return j.dump(2) + "\n";
}

}  // namespace bclr
