#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bclr/inference.hpp"
#include "bclr/pipeline.hpp"
#include "bclr/rng.hpp"

namespace bclr {

enum class ResponseModel { Linear, Friedman };

std::string_view to_string(ResponseModel m) noexcept;
ResponseModel parse_response_model(std::string_view name);

/// A method run in each iteration: a BCLR flavor or a frequentist baseline.
struct MethodSpec {
  enum class Kind { Bclr, Lr, Clr, Gee };
  Kind kind = Kind::Bclr;
  PremodelMethod premodel = PremodelMethod::LR;
  PriorKind prior = PriorKind::Naive;

  /// "bclr" (= bclr:lr:naive), "bclr:<lr|gee>:<naive|g|pmp|hybrid>", "lr", "clr", "gee".
  static MethodSpec parse(std::string_view descriptor);
  std::string label() const;
};

std::vector<MethodSpec> parse_methods(std::string_view comma_separated);

struct SimConfig {
  int n_total = 100;
  int p = 6;
  int covariates_observed = 1;
  ResponseModel model = ResponseModel::Linear;
  double beta_w = 0.0;
  double beta0 = -0.5;
  double beta_value = 1.25;  // every entry of beta
  double noise_sd = 0.05;
  int n_sim = 1000;
  double alpha = 0.05;
  std::vector<MethodSpec> methods{MethodSpec{}};
  std::uint64_t master_seed = 0;
  IntervalMethod test_method = IntervalMethod::EqualTailed;
  double tau2 = kDefaultTau2;
  int chains = 4;
  int warmup = 1000;
  int draws_per_chain = 500;
  /// Worker threads; never affects results.
  int threads = 1;

  void validate() const;
  int n_pairs() const { return n_total / 2; }
};

/// n x p Uniform(-1, 1) rows, each followed by a copy with N(0, noise_sd^2)
/// noise, then column 0 permuted across all 2n rows.
Eigen::MatrixXd gen_design_matrix(int n_pairs, int p, double noise_sd, std::uint64_t seed);

/// Per pair, a fair coin picks which member (row 2i or 2i+1) is treated.
std::vector<std::uint8_t> assign_treatment(int n_pairs, std::uint64_t seed);

double response_probability(const Eigen::Ref<const Eigen::RowVectorXd>& x, int w,
                            const SimConfig& cfg);

struct MethodRecord {
  bool failed = false;
  bool reject = false;
  double estimate = 0.0;
  bool covered = false;
  std::optional<double> log10_g;  // posterior mean of log10(g)
  std::string error;
};

/// One simulated dataset, observed covariates only.
PairedDataset simulate_dataset(const SimConfig& cfg, const Eigen::MatrixXd& x_fixed,
                               int iter_index);

std::vector<MethodRecord> run_iteration(const SimConfig& cfg, const Eigen::MatrixXd& x_fixed,
                                        int iter_index);

struct MethodSummary {
  std::string method;
  int n_sim = 0;
  int n_failed = 0;
  /// Rejection rate over iterations that did not fail.
  double power_or_size = 0.0;
  /// Rejection rate over all iterations, failures counted as non-rejections.
  double power_all = 0.0;
  double mse = 0.0;
  double coverage = 0.0;
  double mc_se = 0.0;
  std::optional<double> mean_log10_g;
};

struct SimResult {
  SimConfig config;
  std::vector<MethodSummary> methods;
};

SimResult run_study(const SimConfig& cfg);

/// "# key=value" config echo (threads omitted) followed by one CSV row per method.
std::string to_csv(const SimResult& r);
std::string to_json(const SimResult& r);
/// Resolved configuration as key/value pairs, in a fixed order.
std::vector<std::pair<std::string, std::string>> describe(const SimConfig& cfg);

}  // namespace bclr
