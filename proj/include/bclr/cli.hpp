#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bclr/data.hpp"
#include "bclr/error.hpp"
#include "bclr/inference.hpp"
#include "bclr/pipeline.hpp"

namespace bclr::cli {

/// Header `pair_id,treatment,response,<covariates...>`; comma separated,
/// '.' decimal point, no missing values. Errors cite 1-based line numbers.
PairedDataset read_paired_csv(std::istream& in);
PairedDataset read_paired_csv_file(const std::string& path);

struct FitRequest {
  std::string input_path;
  std::string method = "bclr";  // bclr | lr | clr | gee
  PremodelMethod premodel = PremodelMethod::LR;
  PriorKind prior = PriorKind::Naive;
  double tau2 = kDefaultTau2;
  IntervalMethod test = IntervalMethod::EqualTailed;
  double theta0 = 0.0;
  double alpha = 0.05;
  int chains = 4;
  int warmup = 1000;
  int draws = 500;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ReportDiagnostics {
  std::vector<std::string> names;
  std::vector<double> rhat;
  std::vector<double> ess;
  std::vector<int> divergences;
  std::vector<double> accept_rate;
  bool operator==(const ReportDiagnostics&) const = default;
};

struct InferenceReport {
  std::string method;
  double estimate = 0.0;
  std::optional<double> std_error;  // baselines only
  IntervalSet intervals;
  bool reject = false;
  double theta0 = 0.0;
  std::size_t n_concordant = 0;
  std::size_t n_discordant = 0;
  std::optional<ReportDiagnostics> diagnostics;  // BCLR only
  bool fallback_used = false;
  double wall_time_s = 0.0;
  std::vector<std::string> warnings;

  bool operator==(const InferenceReport&) const = default;
};

/// Runs the requested method on an in-memory dataset.
InferenceReport run_fit(const FitRequest& req, const PairedDataset& data);

std::string report_to_json(const InferenceReport& r);
InferenceReport report_from_json(const std::string& text);
/// Machine-readable error object: error_code, message, exit_code.
std::string error_to_json(ErrorCode code, const std::string& message);

/// 2 input/flags, 3 too few concordant pairs, 4 no discordant pairs,
/// 5 sampler failure, 6 other estimation failures.
int exit_code(ErrorCode code) noexcept;

/// Entry point for the `bclr` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bclr::cli
