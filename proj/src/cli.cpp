#include "bclr/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bclr/clr.hpp"
#include "bclr/kernels.hpp"
#include "bclr/math.hpp"
#include "bclr/premodel.hpp"
#include "bclr/simharness.hpp"

namespace bclr::cli {

using json = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  fail(ErrorCode::MalformedInput, "line " + std::to_string(line) + ": " + what);
}

std::uint8_t parse_binary(std::string_view field, std::size_t line, const char* column) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  if (field.empty() || field == "NA") malformed(line, std::string("missing ") + column);
  malformed(line, std::string(column) + " must be 0 or 1, got '" + std::string(field) + "'");
}

double parse_number(std::string_view field, std::size_t line, const std::string& column) {
  if (field.empty() || field == "NA" || field == "NaN" || field == "nan") {
    malformed(line, "missing value in column '" + column + "'");
  }
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    malformed(line, "cannot parse '" + std::string(field) + "' in column '" + column + "'");
  }
  if (!std::isfinite(v)) malformed(line, "non-finite value in column '" + column + "'");
  return v;
}

json interval_json(const IntervalSet& s) {
  json j;
  j["method"] = std::string(to_string(s.method));
  j["alpha"] = s.alpha;
  j["intervals"] = json::array();
  for (const auto& i : s.intervals) j["intervals"].push_back({i.lo, i.hi});
  return j;
}

IntervalSet interval_from_json(const json& j) {
  IntervalSet s;
  s.method = parse_interval_method(j.at("method").get<std::string>());
  s.alpha = j.at("alpha").get<double>();
  for (const auto& i : j.at("intervals")) s.intervals.push_back({i.at(0).get<double>(), i.at(1).get<double>()});
  return s;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }
double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

PairedDataset read_paired_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> covariate_names;
  bool have_header = false;
  PairedDataset data;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (!have_header) {
      if (fields.size() < 3 || fields[0] != "pair_id" || fields[1] != "treatment" ||
          fields[2] != "response") {
        malformed(line_no, "header must start with pair_id,treatment,response");
      }
      for (std::size_t k = 3; k < fields.size(); ++k) covariate_names.emplace_back(fields[k]);
      have_header = true;
      continue;
    }
    if (fields.size() != covariate_names.size() + 3) {
      malformed(line_no, "expected " + std::to_string(covariate_names.size() + 3) +
                             " fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) malformed(line_no, "missing pair_id");
    data.pair_id.emplace_back(fields[0]);
    data.treatment.push_back(parse_binary(fields[1], line_no, "treatment"));
    data.response.push_back(parse_binary(fields[2], line_no, "response"));
    std::vector<double> row;
    for (std::size_t k = 0; k < covariate_names.size(); ++k) {
      row.push_back(parse_number(fields[k + 3], line_no, covariate_names[k]));
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) fail(ErrorCode::MalformedInput, "empty input: header line missing");
  if (rows.empty()) fail(ErrorCode::MalformedInput, "no data rows");
  data.covariates.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(covariate_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < covariate_names.size(); ++k) {
      data.covariates(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
    }
  }
  partition_pairs(data);  // validates shape and pairing
  return data;
}

PairedDataset read_paired_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MalformedInput, "cannot open '" + path + "'");
  return read_paired_csv(in);
}

InferenceReport run_fit(const FitRequest& req, const PairedDataset& data) {
  const auto start = std::chrono::steady_clock::now();
  if (!(req.alpha > 0.0 && req.alpha < 1.0)) {
    fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  }
  InferenceReport r;
  r.theta0 = req.theta0;
  const PairPartition part = partition_pairs(data);
  r.n_concordant = part.n_concordant();
  r.n_discordant = part.n_discordant();

  if (req.method == "bclr") {
    BclrOptions opts;
    opts.premodel = req.premodel;
    opts.prior = req.prior;
    opts.tau2 = req.tau2;
    opts.sampler.chains = req.chains;
    opts.sampler.warmup = req.warmup;
    opts.sampler.draws_per_chain = req.draws;
    opts.sampler.seed = req.seed;
    opts.sampler.threads = req.threads;
    const BclrFit fit = fit_bclr(data, opts);
    r.method = "bclr:" + std::string(to_string(req.premodel)) + ":" +
               std::string(to_string(req.prior));
    const std::vector<double> draws = fit.samples.pooled_beta_w();
    const TestDecision d = decide(draws, req.alpha, req.theta0, req.test);
    r.estimate = d.point_estimate;
    r.intervals = d.interval_set;
    r.reject = d.reject;
    r.fallback_used = fit.premodel.fallback_used;
    ReportDiagnostics diag;
    if (fit.samples.chains >= 2 && fit.samples.draws >= 4) {
      const Diagnostics dg = diagnose(fit.samples);
      diag.names = dg.names;
      diag.rhat = dg.rhat;
      diag.ess = dg.ess;
    } else {
      r.warnings.push_back("R-hat and ESS need at least 2 chains of 4 draws");
    }
    diag.divergences = fit.samples.divergences;
    diag.accept_rate = fit.samples.accept_rate;
    r.diagnostics = diag;
  } else {
    if (req.method != "lr" && req.method != "clr" && req.method != "gee") {
      fail(ErrorCode::InvalidArgument, "unknown method '" + req.method + "'");
    }
    WaldTest t;
    if (req.method == "lr") t = lr_treatment_test(data);
    if (req.method == "clr") t = clr_treatment_test(data);
    if (req.method == "gee") t = gee_treatment_test(data);
    if (!t.converged) r.warnings.push_back("estimator reached its iteration limit");
    r.method = req.method;
    r.estimate = t.estimate;
    r.std_error = t.std_error;
    const double z = normal_quantile(1.0 - 0.5 * req.alpha);
    r.intervals.alpha = req.alpha;
    r.intervals.method = IntervalMethod::EqualTailed;
    r.intervals.intervals = {{t.estimate - z * t.std_error, t.estimate + z * t.std_error}};
    r.reject = !r.intervals.contains(req.theta0);
    if (req.prior != PriorKind::Naive || req.premodel != PremodelMethod::LR ||
        req.test != IntervalMethod::EqualTailed) {
      r.warnings.push_back("prior, pre-model and test options are ignored for baselines");
    }
  }
  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string report_to_json(const InferenceReport& r) {
  json j;
  j["method"] = r.method;
  j["estimate"] = r.estimate;
  j["std_error"] = r.std_error ? json(*r.std_error) : json();
  j["credible_set"] = interval_json(r.intervals);
  j["theta0"] = r.theta0;
  j["reject"] = r.reject;
  j["n_concordant"] = r.n_concordant;
  j["n_discordant"] = r.n_discordant;
  if (r.diagnostics) {
    json d;
    d["names"] = r.diagnostics->names;
    d["rhat"] = json::array();
    for (double v : r.diagnostics->rhat) d["rhat"].push_back(number_or_null(v));
    d["ess"] = json::array();
    for (double v : r.diagnostics->ess) d["ess"].push_back(number_or_null(v));
    d["divergences"] = r.diagnostics->divergences;
    d["accept_rate"] = r.diagnostics->accept_rate;
    j["diagnostics"] = d;
  } else {
    j["diagnostics"] = nullptr;
  }
  j["fallback_used"] = r.fallback_used;
  j["wall_time_s"] = r.wall_time_s;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

InferenceReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    InferenceReport r;
    r.method = j.at("method").get<std::string>();
    r.estimate = j.at("estimate").get<double>();
    if (!j.at("std_error").is_null()) r.std_error = j.at("std_error").get<double>();
    r.intervals = interval_from_json(j.at("credible_set"));
    r.theta0 = j.at("theta0").get<double>();
    r.reject = j.at("reject").get<bool>();
    r.n_concordant = j.at("n_concordant").get<std::size_t>();
    r.n_discordant = j.at("n_discordant").get<std::size_t>();
    if (!j.at("diagnostics").is_null()) {
      const json& d = j.at("diagnostics");
      ReportDiagnostics diag;
      diag.names = d.at("names").get<std::vector<std::string>>();
      for (const auto& v : d.at("rhat")) diag.rhat.push_back(number_from(v));
      for (const auto& v : d.at("ess")) diag.ess.push_back(number_from(v));
      diag.divergences = d.at("divergences").get<std::vector<int>>();
      diag.accept_rate = d.at("accept_rate").get<std::vector<double>>();
      r.diagnostics = diag;
    }
    r.fallback_used = j.at("fallback_used").get<bool>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedInput, std::string("invalid report: ") + e.what());
  }
}

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedInput:
    case ErrorCode::MalformedPairing:
    case ErrorCode::OddRowCount:
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyStudy:
      return 2;
    case ErrorCode::InsufficientConcordant: return 3;
    case ErrorCode::NoDiscordantPairs: return 4;
    case ErrorCode::AllDivergent:
    case ErrorCode::NonFiniteState:
      return 5;
    default: return 6;
  }
}

std::string error_to_json(ErrorCode code, const std::string& message) {
  json j;
  j["error_code"] = std::string(to_string(code));
  j["message"] = message;
  j["exit_code"] = exit_code(code);
  if (code == ErrorCode::InsufficientConcordant) j["hint"] = "use --method clr";
  return j.dump(2) + "\n";
}

namespace {

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  f << text;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian conditional logistic regression for matched pairs"};
  app.require_subcommand(1);
  std::string kernel = "auto";
  app.add_option("--kernel", kernel, "Pair-kernel backend")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  FitRequest req;
  std::string output;
  std::string format = "json";
  std::string premodel = "lr";
  std::string prior = "naive";
  std::string test = "cr";
  auto* fit = app.add_subcommand("fit", "Fit BCLR or a baseline to a paired CSV");
  fit->add_option("--input", req.input_path, "Input CSV")->required();
  fit->add_option("--method", req.method, "bclr | lr | clr | gee")
      ->check(CLI::IsMember({"bclr", "lr", "clr", "gee"}));
  fit->add_option("--premodel", premodel)->check(CLI::IsMember({"lr", "gee"}));
  fit->add_option("--prior", prior)->check(CLI::IsMember({"naive", "g", "pmp", "hybrid"}));
  fit->add_option("--tau2", req.tau2);
  fit->add_option("--test", test)->check(
      CLI::IsMember({"cr", "equal-tailed", "hpd-contiguous", "hpd-disjoint"}));
  fit->add_option("--theta0", req.theta0);
  fit->add_option("--alpha", req.alpha);
  fit->add_option("--chains", req.chains);
  fit->add_option("--warmup", req.warmup);
  fit->add_option("--draws", req.draws, "Retained draws per chain");
  fit->add_option("--seed", req.seed);
  fit->add_option("--threads", req.threads);
  fit->add_option("--output", output);
  fit->add_option("--format", format)->check(CLI::IsMember({"json"}));

  SimConfig sim;
  std::string model = "linear";
  std::string methods = "bclr";
  std::string sim_test = "cr";
  std::string sim_output;
  std::string sim_format = "csv";
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study");
  simulate->add_option("--n-total", sim.n_total, "2n, total observations");
  simulate->add_option("--p", sim.p, "Latent covariates");
  simulate->add_option("--covariates-observed", sim.covariates_observed);
  simulate->add_option("--model", model)->check(CLI::IsMember({"linear", "friedman"}));
  simulate->add_option("--beta-w", sim.beta_w);
  simulate->add_option("--beta0", sim.beta0);
  simulate->add_option("--beta-value", sim.beta_value);
  simulate->add_option("--noise-sd", sim.noise_sd);
  simulate->add_option("--n-sim", sim.n_sim);
  simulate->add_option("--alpha", sim.alpha);
  simulate->add_option("--methods", methods, "Comma list: bclr[:premodel:prior], lr, clr, gee");
  simulate->add_option("--seed", sim.master_seed);
  simulate->add_option("--test", sim_test)->check(
      CLI::IsMember({"cr", "equal-tailed", "hpd-contiguous", "hpd-disjoint"}));
  simulate->add_option("--tau2", sim.tau2);
  simulate->add_option("--chains", sim.chains);
  simulate->add_option("--warmup", sim.warmup);
  simulate->add_option("--draws", sim.draws_per_chain, "Retained draws per chain");
  simulate->add_option("--threads", sim.threads);
  simulate->add_option("--output", sim_output);
  simulate->add_option("--format", sim_format)->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    out << error_to_json(ErrorCode::InvalidArgument, e.what());
    return 2;
  }

  const std::string& out_path = fit->parsed() ? output : sim_output;
  try {
    if (kernel == "scalar") kernels::set_backend(kernels::Backend::Scalar);
    if (kernel == "avx2") kernels::set_backend(kernels::Backend::Avx2);
    if (fit->parsed()) {
      req.premodel = parse_premodel(premodel);
      req.prior = parse_prior_kind(prior);
      req.test = parse_interval_method(test);
      const PairedDataset data = read_paired_csv_file(req.input_path);
      const InferenceReport report = run_fit(req, data);
      for (const auto& w : report.warnings) err << "warning: " << w << '\n';
      emit(report_to_json(report), out_path, out);
    } else {
      sim.model = parse_response_model(model);
      sim.methods = parse_methods(methods);
      sim.test_method = parse_interval_method(sim_test);
      const SimResult result = run_study(sim);
      emit(sim_format == "csv" ? to_csv(result) : to_json(result), out_path, out);
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    if (e.code() == ErrorCode::InsufficientConcordant) err << "hint: use --method clr\n";
    const std::string body = error_to_json(e.code(), e.what());
    try {
      emit(body, out_path, out);
    } catch (const Error&) {
      out << body;
    }
    return exit_code(e.code());
  }
  return 0;
}

}  // namespace bclr::cli
