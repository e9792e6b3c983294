#include "bclr/pipeline.hpp"

#include "bclr/error.hpp"

namespace bclr {

std::string_view to_string(PriorKind k) noexcept {
  switch (k) {
    case PriorKind::Naive: return "naive";
    case PriorKind::G: return "g";
    case PriorKind::Pmp: return "pmp";
    case PriorKind::Hybrid: return "hybrid";
  }
  return "unknown";
}

PriorKind parse_prior_kind(std::string_view name) {
  if (name == "naive") return PriorKind::Naive;
  if (name == "g") return PriorKind::G;
  if (name == "pmp") return PriorKind::Pmp;
  if (name == "hybrid") return PriorKind::Hybrid;
  fail(ErrorCode::InvalidArgument, "unknown prior '" + std::string(name) + "'");
}

std::string_view to_string(PremodelMethod m) noexcept {
  return m == PremodelMethod::LR ? "lr" : "gee";
}

PremodelMethod parse_premodel(std::string_view name) {
  if (name == "lr") return PremodelMethod::LR;
  if (name == "gee") return PremodelMethod::GEE;
  fail(ErrorCode::InvalidArgument, "unknown pre-model '" + std::string(name) + "'");
}

BclrFit fit_bclr(const PairedDataset& data, const BclrOptions& opts) {
  const PairPartition part = partition_pairs(data);
  BclrFit fit;
  fit.n_concordant = part.n_concordant();
  fit.n_discordant = part.n_discordant();
  const DiscordantDiffs diffs = difference_discordant(data, part);
  fit.premodel = premodel_concordant(data, part, opts.premodel);
  const PriorSpec spec(opts.prior, fit.premodel.b_c, fit.premodel.sigma_c, diffs, opts.tau2);
  fit.samples = sample_posterior(diffs, spec, opts.sampler);
  return fit;
}

}  // namespace bclr
