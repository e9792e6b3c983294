#pragma once

#include <string>
#include <string_view>

#include "bclr/data.hpp"
#include "bclr/inference.hpp"
#include "bclr/premodel.hpp"
#include "bclr/priors.hpp"
#include "bclr/sampler.hpp"

namespace bclr {

std::string_view to_string(PriorKind k) noexcept;
PriorKind parse_prior_kind(std::string_view name);
std::string_view to_string(PremodelMethod m) noexcept;
PremodelMethod parse_premodel(std::string_view name);

struct BclrOptions {
  PremodelMethod premodel = PremodelMethod::LR;
  PriorKind prior = PriorKind::Naive;
  double tau2 = kDefaultTau2;
  SamplerConfig sampler;
};

struct BclrFit {
  std::size_t n_concordant = 0;
  std::size_t n_discordant = 0;
  PremodelFit premodel;
  PosteriorSamples samples;
};

/// Partition, pre-model on the concordant pairs, prior, posterior sampling.
/// Checks for discordant pairs before concordant ones.
BclrFit fit_bclr(const PairedDataset& data, const BclrOptions& opts);

}  // namespace bclr
