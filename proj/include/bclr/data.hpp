#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bclr {

/// 2n observations grouped into n matched pairs.
///
/// Rows may arrive in any order; pairs are identified by `pair_id`.
/// Invariants are checked by `validate` (and therefore by `partition_pairs`).
struct PairedDataset {
  std::vector<std::string> pair_id;
  std::vector<std::uint8_t> treatment;
  std::vector<std::uint8_t> response;
  Eigen::MatrixXd covariates;  // rows x_i, 2n x p

  std::size_t n_rows() const noexcept { return pair_id.size(); }
  std::size_t n_pairs() const noexcept { return pair_id.size() / 2; }
  std::size_t n_covariates() const noexcept {
    return static_cast<std::size_t>(covariates.cols());
  }
};

/// Row indices of one validated pair.
struct PairRows {
  std::string id;
  std::size_t treated;
  std::size_t control;
};

struct PairPartition {
  std::vector<PairRows> concordant;
  std::vector<PairRows> discordant;

  std::size_t n_concordant() const noexcept { return concordant.size(); }
  std::size_t n_discordant() const noexcept { return discordant.size(); }
  std::size_t n_pairs() const noexcept {
    return concordant.size() + discordant.size();
  }
};

/// Sufficient data for the conditional likelihood: one row per discordant
/// pair holding x_treated - x_control, and whether the treated member is the
/// case.
struct DiscordantDiffs {
  Eigen::MatrixXd delta_x;  // |D| x p, column-major
  std::vector<std::uint8_t> case_is_treated;
  std::vector<std::string> pair_id;

  std::size_t n_pairs() const noexcept { return case_is_treated.size(); }
  std::size_t n_covariates() const noexcept {
    return static_cast<std::size_t>(delta_x.cols());
  }

  /// Empty set with `p` covariate columns (likelihood is identically zero).
  static DiscordantDiffs empty(std::size_t p);
};

/// Throws MalformedPairing / OddRowCount / MalformedInput on violation.
void validate(const PairedDataset& data);

/// Pairs in order of first appearance of their id.
PairPartition partition_pairs(const PairedDataset& data);

/// Throws NoDiscordantPairs when the partition has no discordant pair.
DiscordantDiffs difference_discordant(const PairedDataset& data,
                                      const PairPartition& part);

/// Stacked rows (both members) of the given pairs.
struct StackedRows {
  Eigen::MatrixXd covariates;
  Eigen::VectorXd response;
  Eigen::VectorXd treatment;
};

StackedRows stack_pairs(const PairedDataset& data,
                        const std::vector<PairRows>& pairs);

}  // namespace bclr
