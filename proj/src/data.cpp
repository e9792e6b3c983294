#include "bclr/data.hpp"

#include <cmath>
#include <unordered_map>

#include "bclr/error.hpp"

namespace bclr {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedPairing: return "MalformedPairing";
    case ErrorCode::OddRowCount: return "OddRowCount";
    case ErrorCode::NoDiscordantPairs: return "NoDiscordantPairs";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularSandwich: return "SingularSandwich";
    case ErrorCode::InsufficientConcordant: return "InsufficientConcordant";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::AllDivergent: return "AllDivergent";
    case ErrorCode::InsufficientDraws: return "InsufficientDraws";
    case ErrorCode::EmptyDraws: return "EmptyDraws";
    case ErrorCode::TooFewDraws: return "TooFewDraws";
    case ErrorCode::EmptyStudy: return "EmptyStudy";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

DiscordantDiffs DiscordantDiffs::empty(std::size_t p) {
  DiscordantDiffs d;
  d.delta_x.resize(0, static_cast<Eigen::Index>(p));
  return d;
}

void validate(const PairedDataset& data) {
  const std::size_t rows = data.n_rows();
  if (data.treatment.size() != rows || data.response.size() != rows ||
      static_cast<std::size_t>(data.covariates.rows()) != rows) {
    fail(ErrorCode::MalformedInput,
         "column lengths disagree: " + std::to_string(rows) + " pair ids, " +
             std::to_string(data.treatment.size()) + " treatments, " +
             std::to_string(data.response.size()) + " responses, " +
             std::to_string(data.covariates.rows()) + " covariate rows");
  }
  if (rows % 2 != 0) {
    fail(ErrorCode::OddRowCount,
         "row count " + std::to_string(rows) + " is odd");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (data.treatment[i] > 1 || data.response[i] > 1) {
      fail(ErrorCode::MalformedInput,
           "row " + std::to_string(i + 1) + ": treatment/response not in {0,1}");
    }
    for (Eigen::Index j = 0; j < data.covariates.cols(); ++j) {
      if (!std::isfinite(data.covariates(static_cast<Eigen::Index>(i), j))) {
        fail(ErrorCode::MalformedInput,
             "row " + std::to_string(i + 1) + ": non-finite covariate in column " +
                 std::to_string(j + 1));
      }
    }
  }
  // Pairing checks happen in partition_pairs where the grouping is built.
}

PairPartition partition_pairs(const PairedDataset& data) {
  validate(data);

  struct Slot {
    std::size_t first;
    std::size_t second;
    int count;
  };
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Slot> slots;
  std::vector<const std::string*> ids;
  index.reserve(data.n_pairs() * 2);

  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    auto [it, inserted] = index.try_emplace(data.pair_id[i], slots.size());
    if (inserted) {
      slots.push_back({i, 0, 1});
      ids.push_back(&it->first);
      continue;
    }
    Slot& s = slots[it->second];
    if (++s.count > 2) {
      fail(ErrorCode::MalformedPairing,
           "pair '" + data.pair_id[i] + "' occurs more than twice (row " +
               std::to_string(i + 1) + ")");
    }
    s.second = i;
  }

  PairPartition part;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const Slot& s = slots[k];
    if (s.count != 2) {
      fail(ErrorCode::MalformedPairing,
           "pair '" + *ids[k] + "' occurs once (row " +
               std::to_string(s.first + 1) + ")");
    }
    const std::uint8_t t1 = data.treatment[s.first];
    const std::uint8_t t2 = data.treatment[s.second];
    if (t1 + t2 != 1) {
      fail(ErrorCode::MalformedPairing,
           "pair '" + *ids[k] + "' does not have one treated and one control "
           "member (rows " + std::to_string(s.first + 1) + ", " +
               std::to_string(s.second + 1) + ")");
    }
    PairRows rows{*ids[k], t1 == 1 ? s.first : s.second,
                  t1 == 1 ? s.second : s.first};
    if (data.response[s.first] + data.response[s.second] == 1) {
      part.discordant.push_back(std::move(rows));
    } else {
      part.concordant.push_back(std::move(rows));
    }
  }
  return part;
}

DiscordantDiffs difference_discordant(const PairedDataset& data,
                                      const PairPartition& part) {
  if (part.n_discordant() == 0) {
    fail(ErrorCode::NoDiscordantPairs,
         "no discordant pairs: the conditional likelihood is empty");
  }
  const auto n = static_cast<Eigen::Index>(part.n_discordant());
  DiscordantDiffs d;
  d.delta_x.resize(n, data.covariates.cols());
  d.case_is_treated.resize(part.n_discordant());
  d.pair_id.resize(part.n_discordant());
  for (Eigen::Index i = 0; i < n; ++i) {
    const PairRows& pr = part.discordant[static_cast<std::size_t>(i)];
    d.delta_x.row(i) =
        data.covariates.row(static_cast<Eigen::Index>(pr.treated)) -
        data.covariates.row(static_cast<Eigen::Index>(pr.control));
    d.case_is_treated[static_cast<std::size_t>(i)] = data.response[pr.treated];
    d.pair_id[static_cast<std::size_t>(i)] = pr.id;
  }
  return d;
}

StackedRows stack_pairs(const PairedDataset& data,
                        const std::vector<PairRows>& pairs) {
  const auto m = static_cast<Eigen::Index>(2 * pairs.size());
  StackedRows out;
  out.covariates.resize(m, data.covariates.cols());
  out.response.resize(m);
  out.treatment.resize(m);
  Eigen::Index r = 0;
  for (const PairRows& pr : pairs) {
    for (std::size_t row : {pr.treated, pr.control}) {
      const auto src = static_cast<Eigen::Index>(row);
      out.covariates.row(r) = data.covariates.row(src);
      out.response(r) = data.response[row];
      out.treatment(r) = data.treatment[row];
      ++r;
    }
  }
  return out;
}

}  // namespace bclr
