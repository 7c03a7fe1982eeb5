#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace biasloop {

using LabelCounts = std::vector<std::pair<std::string, std::uint64_t>>;

class CategoricalDistribution {
 public:
  // Validates nonnegativity, equal lengths and unit mass (±1e-9).
  CategoricalDistribution(std::vector<std::string> labels, std::vector<double> probabilities);

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<double>& probabilities() const noexcept { return probabilities_; }
  std::size_t size() const noexcept { return labels_.size(); }

  // Probability of a label, 0 when absent.
  double probability_of(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
  std::vector<double> probabilities_;
};

// count/total in the given label order; throws EmptyDistribution when every count is zero.
CategoricalDistribution make_distribution(const LabelCounts& counts);

struct PairedObservation {
  std::string unit_id;
  std::string before;
  std::string after;
};

class PairedContingencyTable {
 public:
  using Counts = std::vector<std::vector<std::uint64_t>>;

  // k >= 2, square counts.
  PairedContingencyTable(std::vector<std::string> labels, Counts counts);

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const Counts& counts() const noexcept { return counts_; }
  std::size_t k() const noexcept { return labels_.size(); }
  std::uint64_t n() const noexcept { return n_; }

  std::uint64_t at(std::size_t before, std::size_t after) const { return counts_[before][after]; }
  std::vector<std::uint64_t> row_totals() const;  // "before" marginal
  std::vector<std::uint64_t> col_totals() const;  // "after" marginal

  LabelCounts before_counts() const;
  LabelCounts after_counts() const;

 private:
  std::vector<std::string> labels_;
  Counts counts_;
  std::uint64_t n_ = 0;
};

// counts[i][j] = #observations with before=vocabulary[i], after=vocabulary[j].
// Labels are normalized before lookup; unknown labels throw VocabularyMismatch.
PairedContingencyTable build_paired_table(const std::vector<PairedObservation>& observations,
                                          const std::vector<std::string>& vocabulary);

}  // namespace biasloop
