#include "biasloop/core/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biasloop/core/error.hpp"
#include "biasloop/core/labels.hpp"

namespace biasloop {

CategoricalDistribution::CategoricalDistribution(std::vector<std::string> labels, std::vector<double> probabilities)
    : labels_(std::move(labels)), probabilities_(std::move(probabilities)) {
  if (labels_.size() != probabilities_.size())
    throw Error(ErrorCode::InvalidArgument, "distribution labels and probabilities differ in length");
  if (labels_.empty()) throw Error(ErrorCode::EmptyDistribution, "distribution has no categories");
  double total = 0.0;
  for (double p : probabilities_) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "probabilities do not sum to 1");
}

double CategoricalDistribution::probability_of(const std::string& label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  return it == labels_.end() ? 0.0 : probabilities_[static_cast<std::size_t>(it - labels_.begin())];
}

CategoricalDistribution make_distribution(const LabelCounts& counts) {
  std::uint64_t total = 0;
  for (const auto& [label, count] : counts) total += count;
  if (total == 0) throw Error(ErrorCode::EmptyDistribution, "all counts are zero");

  std::vector<std::string> labels;
  std::vector<double> probabilities;
  labels.reserve(counts.size());
  probabilities.reserve(counts.size());
  for (const auto& [label, count] : counts) {
    labels.push_back(label);
    probabilities.push_back(static_cast<double>(count) / static_cast<double>(total));
  }
  return CategoricalDistribution(std::move(labels), std::move(probabilities));
}

PairedContingencyTable::PairedContingencyTable(std::vector<std::string> labels, Counts counts)
    : labels_(std::move(labels)), counts_(std::move(counts)) {
  if (labels_.size() < 2) throw Error(ErrorCode::InvalidArgument, "paired table needs k >= 2 categories");
  if (counts_.size() != labels_.size())
    throw Error(ErrorCode::InvalidArgument, "paired table row count does not match label count");
  for (const auto& row : counts_) {
    if (row.size() != labels_.size()) throw Error(ErrorCode::InvalidArgument, "paired table is not square");
    n_ = std::accumulate(row.begin(), row.end(), n_);
  }
}

std::vector<std::uint64_t> PairedContingencyTable::row_totals() const {
  std::vector<std::uint64_t> totals(k(), 0);
  for (std::size_t i = 0; i < k(); ++i) totals[i] = std::accumulate(counts_[i].begin(), counts_[i].end(), std::uint64_t{0});
  return totals;
}

std::vector<std::uint64_t> PairedContingencyTable::col_totals() const {
  std::vector<std::uint64_t> totals(k(), 0);
  for (std::size_t i = 0; i < k(); ++i)
    for (std::size_t j = 0; j < k(); ++j) totals[j] += counts_[i][j];
  return totals;
}

namespace {
LabelCounts zip(const std::vector<std::string>& labels, const std::vector<std::uint64_t>& totals) {
  LabelCounts out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.emplace_back(labels[i], totals[i]);
  return out;
}
}  // namespace

LabelCounts PairedContingencyTable::before_counts() const { return zip(labels_, row_totals()); }
LabelCounts PairedContingencyTable::after_counts() const { return zip(labels_, col_totals()); }

PairedContingencyTable build_paired_table(const std::vector<PairedObservation>& observations,
                                          const std::vector<std::string>& vocabulary) {
  std::vector<std::string> labels;
  labels.reserve(vocabulary.size());
  for (const auto& label : vocabulary) labels.push_back(normalize_label(label));

  auto index_of = [&](const std::string& raw, const std::string& unit) {
    const auto norm = normalize_label(raw);
    const auto it = std::find(labels.begin(), labels.end(), norm);
    if (it == labels.end())
      throw Error(ErrorCode::VocabularyMismatch, "unit '" + unit + "' has label '" + raw + "' outside the vocabulary");
    return static_cast<std::size_t>(it - labels.begin());
  };

  PairedContingencyTable::Counts counts(labels.size(), std::vector<std::uint64_t>(labels.size(), 0));
  for (const auto& obs : observations) ++counts[index_of(obs.before, obs.unit_id)][index_of(obs.after, obs.unit_id)];
  return PairedContingencyTable(std::move(labels), std::move(counts));
}

}  // namespace biasloop
