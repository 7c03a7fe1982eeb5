#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biasloop/core/distribution.hpp"

namespace biasloop::stats {

struct HomogeneityResult {
  double chi2 = 0.0;
  int df = 1;
  double p_value = 1.0;
  std::uint64_t n = 0;
  std::vector<std::string> collapsed_categories;  // zero in both marginals, dropped
  bool singular = false;  // covariance rank-deficient; pseudo-inverse used, df = rank
};

// Stuart-Maxwell marginal homogeneity test on a paired k x k table. Throws EmptyTable for n = 0.
HomogeneityResult stuart_maxwell(const PairedContingencyTable& table);

// Upper tail of the chi-square distribution, Q(df/2, x/2).
double chi2_sf(double x, int df);

struct BhResult {
  std::vector<double> q_values;
  std::vector<bool> significant;
};

// Benjamini-Hochberg step-up over one family, input order kept. Throws InvalidPValue.
BhResult bh_adjust(std::span<const double> p_values, double alpha = 0.01);

// Unweighted Cohen's kappa on paired labels. Throws EmptyTable or UndefinedKappa.
double cohens_kappa(const PairedContingencyTable& table);

// sum(min) / sum(max) over aligned weights. Throws UndefinedJaccard when both are all zero.
double weighted_jaccard(std::span<const double> x, std::span<const double> y);
// Label-aligned over the union of both supports.
double weighted_jaccard(const CategoricalDistribution& x, const CategoricalDistribution& y);

// Per-attribute drift summary: before/after distributions, test and agreement.
struct DriftSummary {
  CategoricalDistribution before;
  CategoricalDistribution after;
  HomogeneityResult homogeneity;
  std::optional<double> kappa;  // empty when undefined
  double jaccard = 0.0;
};
DriftSummary summarize_drift(const PairedContingencyTable& table);

// 100 * correct / total. Throws EmptyGroup for total = 0 and InvalidArgument for correct > total.
double success_rate(std::uint64_t n_correct, std::uint64_t n_total);

enum class Stage { before, after };
std::string_view to_string(Stage stage) noexcept;
Stage stage_from_string(std::string_view text);

struct GroupCount {
  std::string gender;
  Stage stage = Stage::before;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
};

struct GroupRate {
  std::string gender;
  Stage stage = Stage::before;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  double rate = 0.0;  // percent
};

struct ParityResult {
  std::vector<GroupRate> rates;
  double dp_before = 0.0;  // female - male, percentage points
  double dp_after = 0.0;
  double dp(Stage stage) const noexcept { return stage == Stage::before ? dp_before : dp_after; }
};

// Counts with the same (gender, stage) are pooled. Throws EmptyGroup when a
// stage lacks a male or female group.
ParityResult demographic_parity(const std::vector<GroupCount>& groups);

struct LogisticCell {
  Stage stage = Stage::before;
  std::string gender;
  std::uint64_t successes = 0;
  std::uint64_t failures = 0;
};

// logit P(correct) = alpha + b_before * 1[before] + b_male * 1[male]
struct RegressionResult {
  static constexpr std::array<const char*, 3> kTerms{"intercept", "stage_before", "gender_male"};

  std::array<double, 3> coefficients{};
  std::array<double, 3> std_errors{};
  std::array<double, 3> z_values{};
  std::array<double, 3> p_values{};
  std::array<double, 3> odds_ratios{};
  double log_likelihood = 0.0;
  double gradient_max_norm = 0.0;
  int iterations = 0;
  bool separation = false;  // a predictor level has no successes or no failures; coefficients diverge
  std::vector<LogisticCell> cells;  // cells used in the fit
  std::size_t excluded_cells = 0;   // genders other than male/female

  double alpha() const noexcept { return coefficients[0]; }
  double beta_before() const noexcept { return coefficients[1]; }
  double beta_male() const noexcept { return coefficients[2]; }
};

// Grouped-binomial maximum likelihood by IRLS. Throws InsufficientData when
// fewer than 3 usable cells or a predictor has only one level, and
// NoConvergence when IRLS fails without separation.
RegressionResult fit_logistic(const std::vector<LogisticCell>& cells);

}  // namespace biasloop::stats
