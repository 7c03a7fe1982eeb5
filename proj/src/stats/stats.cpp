#include "biasloop/stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "biasloop/core/error.hpp"
#include "biasloop/core/labels.hpp"

namespace biasloop::stats {

HomogeneityResult stuart_maxwell(const PairedContingencyTable& table) {
  if (table.n() == 0) throw Error(ErrorCode::EmptyTable, "paired table has no observations");
  const auto rows = table.row_totals();
  const auto cols = table.col_totals();

  HomogeneityResult result;
  result.n = table.n();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < table.k(); ++i) {
    if (rows[i] + cols[i] == 0)
      result.collapsed_categories.push_back(table.labels()[i]);
    else
      kept.push_back(i);
  }
  if (kept.size() < 2) {
    // Every unit in one category: marginals agree trivially.
    result.singular = true;
    return result;
  }

  const auto m = static_cast<Eigen::Index>(kept.size() - 1);
  Eigen::VectorXd d(m);
  Eigen::MatrixXd s(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto i = kept[static_cast<std::size_t>(a)];
    d(a) = static_cast<double>(rows[i]) - static_cast<double>(cols[i]);
    for (Eigen::Index b = 0; b < m; ++b) {
      const auto j = kept[static_cast<std::size_t>(b)];
      s(a, b) = a == b ? static_cast<double>(rows[i] + cols[i] - 2 * table.at(i, i))
                       : -static_cast<double>(table.at(i, j) + table.at(j, i));
    }
  }

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  const auto& lambda = eig.eigenvalues();
  const double tol = std::max(1.0, lambda.cwiseAbs().maxCoeff()) * static_cast<double>(m) * 1e-12;
  const Eigen::VectorXd projected = eig.eigenvectors().transpose() * d;
  int rank = 0;
  double chi2 = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    if (lambda(a) > tol) {
      ++rank;
      chi2 += projected(a) * projected(a) / lambda(a);
    }
  }

  if (rank == m) {
    // Full rank: solve directly; m = 1 reduces to (b - c)^2 / (b + c) exactly.
    result.chi2 = m == 1 ? d(0) * d(0) / s(0, 0) : d.dot(s.ldlt().solve(d));
    result.df = static_cast<int>(m);
  } else {
    result.singular = true;
    result.chi2 = chi2;
    result.df = rank > 0 ? rank : static_cast<int>(m);
  }
  result.chi2 = std::max(0.0, result.chi2);
  result.p_value = rank > 0 ? chi2_sf(result.chi2, result.df) : 1.0;
  return result;
}

double chi2_sf(double x, int df) {
  if (df < 1) throw Error(ErrorCode::InvalidArgument, "chi-square df must be positive");
  if (std::isnan(x) || x < 0.0) throw Error(ErrorCode::InvalidArgument, "chi-square statistic must be nonnegative");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

BhResult bh_adjust(std::span<const double> p_values, double alpha) {
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidPValue, "p-value " + std::to_string(p) + " outside [0, 1]");
  const auto m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p_values[a] < p_values[b]; });

  BhResult result{std::vector<double>(m), std::vector<bool>(m)};
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const auto i = order[r];
    running = std::min(running, p_values[i] * static_cast<double>(m) / static_cast<double>(r + 1));
    result.q_values[i] = std::max(running, p_values[i]);
  }
  for (std::size_t i = 0; i < m; ++i) result.significant[i] = result.q_values[i] <= alpha;
  return result;
}

double cohens_kappa(const PairedContingencyTable& table) {
  if (table.n() == 0) throw Error(ErrorCode::EmptyTable, "paired table has no observations");
  const auto rows = table.row_totals();
  const auto cols = table.col_totals();
  const auto n = static_cast<double>(table.n());
  double agree = 0.0;
  double chance = 0.0;
  for (std::size_t i = 0; i < table.k(); ++i) {
    agree += static_cast<double>(table.at(i, i));
    chance += static_cast<double>(rows[i]) * static_cast<double>(cols[i]);
  }
  const double p_o = agree / n;
  const double p_e = chance / (n * n);
  if (p_e >= 1.0 - 1e-15) throw Error(ErrorCode::UndefinedKappa, "chance agreement is 1 (single category)");
  return (p_o - p_e) / (1.0 - p_e);
}

double weighted_jaccard(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "weighted Jaccard needs aligned vectors");
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0 || y[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "weighted Jaccard needs nonnegative weights");
    lo += std::min(x[i], y[i]);
    hi += std::max(x[i], y[i]);
  }
  if (hi == 0.0) throw Error(ErrorCode::UndefinedJaccard, "both weight vectors are all zero");
  return lo / hi;
}

double weighted_jaccard(const CategoricalDistribution& x, const CategoricalDistribution& y) {
  auto labels = x.labels();
  for (const auto& label : y.labels())
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
  std::vector<double> a;
  std::vector<double> b;
  for (const auto& label : labels) {
    a.push_back(x.probability_of(label));
    b.push_back(y.probability_of(label));
  }
  return weighted_jaccard(a, b);
}

DriftSummary summarize_drift(const PairedContingencyTable& table) {
  auto before = make_distribution(table.before_counts());
  auto after = make_distribution(table.after_counts());
  const double jaccard = weighted_jaccard(before, after);
  std::optional<double> kappa;
  try {
    kappa = cohens_kappa(table);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UndefinedKappa) throw;
  }
  return {std::move(before), std::move(after), stuart_maxwell(table), kappa, jaccard};
}

double success_rate(std::uint64_t n_correct, std::uint64_t n_total) {
  if (n_total == 0) throw Error(ErrorCode::EmptyGroup, "group has no images");
  if (n_correct > n_total) throw Error(ErrorCode::InvalidArgument, "more correct predictions than images");
  return 100.0 * static_cast<double>(n_correct) / static_cast<double>(n_total);
}

std::string_view to_string(Stage stage) noexcept { return stage == Stage::before ? "before" : "after"; }

Stage stage_from_string(std::string_view text) {
  const auto norm = normalize_label(text);
  if (norm == "before") return Stage::before;
  if (norm == "after") return Stage::after;
  throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(text) + "'");
}

ParityResult demographic_parity(const std::vector<GroupCount>& groups) {
  ParityResult result;
  for (const auto& g : groups) {
    const auto gender = normalize_label(g.gender);
    auto hit = std::find_if(result.rates.begin(), result.rates.end(),
                            [&](const GroupRate& r) { return r.gender == gender && r.stage == g.stage; });
    if (hit == result.rates.end()) hit = result.rates.insert(result.rates.end(), GroupRate{gender, g.stage, 0, 0, 0.0});
    hit->correct += g.correct;
    hit->total += g.total;
  }
  for (auto& r : result.rates) r.rate = success_rate(r.correct, r.total);

  const auto rate_of = [&](std::string_view gender, Stage stage) {
    const auto hit = std::find_if(result.rates.begin(), result.rates.end(),
                                  [&](const GroupRate& r) { return r.gender == gender && r.stage == stage; });
    if (hit == result.rates.end())
      throw Error(ErrorCode::EmptyGroup, "no " + std::string(gender) + " group at stage " + std::string(to_string(stage)));
    return hit->rate;
  };
  result.dp_before = rate_of("female", Stage::before) - rate_of("male", Stage::before);
  result.dp_after = rate_of("female", Stage::after) - rate_of("male", Stage::after);
  return result;
}

namespace {

struct Grouped {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd n;
};

double log_likelihood(const Grouped& g, const Eigen::Vector3d& beta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < g.x.rows(); ++i) {
    const double eta = g.x.row(i).dot(beta);
    // log(1 + e^eta) without overflow
    const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    ll += g.y(i) * eta - g.n(i) * softplus;
  }
  return ll;
}

Eigen::VectorXd fitted(const Grouped& g, const Eigen::Vector3d& beta) {
  Eigen::VectorXd p(g.x.rows());
  for (Eigen::Index i = 0; i < g.x.rows(); ++i) p(i) = 1.0 / (1.0 + std::exp(-g.x.row(i).dot(beta)));
  return p;
}

}  // namespace

RegressionResult fit_logistic(const std::vector<LogisticCell>& cells) {
  RegressionResult result;
  for (const auto& cell : cells) {
    const auto gender = normalize_label(cell.gender);
    if (gender != "male" && gender != "female") {
      ++result.excluded_cells;
      continue;
    }
    if (cell.successes + cell.failures == 0) continue;
    result.cells.push_back(cell);
    result.cells.back().gender = gender;
  }
  if (result.cells.size() < 3) throw Error(ErrorCode::InsufficientData, "logistic fit needs at least 3 nonempty cells");

  Grouped g{Eigen::MatrixXd(static_cast<Eigen::Index>(result.cells.size()), 3),
            Eigen::VectorXd(static_cast<Eigen::Index>(result.cells.size())),
            Eigen::VectorXd(static_cast<Eigen::Index>(result.cells.size()))};
  // successes/failures per level of each indicator
  std::array<std::array<double, 2>, 4> level{};  // before, after, male, female
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const auto& cell = result.cells[c];
    const auto i = static_cast<Eigen::Index>(c);
    const bool before = cell.stage == Stage::before;
    const bool male = cell.gender == "male";
    g.x.row(i) << 1.0, before ? 1.0 : 0.0, male ? 1.0 : 0.0;
    g.y(i) = static_cast<double>(cell.successes);
    g.n(i) = static_cast<double>(cell.successes + cell.failures);
    for (std::size_t lv : {before ? 0U : 1U, male ? 2U : 3U}) {
      level[lv][0] += static_cast<double>(cell.successes);
      level[lv][1] += static_cast<double>(cell.failures);
    }
  }
  for (std::size_t lv = 0; lv < 4; lv += 2) {
    if (level[lv][0] + level[lv][1] == 0.0 || level[lv + 1][0] + level[lv + 1][1] == 0.0)
      throw Error(ErrorCode::InsufficientData, lv == 0 ? "cells span only one stage" : "cells span only one gender");
  }
  for (const auto& counts : level)
    if (counts[0] == 0.0 || counts[1] == 0.0) result.separation = true;

  Eigen::Vector3d beta = Eigen::Vector3d::Zero();
  double ll = log_likelihood(g, beta);
  bool converged = false;
  for (result.iterations = 1; result.iterations <= 100; ++result.iterations) {
    const Eigen::VectorXd p = fitted(g, beta);
    const Eigen::VectorXd w = g.n.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
    const Eigen::Vector3d grad = g.x.transpose() * (g.y - g.n.cwiseProduct(p));
    const Eigen::Matrix3d info = g.x.transpose() * w.asDiagonal() * g.x;
    Eigen::Vector3d step = info.ldlt().solve(grad);
    if (!step.allFinite()) break;

    double next_ll = log_likelihood(g, beta + step);
    for (int halving = 0; halving < 50 && next_ll < ll; ++halving) {
      step *= 0.5;
      next_ll = log_likelihood(g, beta + step);
    }
    beta += step;
    ll = std::max(ll, next_ll);
    if (step.cwiseAbs().maxCoeff() < 1e-10) {
      converged = true;
      break;
    }
  }
  result.iterations = std::min(result.iterations, 100);
  if (!converged && !result.separation)
    throw Error(ErrorCode::NoConvergence, "IRLS did not converge in 100 iterations");

  const Eigen::VectorXd p = fitted(g, beta);
  const Eigen::VectorXd w = g.n.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
  const Eigen::Matrix3d info = g.x.transpose() * w.asDiagonal() * g.x;
  const Eigen::Matrix3d cov = info.inverse();
  result.log_likelihood = log_likelihood(g, beta);
  result.gradient_max_norm = (g.x.transpose() * (g.y - g.n.cwiseProduct(p))).cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto k = static_cast<std::size_t>(j);
    result.coefficients[k] = beta(j);
    result.odds_ratios[k] = std::exp(beta(j));
    result.std_errors[k] = std::sqrt(std::max(0.0, cov(j, j)));
    result.z_values[k] = result.std_errors[k] > 0.0 ? beta(j) / result.std_errors[k] : 0.0;
    result.p_values[k] = std::erfc(std::abs(result.z_values[k]) / std::sqrt(2.0));
  }
  return result;
}

}  // namespace biasloop::stats
