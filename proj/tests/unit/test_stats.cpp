#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "biasloop/core/error.hpp"
#include "biasloop/stats/stats.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/published_counts.hpp"

using namespace biasloop;
using namespace biasloop::stats;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

double round_to(double x, int decimals) {
  const double f = std::pow(10.0, decimals);
  return std::round(x * f) / f;
}

}  // namespace

TEST_CASE("stuart_maxwell anchors") {
  const auto mcnemar = stuart_maxwell(gen::table({{30, 15}, {5, 40}}));
  CHECK(mcnemar.chi2 == 5.0);
  CHECK(mcnemar.df == 1);
  CHECK(mcnemar.p_value == doctest::Approx(std::erfc(std::sqrt(5.0 / 2.0))).epsilon(1e-12));

  const auto diagonal = stuart_maxwell(gen::table({{5, 0, 0}, {0, 7, 0}, {0, 0, 9}}));
  CHECK(diagonal.chi2 == 0.0);
  CHECK(diagonal.p_value == 1.0);

  CHECK(code_of([] { (void)stuart_maxwell(gen::table({{0, 0}, {0, 0}})); }) == ErrorCode::EmptyTable);
}

TEST_CASE("stuart_maxwell collapses empty categories") {
  const auto r = stuart_maxwell(gen::table({{10, 4, 0}, {9, 20, 0}, {0, 0, 0}}));
  CHECK(r.collapsed_categories == std::vector<std::string>{"c2"});
  CHECK(r.df == 1);
  CHECK(r.chi2 == doctest::Approx(25.0 / 13.0));
  CHECK_FALSE(r.singular);

  const auto single = stuart_maxwell(gen::table({{12, 0}, {0, 0}}));
  CHECK(single.chi2 == 0.0);
  CHECK(single.p_value == 1.0);
  CHECK(single.singular);
}

TEST_CASE("stuart_maxwell singular covariance falls back to a pseudo-inverse") {
  // only c0 <-> c1 exchanges; c2 stays on the diagonal, so S has rank 1
  const auto r = stuart_maxwell(gen::table({{10, 6, 0}, {2, 10, 0}, {0, 0, 5}}));
  CHECK(r.singular);
  CHECK(r.df == 1);
  CHECK(r.chi2 == doctest::Approx(2.0));
}

TEST_CASE("stuart_maxwell matches the oracle on random tables") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 5);
    const auto t = gen::random_table(rng, k);
    const auto r = stuart_maxwell(gen::table(t));
    const double expected = oracle::stuart_maxwell(t);
    CHECK(std::fabs(r.chi2 - expected) <= 1e-8 * std::max(1.0, expected));
    CHECK(r.df == static_cast<int>(k) - 1);
  }
}

TEST_CASE("stuart_maxwell equals McNemar exactly for 2x2") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint64_t a = rng() % 300, b = rng() % 300, c = rng() % 300, d = rng() % 300;
    if (b + c == 0) continue;
    const auto r = stuart_maxwell(gen::table({{a, b}, {c, d}}));
    const double diff = static_cast<double>(b) - static_cast<double>(c);
    CHECK(r.chi2 == diff * diff / static_cast<double>(b + c));
  }
}

TEST_CASE("stuart_maxwell is invariant under simultaneous permutation") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 5);
    const auto t = gen::random_table(rng, k);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    oracle::Table p(k, std::vector<std::uint64_t>(k));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) p[i][j] = t[perm[i]][perm[j]];
    const double x = stuart_maxwell(gen::table(t)).chi2;
    CHECK(stuart_maxwell(gen::table(p)).chi2 == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("p decreases as chi2 grows") {
  for (int df = 1; df <= 6; ++df) {
    double last = 1.0;
    for (double x = 0.25; x < 60; x += 0.25) {
      const double p = chi2_sf(x, df);
      CHECK(p < last);
      last = p;
    }
  }
}

TEST_CASE("chi2_sf anchors and oracle grid") {
  CHECK(chi2_sf(0.0, 3) == 1.0);
  CHECK(chi2_sf(2.0 * std::log(2.0), 2) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::fabs(chi2_sf(3.841459, 1) - 0.05) < 1e-6);
  for (int df = 1; df <= 10; ++df)
    for (int i = 0; i <= 100; ++i) {
      const double x = 0.5 * i;
      CHECK(std::fabs(chi2_sf(x, df) - oracle::chi2_sf(x, df)) < 1e-9);
    }
  CHECK(code_of([] { (void)chi2_sf(1.0, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { (void)chi2_sf(-1.0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("bh_adjust anchors") {
  const std::vector<double> p{0.001, 0.02, 0.03, 0.04, 0.2};
  const auto r = bh_adjust(p, 0.05);
  const std::vector<double> q{0.005, 0.05, 0.05, 0.05, 0.2};
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(r.q_values[i] == doctest::Approx(q[i]).epsilon(1e-12));
  CHECK(r.significant == std::vector<bool>{true, true, true, true, false});
  CHECK(bh_adjust(std::vector<double>{0.05}).q_values == std::vector<double>{0.05});
  CHECK(bh_adjust(std::vector<double>{0.3, 0.3, 0.3}).q_values == std::vector<double>{0.3, 0.3, 0.3});
  CHECK(bh_adjust(std::vector<double>{}).q_values.empty());
  CHECK(code_of([] { (void)bh_adjust(std::vector<double>{0.1, 1.2}); }) == ErrorCode::InvalidPValue);
  CHECK(code_of([] { (void)bh_adjust(std::vector<double>{std::nan("")}); }) == ErrorCode::InvalidPValue);
}

TEST_CASE("bh_adjust matches the definition, is monotone and dominates p") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 300; ++trial) {
    const auto p = gen::random_p_values(rng, 1 + rng() % 30);
    const auto q = bh_adjust(p).q_values;
    const auto expected = oracle::bh(p);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(q[i] == doctest::Approx(expected[i]).epsilon(1e-12));
      CHECK(q[i] >= p[i]);
      CHECK(q[i] <= 1.0);
    }
    for (std::size_t r = 1; r < order.size(); ++r) CHECK(q[order[r]] >= q[order[r - 1]]);
  }
}

TEST_CASE("cohens_kappa") {
  CHECK(cohens_kappa(gen::table({{20, 5}, {10, 15}})) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(cohens_kappa(gen::table({{3, 0, 0}, {0, 4, 0}, {0, 0, 8}})) == 1.0);
  // product design: rows (1/2, 1/2), cols (1/5, 4/5)
  CHECK(std::fabs(cohens_kappa(gen::table({{10, 40}, {10, 40}}))) < 1e-15);
  CHECK(code_of([] { (void)cohens_kappa(gen::table({{9, 0}, {0, 0}})); }) == ErrorCode::UndefinedKappa);
  CHECK(code_of([] { (void)cohens_kappa(gen::table({{0, 0}, {0, 0}})); }) == ErrorCode::EmptyTable);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = gen::random_table(rng, 2 + rng() % 5);
    CHECK(std::fabs(cohens_kappa(gen::table(t)) - oracle::kappa(t)) < 1e-12);
  }
}

TEST_CASE("weighted_jaccard") {
  const std::vector<double> x{0.7, 0.3}, y{0.3, 0.7};
  CHECK(std::fabs(weighted_jaccard(x, y) - 0.6 / 1.4) < 1e-9);
  CHECK(weighted_jaccard(x, x) == 1.0);
  CHECK(weighted_jaccard(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(code_of([] { (void)weighted_jaccard(std::vector<double>{0, 0}, std::vector<double>{0, 0}); }) ==
        ErrorCode::UndefinedJaccard);

  const auto a = make_distribution({{"male", 3}, {"female", 1}});
  const auto b = make_distribution({{"female", 1}, {"unsure", 1}});
  // union {male, female, unsure}: min = (0, .25, 0), max = (.75, .5, .5)
  CHECK(weighted_jaccard(a, b) == doctest::Approx(0.25 / 1.75));

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 1 + rng() % 6;
    std::vector<double> p(k), q(k);
    for (auto& v : p) v = u(rng);
    for (auto& v : q) v = rng() % 3 ? u(rng) : 0.0;
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= s;
    const double j = weighted_jaccard(p, q);
    CHECK(j == weighted_jaccard(q, p));
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);
    const double t = std::accumulate(q.begin(), q.end(), 0.0);
    if (t > 0) {
      for (auto& v : q) v /= t;
      CHECK((weighted_jaccard(p, q) == 1.0) == (p == q));
    }
  }
}

TEST_CASE("summarize_drift") {
  const auto s = summarize_drift(gen::table({{20, 5}, {10, 15}}));
  CHECK(s.before.probability_of("c0") == doctest::Approx(0.5));
  CHECK(s.after.probability_of("c0") == doctest::Approx(0.6));
  CHECK(s.homogeneity.chi2 == doctest::Approx(25.0 / 15.0));
  CHECK(*s.kappa == doctest::Approx(0.4));
  CHECK(s.jaccard == doctest::Approx(0.9 / 1.1));
  CHECK_FALSE(summarize_drift(gen::table({{8, 0}, {0, 0}})).kappa.has_value());
}

TEST_CASE("success rates and parity") {
  CHECK(std::fabs(success_rate(2277, 3223) - 70.65) < 0.01);
  CHECK(std::fabs(success_rate(538, 711) - 75.67) < 0.01);
  CHECK(success_rate(0, 12) == 0.0);
  CHECK(code_of([] { (void)success_rate(0, 0); }) == ErrorCode::EmptyGroup);
  CHECK(code_of([] { (void)success_rate(5, 4); }) == ErrorCode::InvalidArgument);

  for (const auto& block : published::blocks()) {
    const auto parity = demographic_parity({{"male", Stage::before, block.before_male.success,
                                             block.before_male.success + block.before_male.failure},
                                            {"female", Stage::before, block.before_female.success,
                                             block.before_female.success + block.before_female.failure},
                                            {"male", Stage::after, block.after_male.success,
                                             block.after_male.success + block.after_male.failure},
                                            {"female", Stage::after, block.after_female.success,
                                             block.after_female.success + block.after_female.failure}});
    CAPTURE(block.name);
    CHECK(parity.dp_before == parity.rates[1].rate - parity.rates[0].rate);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::fabs(parity.rates[i].rate - block.percent[i]) <= 0.01);
    CHECK(std::fabs(parity.dp_before - block.dp[0]) <= 0.01);
    CHECK(std::fabs(parity.dp_after - block.dp[1]) <= 0.01);
  }

  const auto equal = demographic_parity({{"male", Stage::before, 5, 10}, {"female", Stage::before, 5, 10},
                                         {"male", Stage::after, 1, 4}, {"female", Stage::after, 2, 8}});
  CHECK(equal.dp_before == 0.0);
  CHECK(equal.dp_after == 0.0);
  const auto pooled = demographic_parity({{"male", Stage::before, 1, 2}, {"male", Stage::before, 3, 6},
                                          {"female", Stage::before, 1, 4}, {"male", Stage::after, 1, 1},
                                          {"female", Stage::after, 0, 1}});
  CHECK(pooled.dp_before == doctest::Approx(25.0 - 50.0));
  CHECK(code_of([] { (void)demographic_parity({{"male", Stage::before, 1, 2}}); }) == ErrorCode::EmptyGroup);
}

TEST_CASE("fit_logistic reproduces the published coefficients") {
  for (const auto& block : published::blocks()) {
    CAPTURE(block.name);
    const auto fit = fit_logistic(block.cells());
    CHECK(round_to(fit.beta_before(), 3) == doctest::Approx(block.stage.beta));
    CHECK(round_to(fit.beta_male(), 3) == doctest::Approx(block.gender.beta));
    CHECK(round_to(fit.odds_ratios[1], 2) == doctest::Approx(block.stage.odds));
    CHECK(round_to(fit.odds_ratios[2], 2) == doctest::Approx(block.gender.odds));
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(fit.odds_ratios[j] - std::exp(fit.coefficients[j])) < 1e-12);
    CHECK(fit.gradient_max_norm < 1e-8);
    CHECK_FALSE(fit.separation);
  }
}

TEST_CASE("fit_logistic: Wald p-values") {
  // frozen from a separate numpy IRLS fit with scipy normal tails
  const auto near = [](double p, double expected) { return std::fabs(p - expected) <= 5e-5; };
  const auto sports = fit_logistic(published::blocks()[0].cells());
  CHECK(sports.p_values[1] < 0.001);
  CHECK(sports.p_values[2] < 0.001);
  const auto caring = fit_logistic(published::blocks()[1].cells());
  CHECK(near(caring.p_values[1], 0.01249));
  CHECK(near(caring.p_values[2], 0.54674));
  const auto anger = fit_logistic(published::blocks()[3].cells());
  CHECK(near(anger.p_values[1], 0.98881));
  CHECK(near(anger.p_values[2], 0.43439));
  const auto raf_happiness = fit_logistic(published::blocks()[4].cells());
  CHECK(near(raf_happiness.p_values[2], 0.01090));
  const auto raf_anger = fit_logistic(published::blocks()[5].cells());
  CHECK(near(raf_anger.p_values[1], 0.34198));
  CHECK(near(raf_anger.p_values[2], 0.02024));
}

TEST_CASE("fit_logistic edge cases") {
  const auto null = fit_logistic({{Stage::before, "male", 30, 10},
                                  {Stage::before, "female", 3, 1},
                                  {Stage::after, "male", 6, 2},
                                  {Stage::after, "female", 60, 20}});
  CHECK(std::fabs(null.beta_before()) < 1e-10);
  CHECK(std::fabs(null.beta_male()) < 1e-10);
  CHECK(null.alpha() == doctest::Approx(std::log(3.0)));
  CHECK(null.odds_ratios[1] == doctest::Approx(1.0));

  const auto with_unsure = fit_logistic({{Stage::before, "male", 30, 10},
                                         {Stage::before, "female", 3, 1},
                                         {Stage::after, "male", 6, 2},
                                         {Stage::after, "unsure", 1, 7}});
  CHECK(with_unsure.excluded_cells == 1);
  CHECK(with_unsure.cells.size() == 3);

  const auto separated = fit_logistic({{Stage::before, "male", 10, 0},
                                       {Stage::before, "female", 8, 0},
                                       {Stage::after, "male", 4, 6},
                                       {Stage::after, "female", 5, 5}});
  CHECK(separated.separation);

  CHECK(code_of([] {
          (void)fit_logistic({{Stage::before, "male", 1, 1}, {Stage::after, "male", 1, 1}});
        }) == ErrorCode::InsufficientData);
  CHECK(code_of([] {
          (void)fit_logistic({{Stage::before, "male", 1, 1}, {Stage::before, "female", 1, 2}, {Stage::before, "male", 3, 1}});
        }) == ErrorCode::InsufficientData);
}

TEST_CASE("stage names") {
  CHECK(stage_from_string("Before") == Stage::before);
  CHECK(to_string(Stage::after) == "after");
}
