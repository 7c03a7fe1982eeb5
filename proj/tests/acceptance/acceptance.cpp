// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "biasloop/adapters/prompts.hpp"
#include "biasloop/adapters/synthetic_world.hpp"
#include "biasloop/core/error.hpp"
#include "biasloop/core/hashing.hpp"
#include "biasloop/loop/loop_engine.hpp"
#include "biasloop/report/config.hpp"
#include "biasloop/report/pipeline.hpp"
#include "biasloop/saliency/saliency.hpp"
#include "biasloop/stats/stats.hpp"
#include "support/generators.hpp"
#include "support/mock_backends.hpp"
#include "support/oracles.hpp"
#include "support/published_counts.hpp"

using namespace biasloop;

namespace {

// Collects failed checks for one criterion.
class Ledger {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    failed_ += ok ? 0 : 1;
  }
  void note(std::string text) { notes_.push_back(std::move(text)); }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = fmt::format("{} checks, {} failed", checks_, failed_);
    for (const auto& n : notes_) s += "; " + n;
    for (const auto& f : failures_) s += "\n      - " + f;
    return s;
  }

 private:
  int checks_ = 0;
  int failed_ = 0;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

struct Criterion {
  int number;
  std::string name;
  double budget_seconds;
  std::function<void(Ledger&)> body;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---- 1 ---------------------------------------------------------------------

void regression_reproduction(Ledger& l) {
  int matches = 0;
  for (const auto& block : published::blocks()) {
    const auto fit = stats::fit_logistic(block.cells());
    const std::array<std::pair<int, published::Printed>, 2> terms{std::pair{1, block.stage}, std::pair{2, block.gender}};
    for (const auto& [j, printed] : terms) {
      const auto term = stats::RegressionResult::kTerms[static_cast<std::size_t>(j)];
      const double beta = fit.coefficients[static_cast<std::size_t>(j)];
      const double odds = fit.odds_ratios[static_cast<std::size_t>(j)];
      const double p = fit.p_values[static_cast<std::size_t>(j)];
      l.expect(std::fabs(beta - printed.beta) <= 0.01,
               fmt::format("{} {}: beta {:.4f} vs {:.3f}", block.name, term, beta, printed.beta));
      l.expect(std::fabs(odds - printed.odds) <= 0.01,
               fmt::format("{} {}: OR {:.4f} vs {:.2f}", block.name, term, odds, printed.odds));
      const bool significant = p < 0.01;
      matches += significant == printed.bold ? 1 : 0;
      l.expect(significant == printed.bold, fmt::format("{} {}: Wald p = {:.4f} but the table {} it", block.name, term, p,
                                                        printed.bold ? "bolds" : "does not bold"));
    }
  }
  l.note(fmt::format("significance agrees on {}/12 terms", matches));
}

// ---- 2 ---------------------------------------------------------------------

void descriptive_reproduction(Ledger& l) {
  for (const auto& block : published::blocks()) {
    const std::array<published::Counts, 4> cells{block.before_male, block.before_female, block.after_male,
                                              block.after_female};
    std::vector<stats::GroupCount> groups;
    const std::array<std::pair<const char*, stats::Stage>, 4> keys{
        std::pair{"male", stats::Stage::before}, std::pair{"female", stats::Stage::before},
        std::pair{"male", stats::Stage::after}, std::pair{"female", stats::Stage::after}};
    for (std::size_t i = 0; i < 4; ++i) {
      const double rate = stats::success_rate(cells[i].success, cells[i].success + cells[i].failure);
      l.expect(std::fabs(rate - block.percent[i]) <= 0.01,
               fmt::format("{} cell {}: {:.4f}% vs {:.2f}", block.name, i, rate, block.percent[i]));
      groups.push_back({keys[i].first, keys[i].second, cells[i].success, cells[i].success + cells[i].failure});
    }
    const auto parity = stats::demographic_parity(groups);
    l.expect(std::fabs(parity.dp_before - block.dp[0]) <= 0.01,
             fmt::format("{} DP before {:.4f} vs {:.2f}", block.name, parity.dp_before, block.dp[0]));
    l.expect(std::fabs(parity.dp_after - block.dp[1]) <= 0.01,
             fmt::format("{} DP after {:.4f} vs {:.2f}", block.name, parity.dp_after, block.dp[1]));
  }
}

// ---- 3 ---------------------------------------------------------------------

void stuart_maxwell_oracle(Ledger& l) {
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 5);
    const auto t = gen::random_table(rng, k);
    const auto r = stats::stuart_maxwell(gen::table(t));
    const double expected = oracle::stuart_maxwell(t);
    const double err = std::fabs(r.chi2 - expected) / std::max(1.0, expected);
    worst = std::max(worst, err);
    l.expect(err <= 1e-8, fmt::format("k={} chi2 {} vs oracle {}", k, r.chi2, expected));
    l.expect(r.df == static_cast<int>(k) - 1, fmt::format("k={} df {}", k, r.df));
    if (k == 2) {
      const double b = static_cast<double>(t[0][1]), c = static_cast<double>(t[1][0]);
      const double mcnemar = (b - c) * (b - c) / (b + c);
      l.expect(r.chi2 == mcnemar, fmt::format("McNemar b={} c={}", b, c));
    }
  }
  l.note(fmt::format("max relative error {:.1e}", worst));
  // df for the attribute vocabularies: 5 age bands, binary gender, 3-way gender
  for (const auto& [k, df] : {std::pair{5, 4}, std::pair{2, 1}, std::pair{3, 2}}) {
    const auto r = stats::stuart_maxwell(gen::table(gen::random_table(rng, static_cast<std::size_t>(k))));
    l.expect(r.df == df, fmt::format("{} categories give df {}", k, r.df));
  }
}

// ---- 4 ---------------------------------------------------------------------

void agreement_oracles(Ledger& l) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 5);
    const auto t = gen::random_table(rng, k);
    const double kappa = stats::cohens_kappa(gen::table(t));
    l.expect(std::fabs(kappa - oracle::kappa(t)) <= 1e-12, fmt::format("kappa {} vs {}", kappa, oracle::kappa(t)));
    oracle::Table diag(k, std::vector<std::uint64_t>(k));
    for (std::size_t i = 0; i < k; ++i) diag[i][i] = 1 + rng() % 50;
    l.expect(stats::cohens_kappa(gen::table(diag)) == 1.0, "kappa of a diagonal table");
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng() % 6;
    std::vector<double> x(k), y(k);
    for (auto& v : x) v = u(rng);
    for (auto& v : y) v = rng() % 3 ? u(rng) : 0.0;
    const double sx = std::accumulate(x.begin(), x.end(), 0.0);
    const double sy = std::accumulate(y.begin(), y.end(), 0.0);
    for (auto& v : x) v /= sx;
    if (sy > 0)
      for (auto& v : y) v /= sy;
    else
      y = x;
    const double j = stats::weighted_jaccard(x, y);
    l.expect(j == stats::weighted_jaccard(y, x), "Jaccard symmetric");
    l.expect(j >= 0.0 && j <= 1.0, "Jaccard in [0, 1]");
    l.expect((j == 1.0) == (x == y), "Jaccard is 1 iff equal");
    l.expect(stats::weighted_jaccard(x, x) == 1.0, "Jaccard of identical inputs");
  }

  for (int trial = 0; trial < 500; ++trial) {
    const auto p = gen::random_p_values(rng, 1 + rng() % 40);
    const auto q = stats::bh_adjust(p).q_values;
    const auto expected = oracle::bh(p);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    for (std::size_t i = 0; i < p.size(); ++i) {
      l.expect(std::fabs(q[i] - expected[i]) <= 1e-12 * std::max(1.0, expected[i]), "BH vs step-up oracle");
      l.expect(q[i] >= p[i], "q >= p");
    }
    for (std::size_t r = 1; r < order.size(); ++r) l.expect(q[order[r]] >= q[order[r - 1]], "BH monotone");
  }
}

// ---- 5 ---------------------------------------------------------------------

void chi2_accuracy(Ledger& l) {
  double worst = 0.0;
  for (int df = 1; df <= 10; ++df)
    for (int i = 0; i <= 100; ++i) {
      const double x = 0.5 * i;
      const double err = std::fabs(stats::chi2_sf(x, df) - oracle::chi2_sf(x, df));
      worst = std::max(worst, err);
      l.expect(err < 1e-9, fmt::format("df={} x={} error {:.2e}", df, x, err));
    }
  const double anchor = stats::chi2_sf(3.841459, 1);
  l.expect(std::fabs(anchor - 0.05) <= 1e-6, fmt::format("chi2_sf(3.841459, 1) = {:.9f}", anchor));
  l.note(fmt::format("max error {:.1e}", worst));
}

// ---- 6 ---------------------------------------------------------------------

// One replicate: 1,000 single-pass image seeds through loop, annotation and
// drift testing; returns the gender row's BH q-value.
double synthetic_replicate(const std::vector<std::vector<double>>& kernel, std::uint64_t replicate) {
  auto doc = nlohmann::json{{"concept.kind", "emotion"},
                            {"loop.single_pass", true},
                            {"loop.seed", replicate},
                            {"synthetic.genders", {"male", "female"}},
                            {"synthetic.ethnicities", {"caucasian"}},
                            {"synthetic.ages", {"20-39"}},
                            {"synthetic.initial", {0.5, 0.5}},
                            {"synthetic.noise_seed", 1000 + replicate}};
  if (!kernel.empty()) doc["synthetic.kernel"] = kernel;
  const auto config = report::parse_config(doc);
  const auto world = adapters::make_synthetic_world(config.synthetic);
  const auto corpus = report::synthetic_corpus(*world, 1000, SeedKind::image, {"happiness"}, replicate);
  const auto outcomes =
      loop::run_batch(corpus.seeds, config.concept_spec(), config.effective_loop(), *world, {1, 4});
  std::vector<report::AnnotationRecord> annotations;
  for (const auto& o : outcomes) {
    if (!o.trace) throw Error(*o.error_code, o.error_message);
    auto unit = report::annotate_trace(*o.trace, *world, config.synthetic.schema, config.concept_spec(),
                                       config.experiment, false);
    for (auto& a : unit.annotations) annotations.push_back(std::move(a));
  }
  for (const auto& row : report::compute_drift(annotations, config.synthetic.schema, config))
    if (row.attribute == Attribute::gender) return row.q_value;
  throw Error(ErrorCode::InsufficientData, "no gender row");
}

void synthetic_drift(Ledger& l) {
  int detected = 0;
  int false_alarms = 0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    detected += synthetic_replicate({{0.6, 0.4}, {0.2, 0.8}}, r) <= 0.01 ? 1 : 0;
    false_alarms += synthetic_replicate({}, r) <= 0.01 ? 1 : 0;
  }
  l.expect(detected >= 95, fmt::format("drifting kernel detected in {}/100", detected));
  l.expect(false_alarms <= 3, fmt::format("identity kernel rejected in {}/100", false_alarms));
  l.note(fmt::format("power {}/100, false rejections {}/100", detected, false_alarms));
}

// ---- 7 ---------------------------------------------------------------------

void algorithm_fidelity(Ledger& l) {
  const auto emotion = ConceptSpec::default_emotion();
  const auto activity = ConceptSpec::default_activity();

  // first crossing at t=3 although t=4 would cross too
  {
    mock::ScriptedBackend b;
    b.descriptions = {"a calm face"};
    b.text_embeddings = {{1, 0}, {0, 1}, {0.1, 1}, {0.1, 1}};
    b.image_embeddings = {{1}};
    const auto trace = loop::run_text_seeded(emotion, "neutral", {0.95, 0.95, 10, 1}, b);
    l.expect(trace.termination == Termination::converged && trace.iterations.size() == 3, "text loop stops at t=3");
    l.expect(trace.image_count() == 4 && trace.description_count() == 3, "text loop counts");
  }
  {
    mock::ScriptedBackend b;
    b.descriptions = {"a calm face"};
    b.text_embeddings = {{1, 0}};
    b.image_embeddings = {{1, 0}, {0, 1}, {1, 0}, {1, 0.05}, {1, 0}};
    const auto trace = loop::run_image_seeded(Image{{1}}, emotion, "neutral", {0.95, 0.95, 10, 1}, b);
    l.expect(trace.termination == Termination::converged && trace.iterations.size() == 3, "image loop stops at t=3");
    l.expect(trace.image_count() == trace.description_count() + 1, "image loop counts");
  }
  for (int max_iters = 1; max_iters <= 5; ++max_iters) {
    mock::ScriptedBackend b;
    b.descriptions = {"x"};
    b.text_embeddings = {{1, 0}, {0, 1}, {1, 0}, {0, 1}, {1, 0}};
    b.image_embeddings = {{1}};
    const auto trace = loop::run_text_seeded(emotion, "fear", {0.95, 0.95, max_iters, 1}, b);
    l.expect(trace.termination == Termination::max_iterations &&
                 trace.description_count() == static_cast<std::size_t>(max_iters) &&
                 trace.image_count() == static_cast<std::size_t>(max_iters) + 1,
             fmt::format("max_iters={} counts", max_iters));
  }

  // determinism
  adapters::SyntheticWorldConfig wc;
  wc.genders = {"male", "female"};
  wc.ethnicities = {"caucasian", "asian"};
  wc.ages = {"20-39", "40-69"};
  wc.embedding_noise = 0.4;
  wc.noise_seed = 3;
  adapters::SyntheticWorld a(wc), b(wc);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const LoopParams p{0.99, 0.99, 6, s};
    l.expect(loop::run_text_seeded(emotion, "sadness", p, a) == loop::run_text_seeded(emotion, "sadness", p, b),
             "text loop deterministic");
    const auto seed = a.seed_image("anger", s);
    l.expect(loop::run_image_seeded(seed, emotion, "anger", p, a) == loop::run_image_seeded(seed, emotion, "anger", p, b),
             "image loop deterministic");
  }

  // decision tokens
  auto pick = [&](const std::string& text, const ConceptSpec& spec) -> std::optional<std::string> {
    const auto tokens = adapters::simple_tokenize(text);
    const auto t = saliency::select_decision_token(text, tokens, spec);
    if (!t) return std::nullopt;
    const auto spans = saliency::align_tokens(text, tokens);
    return fmt::format("{}@{}", t->word, spans[t->index].first);
  };
  const std::string enumerated =
      "Out of the categories specified [helping and caring, eating, household, dance and music, personal care, "
      "posing, sports, transportation, work, other, unsure], the activity shown is sports.";
  l.expect(pick(enumerated, activity) == fmt::format("sports@{}", enumerated.rfind("sports")),
           "bracketed enumeration skipped");
  const std::string repeated = "The activity is sports. The sport they are playing is basketball.";
  l.expect(pick(repeated, activity) == fmt::format("sports@{}", repeated.find("sports")), "first occurrence");
  l.expect(!pick("The weather is nice.", emotion), "no admissible token");
  l.expect(pick("A nurse is caring for a patient.", activity) == "caring@11", "multi-word label, second word");
  l.expect(pick("Helping with caring duties.", activity) == "helping@0", "multi-word label, first word wins");
  l.expect(pick("[helping and caring, sports] caring", activity) == "caring@29", "multi-word label after brackets");
  l.expect(!pick("Bread and butter.", activity), "connector words alone");
}

// ---- 8 ---------------------------------------------------------------------

void region_suite(Ledger& l) {
  std::mt19937 rng(99);
  auto box = [&](int h, int w) {
    const int y = static_cast<int>(rng() % static_cast<unsigned>(h));
    const int x = static_cast<int>(rng() % static_cast<unsigned>(w));
    return Box{x, y, 1 + static_cast<int>(rng() % static_cast<unsigned>(w - x)),
               1 + static_cast<int>(rng() % static_cast<unsigned>(h - y))};
  };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<saliency::RegionShares> corpus;
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = 4 + static_cast<int>(rng() % 28);
    const int w = 4 + static_cast<int>(rng() % 28);
    std::optional<Box> face = box(h, w), body = box(h, w);
    std::optional<BinaryMask> hair(BinaryMask(h, w));
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if (rng() % 4 == 0) hair->set(r, c);
    if (rng() % 5 == 0) face.reset();
    if (rng() % 5 == 0) body.reset();
    const auto set = saliency::build_regions(face, hair, body, h, w);
    const int body_top = face && body ? std::max(body->y, face->y + face->h) : body ? body->y : 0;
    bool exact = true;
    std::size_t covered = 0;
    for (auto region : kAllRegions) covered += set.mask(region).count();
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        Region expected = Region::background;
        if (face && face->contains(r, c))
          expected = Region::face;
        else if (hair->get(r, c))
          expected = Region::hair;
        else if (body && body->contains(r, c) && r >= body_top)
          expected = Region::body;
        int owners = 0;
        for (auto region : kAllRegions) owners += set.mask(region).get(r, c) ? 1 : 0;
        exact = exact && owners == 1 && set.owner(r, c) == expected;
      }
    l.expect(exact && covered == static_cast<std::size_t>(h * w), fmt::format("disjoint cover, trial {}", trial));

    std::vector<double> values(static_cast<std::size_t>(h * w));
    for (auto& v : values) v = u(rng);
    const Heatmap map(h, w, values);
    const auto shares = saliency::region_shares(map, set);
    const auto scaled = saliency::region_shares(map.scaled(0.001 + 50 * u(rng)), set);
    bool invariant = true;
    double sum = 0.0;
    for (auto region : kAllRegions) invariant = invariant && std::fabs(shares.share(region) - scaled.share(region)) < 1e-12;
    for (auto region : shares.regions_present) sum += shares.share(region);
    l.expect(invariant, "scale invariance");
    l.expect(std::fabs(sum - 1.0) < 1e-9, "shares sum to 1");

    const auto uniform = saliency::region_shares(Heatmap::filled(h, w, 0.7), set);
    bool equal = true;
    for (auto region : uniform.regions_present)
      equal = equal && std::fabs(uniform.share(region) - 1.0 / static_cast<double>(uniform.regions_present.size())) < 1e-12;
    l.expect(equal, "uniform heatmap gives equal shares");

    if (shares.regions_present.size() == 4) corpus.push_back(shares);
  }
  const auto summary = saliency::aggregate_corpus(corpus);
  double means = 0.0;
  for (auto region : summary.regions) means += summary.stat(region).mean;
  l.expect(std::fabs(means - 1.0) < 1e-9, fmt::format("corpus means sum to {:.12f}", means));

  const std::string text = saliency::format_summary(summary);
  bool shaped = true;
  std::istringstream lines(text);
  std::string line;
  std::size_t count = 0;
  for (; count < summary.regions.size() && std::getline(lines, line); ++count) {
    const auto name = std::string(display_name(summary.regions[count]));
    shaped = shaped && line.rfind(name + " 0.", 0) == 0 && line.find(" \xC2\xB1 0.") == name.size() + 6 &&
             line.size() == name.size() + 1 + 5 + 4 + 5;
  }
  l.expect(shaped && count == 4, "summary rows look like 'Hair 0.231 \xC2\xB1 0.135'");
  l.note(fmt::format("{} four-region images aggregated", summary.n));
}

// ---- 9 ---------------------------------------------------------------------

void prompt_goldens(Ledger& l) {
  const std::string dir = BIASLOOP_GOLDEN_DIR;
  using adapters::PromptStyle;
  l.expect(adapters::render_description_prompt(ConceptSpec::default_emotion(), PromptStyle::loop) ==
               slurp(dir + "/loop_emotion.txt"),
           "loop prompt (affect)");
  l.expect(adapters::render_description_prompt(ConceptSpec::default_activity(), PromptStyle::loop) ==
               slurp(dir + "/loop_activity.txt"),
           "loop prompt (activity)");
  l.expect(adapters::render_description_prompt(ConceptSpec::default_emotion(), PromptStyle::constrained) ==
               slurp(dir + "/constrained_emotion.txt"),
           "emotion prompt");
  l.expect(adapters::render_description_prompt(ConceptSpec::default_activity(), PromptStyle::constrained) ==
               slurp(dir + "/constrained_activity.txt"),
           "activity prompt");
  l.expect(adapters::render_demographic_prompt() == slurp(dir + "/demographic.txt"), "demographic prompt");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "logistic regression reproduces the published coefficients", 1.0, regression_reproduction},
      {2, "success rates and demographic parity reproduce the published table", 1.0, descriptive_reproduction},
      {3, "Stuart-Maxwell matches the brute-force oracle", 10.0, stuart_maxwell_oracle},
      {4, "kappa, weighted Jaccard and BH match their oracles", 5.0, agreement_oracles},
      {5, "chi-square tail accuracy", 5.0, chi2_accuracy},
      {6, "end-to-end synthetic drift detection", 120.0, synthetic_drift},
      {7, "loop and decision-token fidelity", 30.0, algorithm_fidelity},
      {8, "region geometry and share properties", 10.0, region_suite},
      {9, "prompt golden files", 1.0, prompt_goldens},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Ledger ledger;
    const auto started = std::chrono::steady_clock::now();
    try {
      c.body(ledger);
    } catch (const std::exception& e) {
      ledger.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    ledger.expect(seconds <= c.budget_seconds, fmt::format("runtime {:.2f}s over the {:.0f}s budget", seconds, c.budget_seconds));
    const bool ok = ledger.ok();
    failed += ok ? 0 : 1;
    std::cout << fmt::format("{} criterion {}: {} ({:.2f}s) [{}]\n", ok ? "PASS" : "FAIL", c.number, c.name, seconds,
                             ledger.summary());
  }
  std::cout << fmt::format("{}/{} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
