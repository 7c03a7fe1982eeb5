#include <doctest.h>

#include <cmath>

#include "biasloop/adapters/prompts.hpp"
#include "biasloop/adapters/synthetic_world.hpp"
#include "biasloop/core/error.hpp"
#include "biasloop/core/hashing.hpp"
#include "biasloop/loop/loop_engine.hpp"
#include "support/mock_backends.hpp"

using namespace biasloop;
using namespace biasloop::loop;
using adapters::Modality;

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

LoopParams params(int max_iters, double threshold = 0.95, std::uint64_t seed = 11) {
  LoopParams p;
  p.max_iters = max_iters;
  p.epsilon = threshold;
  p.gamma = threshold;
  p.random_seed = seed;
  return p;
}

mock::ScriptedBackend scripted(std::vector<Embedding> text, std::vector<Embedding> image) {
  return mock::ScriptedBackend(std::move(text), std::move(image));
}

// Fails the n-th describe call (1-based) with BackendUnavailable.
class DescribeOutage final : public adapters::Backend {
 public:
  DescribeOutage(std::shared_ptr<adapters::Backend> inner, int fail_at) : inner_(std::move(inner)), fail_at_(fail_at) {}
  Image generate_image(const std::string& p, std::uint64_t s) override { return inner_->generate_image(p, s); }
  Description describe_image(const std::string& p, const Image& i) override {
    if (++calls_ == fail_at_) throw BackendUnavailable("describer down");
    return inner_->describe_image(p, i);
  }
  Embedding embed(const adapters::EmbedPayload& x) override { return inner_->embed(x); }
  Heatmap fetch_saliency(const Image& i, const std::string& p, std::size_t t) override {
    return inner_->fetch_saliency(i, p, t);
  }

 private:
  std::shared_ptr<adapters::Backend> inner_;
  int fail_at_;
  int calls_ = 0;
};

adapters::SyntheticWorldConfig world_config() {
  adapters::SyntheticWorldConfig c;
  c.genders = {"male", "female"};
  c.ethnicities = {"caucasian", "asian"};
  c.ages = {"20-39"};
  c.kernel = {{0.7, 0.1, 0.1, 0.1}, {0.1, 0.7, 0.1, 0.1}, {0.1, 0.1, 0.7, 0.1}, {0.1, 0.1, 0.1, 0.7}};
  c.embedding_noise = 0.3;
  c.noise_seed = 4;
  return c;
}

}  // namespace

TEST_CASE("cosine") {
  const std::vector<double> a{1, 0}, b{0, 2}, c{3, 0};
  CHECK(cosine(a, b) == 0.0);
  CHECK(cosine(a, c) == 1.0);
  CHECK(cosine(std::vector<double>{1, 1}, std::vector<double>{-2, -2}) == doctest::Approx(-1.0));
  CHECK(code_of([&] { (void)cosine(a, std::vector<double>{0, 0}); }) == ErrorCode::ZeroVector);
  CHECK(code_of([&] { (void)cosine(a, std::vector<double>{1}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { (void)cosine(std::vector<double>{}, std::vector<double>{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("text-seeded loop stops at the first crossing") {
  // cos(e2,e1)=0, cos(e3,e2)=0.995 > 0.95, e4 would cross again but is never reached
  auto b = scripted({{1, 0}, {0, 1}, {0.1, 1}, {0.1, 1}}, {{1}});
  const auto trace = run_text_seeded(ConceptSpec::default_emotion(), "happiness", params(10), b, "s1");
  CHECK(trace.termination == Termination::converged);
  REQUIRE(trace.iterations.size() == 3);
  CHECK(trace.image_count() == 4);
  CHECK(trace.description_count() == 3);
  CHECK_FALSE(trace.iterations[0].similarity_to_previous.has_value());
  CHECK(*trace.iterations[1].similarity_to_previous == 0.0);
  CHECK(*trace.iterations[2].similarity_to_previous == doctest::Approx(1.0 / std::sqrt(1.01)));
  CHECK(trace.seed_prompt == "a person feeling happiness");
  CHECK(b.seeds == std::vector<std::uint64_t>{mix(11, 0), mix(11, 1), mix(11, 2), mix(11, 3)});
  const auto loop_prompt =
      adapters::render_description_prompt(ConceptSpec::default_emotion(), adapters::PromptStyle::loop);
  CHECK(b.prompts == std::vector<std::string>(3, loop_prompt));
}

TEST_CASE("similarity equal to the threshold does not converge") {
  // cos((1,0),(3,4)) = 3/5, the nearest double to 0.6
  auto b = scripted({{1, 0}, {3, 4}}, {{1}});
  const auto trace = run_text_seeded(ConceptSpec::default_emotion(), "fear", params(2, 0.6), b);
  CHECK(*trace.iterations[1].similarity_to_previous == 0.6);
  CHECK(trace.termination == Termination::max_iterations);
}

TEST_CASE("loop runs max_iters cycles without a crossing") {
  for (int max_iters = 1; max_iters <= 6; ++max_iters) {
    auto b = scripted({{1, 0}, {0, 1}, {1, 0}, {0, 1}, {1, 0}, {0, 1}}, {{1}});
    const auto trace = run_text_seeded(ConceptSpec::default_emotion(), "anger", params(max_iters), b);
    CHECK(trace.termination == Termination::max_iterations);
    CHECK(trace.description_count() == static_cast<std::size_t>(max_iters));
    CHECK(trace.image_count() == trace.description_count() + 1);
  }
}

TEST_CASE("image-seeded loop uses image similarity") {
  // seed (1,0); im1 (0,1); im2 (1,0) -> cos 0; im3 (1,0.05) -> crossing at t=3
  auto b = scripted({{1, 0}}, {{1, 0}, {0, 1}, {1, 0}, {1, 0.05}, {1, 0}});
  const Image seed{{1, 2, 3}};
  const auto trace = run_image_seeded(seed, ConceptSpec::default_activity(), "Sports", params(8), b, "img");
  CHECK(trace.seed_kind == SeedKind::image);
  CHECK(trace.seed_label == "sports");
  CHECK(trace.seed_image.image == seed);
  CHECK(trace.seed_prompt.empty());
  CHECK(trace.termination == Termination::converged);
  CHECK(trace.iterations.size() == 3);
  CHECK(b.seeds == std::vector<std::uint64_t>{mix(11, 1), mix(11, 2), mix(11, 3)});

  const auto images = similarity_series(trace, Modality::image);
  REQUIRE(images.size() == 3);
  CHECK(images[0].similarity == 0.0);
  CHECK(images[2].similarity > 0.95);
  CHECK(similarity_series(trace, Modality::text).size() == 2);
}

TEST_CASE("seed image identical to its successor does not stop the first cycle") {
  auto b = scripted({{1, 0}}, {{1, 0}, {1, 0}, {0, 1}});
  const auto trace = run_image_seeded(Image{{9}}, ConceptSpec::default_emotion(), "fear", params(2), b);
  CHECK(trace.iterations.size() == 2);
  CHECK(trace.termination == Termination::max_iterations);
}

TEST_CASE("loop errors") {
  auto b = scripted({{1, 0}, {0, 0}}, {{1}});
  CHECK(code_of([&] { (void)run_text_seeded(ConceptSpec::default_emotion(), "fear", params(3), b); }) ==
        ErrorCode::ZeroVector);
  auto blank = scripted({{1, 0}}, {{1}});
  blank.descriptions = {"  \n"};
  CHECK(code_of([&] { (void)run_text_seeded(ConceptSpec::default_emotion(), "fear", params(3), blank); }) ==
        ErrorCode::DegenerateOutput);
  auto any = scripted({{1, 0}}, {{1}});
  CHECK(code_of([&] { (void)run_text_seeded(ConceptSpec::default_emotion(), "fear", params(0), any); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { (void)run_text_seeded(ConceptSpec::default_emotion(), "joy", params(2), any); }) ==
        ErrorCode::VocabularyMismatch);
  CHECK(code_of([&] { (void)run_image_seeded(Image{}, ConceptSpec::default_emotion(), "fear", params(2, 0.0), any); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("backend outage reports the failing iteration") {
  auto world = adapters::make_synthetic_world(world_config());
  for (int fail_at = 1; fail_at <= 3; ++fail_at) {
    DescribeOutage outage(world, fail_at);
    try {
      (void)run_image_seeded(world->seed_image("fear", 1), ConceptSpec::default_emotion(), "fear", params(5, 0.999),
                             outage);
      FAIL("expected an outage");
    } catch (const BackendUnavailable& e) {
      CHECK(e.iteration() == fail_at);
    }
  }
}

TEST_CASE("similarity_series needs two embeddings") {
  LoopTrace t;
  t.iterations.resize(1);
  t.iterations[0].description.embedding = {1.0};
  CHECK(code_of([&] { (void)similarity_series(t, Modality::text); }) == ErrorCode::InsufficientData);
}

TEST_CASE("loops are deterministic under fixed seeds") {
  adapters::SyntheticWorld a(world_config());
  adapters::SyntheticWorld b(world_config());
  const auto spec = ConceptSpec::default_emotion();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ta = run_text_seeded(spec, "sadness", params(5, 0.999, seed), a, "x");
    const auto tb = run_text_seeded(spec, "sadness", params(5, 0.999, seed), b, "x");
    CHECK(ta == tb);
    const auto ia = run_image_seeded(a.seed_image("neutral", seed), spec, "neutral", params(5, 0.999, seed), a);
    const auto ib = run_image_seeded(b.seed_image("neutral", seed), spec, "neutral", params(5, 0.999, seed), b);
    CHECK(ia == ib);
  }
}

TEST_CASE("derive_seed separates seeds") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(7, "seed-00001") == mix(7, fnv1a(std::string_view("seed-00001"))));
}

TEST_CASE("batch captures failures, keeps order and matches sequential runs") {
  auto world = adapters::make_synthetic_world(world_config());
  const auto spec = ConceptSpec::default_emotion();
  std::vector<SeedSpec> seeds;
  for (int i = 0; i < 24; ++i) {
    const std::string id = "s" + std::to_string(i);
    if (i % 3 == 0)
      seeds.push_back({id, SeedKind::text, "fear", std::nullopt});
    else
      seeds.push_back({id, SeedKind::image, "anger", world->seed_image("anger", static_cast<std::uint64_t>(i))});
  }
  seeds[5].image = Image{{0xDE, 0xAD}};
  auto poisoned = std::make_shared<mock::PoisonedImageBackend>(world, *seeds[5].image);
  auto probe = std::make_shared<mock::ConcurrencyProbe>(poisoned);
  seeds.push_back({"no-image", SeedKind::image, "anger", std::nullopt});

  int reported = 0;
  const auto p = params(4, 0.999, 99);
  const auto outcomes = run_batch(seeds, spec, p, *probe, {4, 2}, [&](const SeedOutcome&) { ++reported; });
  CHECK(reported == static_cast<int>(seeds.size()));
  CHECK(probe->peak() <= 2 * 4);
  REQUIRE(outcomes.size() == seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(outcomes[i].id == seeds[i].id);
    if (i == 5) {
      CHECK(outcomes[i].error_code == ErrorCode::BackendUnavailable);
      CHECK(outcomes[i].failed_iteration == 0);
      CHECK_FALSE(outcomes[i].trace.has_value());
    } else if (seeds[i].id == "no-image") {
      CHECK(outcomes[i].error_code == ErrorCode::InvalidArgument);
    } else {
      REQUIRE(outcomes[i].trace.has_value());
      auto seq = p;
      seq.random_seed = derive_seed(p.random_seed, seeds[i].id);
      const auto expected = seeds[i].kind == SeedKind::text
                                ? run_text_seeded(spec, seeds[i].label, seq, *world, seeds[i].id)
                                : run_image_seeded(*seeds[i].image, spec, seeds[i].label, seq, *world, seeds[i].id);
      CHECK(*outcomes[i].trace == expected);
    }
  }
}

TEST_CASE("batch honours the per-capability in-flight cap") {
  auto probe = std::make_shared<mock::ConcurrencyProbe>(adapters::make_synthetic_world(world_config()));
  std::vector<SeedSpec> seeds;
  for (int i = 0; i < 12; ++i) seeds.push_back({"t" + std::to_string(i), SeedKind::text, "fear", std::nullopt});
  (void)run_batch(seeds, ConceptSpec::default_emotion(), params(2, 0.999), *probe, {6, 1});
  // one call per capability at a time; at most four capabilities overlap
  CHECK(probe->peak() <= 4);
}
