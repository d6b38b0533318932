#include <doctest.h>

#include <random>

#include "patchcert/bench.hpp"
#include "support/oracles.hpp"

using namespace patchcert;

namespace {

ViTConfig imagenet_like() {
  ViTConfig cfg;
  cfg.height = cfg.width = 224;
  cfg.patch = 16;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("bench") {
  TEST_CASE("token counts on the 224 grid") {
    const auto cfg = imagenet_like();
    CHECK(tokens_for_ablation(cfg, {AblationKind::column, 19, 1, 0}, {0, 0}) == 29);
    CHECK(tokens_for_ablation(cfg, {AblationKind::column, 19, 1, 0}, {0, 14}) == 43);
    CHECK(tokens_for_ablation(cfg, {AblationKind::column, 224, 1, 0}, {0, 100}) == 197);
    CHECK(tokens_for_ablation(cfg, {AblationKind::column, 16, 1, 0}, {0, 0}) == 15);
    CHECK(tokens_for_ablation(cfg, {AblationKind::block, 16, 1, 0}, {16, 16}) == 2);
    CHECK_THROWS_AS(tokens_for_ablation(cfg, {AblationKind::column, 16, 1, 0}, {0, 224}), ParameterError);
  }

  TEST_CASE("property: token counts match mask inspection") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      ViTConfig cfg;
      cfg.patch = std::vector<int>{2, 4, 8}[static_cast<std::size_t>(trial % 3)];
      cfg.height = cfg.patch * std::uniform_int_distribution<int>(1, 4)(rng);
      cfg.width = cfg.patch * std::uniform_int_distribution<int>(1, 4)(rng);
      cfg.use_class_token = trial % 2 == 0;
      const bool block = trial % 4 < 2;
      const int side = block ? std::min(cfg.height, cfg.width) : cfg.width;
      const AblationSpec spec{block ? AblationKind::block : AblationKind::column,
                              std::uniform_int_distribution<int>(1, side)(rng), 1, 0};
      const Anchor a{std::uniform_int_distribution<int>(0, cfg.height - 1)(rng),
                     std::uniform_int_distribution<int>(0, cfg.width - 1)(rng)};
      const Mask m = ablation_mask(cfg.height, cfg.width, spec, a);
      CHECK(tokens_for_ablation(cfg, spec, a) == oracle::live_cells(m, cfg.patch) + (cfg.use_class_token ? 1 : 0));
    }
  }

  TEST_CASE("hand-expanded MAC terms") {
    ViTConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    const auto m = predicted_macs(cfg, 5);
    CHECK(m.encoder() == 2 * 25 * 8 + 12 * 5 * 64);
    CHECK(m.encoder() == 4240);
    CHECK(m.head == 8u * 4u);
    CHECK(m.tokenization == 4u * 16u * 8u);
    cfg.dim = 16;
    const auto doubled = predicted_macs(cfg, 10);
    CHECK(doubled.attention == 8 * m.attention);
    CHECK(predicted_macs(cfg, 10).attention == 4 * predicted_macs(cfg, 5).attention);
    CHECK(predicted_macs(cfg, 10).projections == 2 * predicted_macs(cfg, 5).projections);
    CHECK(predicted_macs(cfg, 10).mlp == 2 * predicted_macs(cfg, 5).mlp);
    CHECK_THROWS_AS(predicted_macs(cfg, 0), ParameterError);
  }

  TEST_CASE("prediction equals the instrumented counter on the toy model") {
    ViTConfig cfg;
    const auto params = init_params(cfg, 0);
    std::mt19937_64 rng(0);
    const Image x = oracle::random_image(16, 16, 1, rng);
    const AblationSpec spec{AblationKind::column, 3, 1, 0};
    for (int start = 0; start < 16; ++start) {
      MacCounter counter;
      ablation_logits(make_ablation(x, spec, {0, start}), params, cfg, &counter);
      const auto n = static_cast<std::uint64_t>(tokens_for_ablation(cfg, spec, {0, start}));
      CHECK(counter.macs == predicted_macs(cfg, n).total());
    }
  }

  TEST_CASE("smoothing cost") {
    ViTConfig cfg;
    const auto full = smoothing_cost(cfg, {AblationKind::column, 16, 1, 0});
    CHECK(full.macs_drop == full.macs_full);
    const auto s1 = smoothing_cost(cfg, {AblationKind::column, 4, 1, 0});
    const auto s2 = smoothing_cost(cfg, {AblationKind::column, 4, 2, 0});
    CHECK(s1.ablations == 16);
    CHECK(s2.ablations == 8);
    CHECK(s1.macs_drop < s1.macs_full);
    // Even starts with p=4, b=4: half aligned (one token column), half not.
    std::uint64_t expected = 0;
    for (int start = 0; start < 16; start += 2)
      expected += predicted_macs(cfg, static_cast<std::uint64_t>(tokens_for_ablation(cfg, {AblationKind::column, 4, 2, 0}, {0, start}))).total();
    CHECK(s2.macs_drop == expected);
    double prev = 0.0;
    for (int b = 4; b <= 16; b += 4) {
      const auto c = smoothing_cost(cfg, {AblationKind::column, b, 1, 0});
      const double ratio = static_cast<double>(c.encoder_macs_drop) / static_cast<double>(c.encoder_macs_full);
      CHECK(ratio > prev);
      prev = ratio;
    }
  }

  TEST_CASE("spearman") {
    const std::vector<double> a{1, 2, 3, 4};
    const std::vector<double> b{10, 20, 25, 100};
    const std::vector<double> c{4, 3, 2, 1};
    const std::vector<double> ties{1, 1, 2, 2};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    CHECK(spearman(a, c) == doctest::Approx(-1.0));
    CHECK(spearman(a, ties) == doctest::Approx(0.894427191));
    CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), ParameterError);
  }

  TEST_CASE("wall-clock harness shape") {
    ViTConfig cfg;
    const auto params = init_params(cfg, 0);
    std::mt19937_64 rng(1);
    const auto set = ablation_set(oracle::random_image(16, 16, 1, rng), {AblationKind::column, 16, 4, 0});
    const auto r = wallclock_harness(params, cfg, set, 3);
    CHECK(r.drop.samples.size() == 3);
    CHECK(r.full.samples.size() == 3);
    CHECK(r.speedup > 0.0);
    CHECK_THROWS_AS(wallclock_harness(params, cfg, set, 2), ParameterError);
  }
}
