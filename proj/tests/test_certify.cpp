#include <doctest.h>

#include <random>

#include "patchcert/certify.hpp"
#include "support/oracles.hpp"

using namespace patchcert;

namespace {

VoteCounts votes(std::vector<std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  return {std::move(counts), total};
}

LabeledDataset constant_images(int n, int h, int w, int label, int k) {
  LabeledDataset d;
  d.num_classes = k;
  for (int i = 0; i < n; ++i) {
    d.images.emplace_back(h, w, 1);
    d.labels.push_back(label);
    d.splits.push_back(Split::test);
  }
  return d;
}

}  // namespace

TEST_SUITE("certify") {
  TEST_CASE("vote aggregation") {
    const std::vector<int> preds{0, 0, 1};
    CHECK(aggregate_votes(preds, 2).counts == std::vector<std::int64_t>{2, 1});
    const auto empty = aggregate_votes(std::span<const int>{}, 3);
    CHECK(empty.total == 0);
    CHECK(empty.counts == std::vector<std::int64_t>{0, 0, 0});
    CHECK_THROWS_AS(smoothed_predict(empty), EmptyVotesError);
    const std::vector<int> all3(224, 3);
    const auto v = aggregate_votes(all3, 10);
    CHECK(v.counts[3] == 224);
    CHECK(v.total == 224);
    const std::vector<int> bad{0, 2};
    CHECK_THROWS_AS(aggregate_votes(bad, 2), std::out_of_range);
  }

  TEST_CASE("smoothed prediction breaks ties toward the lower index") {
    CHECK(smoothed_predict(votes({5, 3})) == 0);
    CHECK(smoothed_predict(votes({4, 4})) == 0);
    CHECK(smoothed_predict(votes({2, 7, 1})) == 1);
    CHECK(smoothed_predict(votes({1, 3, 3})) == 1);
  }

  TEST_CASE("certification threshold is strict") {
    CHECK(certify_votes(votes({10, 3}), 3, 2).certified);
    CHECK_FALSE(certify_votes(votes({10, 4}), 3, 2).certified);
    std::vector<std::int64_t> big(10, 0);
    big[0] = 224;
    CHECK(certify_votes(votes(big), 50, 32).certified);
    const auto c = certify_votes(votes({1, 6, 2}), 1, 1);
    CHECK(c.predicted == 1);
    CHECK(c.runner_up == 2);
    CHECK(c.margin == 4);
    CHECK(c.certified);
    CHECK(certify_votes(votes({5}), 2, 1).runner_up == -1);
    CHECK_THROWS_AS(certify_votes(votes({0, 0}), 1, 1), EmptyVotesError);
  }

  TEST_CASE("nominal closed forms") {
    const AblationSpec c19{AblationKind::column, 19, 1, 0};
    CHECK(delta_closed_form(c19, 32, DeltaMode::safe) == 50);
    CHECK(delta_closed_form(c19, 32, DeltaMode::paper) == 50);
    AblationSpec s10 = c19;
    s10.stride = 10;
    CHECK(delta_closed_form(s10, 32, DeltaMode::safe) == 5);
    CHECK(delta_closed_form(s10, 32, DeltaMode::paper) == 5);
    AblationSpec s5 = c19;
    s5.stride = 5;
    CHECK(delta_closed_form(s5, 32, DeltaMode::safe) == 10);
    CHECK(delta_closed_form(s5, 32, DeltaMode::paper) == 8);
    const AblationSpec b75{AblationKind::block, 75, 1, 0};
    CHECK(delta_closed_form(b75, 32, DeltaMode::safe) == 11236);
    CHECK(delta_closed_form(b75, 32, DeltaMode::paper) == 11236);
    CHECK_THROWS_AS(delta_closed_form(c19, 32, DeltaMode::oracle), ParameterError);
    CHECK_THROWS_AS(delta_closed_form(c19, 0, DeltaMode::safe), ParameterError);
  }

  TEST_CASE("oracle on small images") {
    CHECK(delta_oracle(4, 8, AblationSpec{AblationKind::column, 3, 1, 0}, 2) == 4);
    CHECK(delta_oracle(4, 12, AblationSpec{AblationKind::column, 3, 2, 0}, 2) == 2);
    for (int b = 1; b <= 6; ++b) CHECK(delta_oracle(6, 6, AblationSpec{AblationKind::column, b, 1, 0}, 6) == 6);
  }

  TEST_CASE("wrap gap: the strided example touches one extra ablation") {
    const AblationSpec s5{AblationKind::column, 19, 5, 0};
    CHECK(delta_oracle(32, 224, s5, 32) == 11);
    CHECK(oracle::max_touched(32, 224, s5, 32) == 11);
    CHECK(delta_closed_form(32, 224, s5, 32, DeltaMode::safe) == 11);
  }

  TEST_CASE("enumeration budget") {
    const AblationSpec big{AblationKind::block, 75, 1, 0};
    CHECK_THROWS_AS(delta_oracle(224, 224, big, 32), BudgetError);
    CHECK_THROWS_AS(delta_oracle(8, 8, AblationSpec{AblationKind::column, 2, 1, 0}, 2, 10), BudgetError);
  }

  TEST_CASE("property: dims-aware closed form equals both oracles") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 400; ++trial) {
      const bool block = trial % 2 == 0;
      const int h = std::uniform_int_distribution<int>(2, 14)(rng);
      const int w = std::uniform_int_distribution<int>(2, 14)(rng);
      const int side = block ? std::min(h, w) : w;
      AblationSpec spec{block ? AblationKind::block : AblationKind::column,
                        std::uniform_int_distribution<int>(1, side)(rng),
                        std::uniform_int_distribution<int>(1, block ? std::min(h, w) : w)(rng), 0};
      spec.offset = std::uniform_int_distribution<int>(0, spec.stride - 1)(rng);
      const int m = std::uniform_int_distribution<int>(1, std::min(h, w))(rng);
      const auto brute = oracle::max_touched(h, w, spec, m);
      CAPTURE(h);
      CAPTURE(w);
      CAPTURE(spec.b);
      CAPTURE(spec.stride);
      CAPTURE(spec.offset);
      CAPTURE(m);
      CHECK(delta_oracle(h, w, spec, m) == brute);
      CHECK(delta_closed_form(h, w, spec, m, DeltaMode::safe) == brute);
      CHECK(resolve_delta(h, w, spec, m, DeltaMode::oracle) == brute);
    }
  }

  TEST_CASE("flip search: partial reassignment keeps the winner") {
    // Five ablations on a 5-wide image, b=1; a 2-wide patch touches two.
    const std::vector<int> preds(5, 0);
    const auto r = adversarial_flip_search(preds, 2, AblationSpec{AblationKind::column, 1, 1, 0}, 3, 5, 2, 0);
    CHECK_FALSE(r.changed);
    CHECK(r.max_intersected == 2);
    CHECK(r.prediction == 0);
  }

  TEST_CASE("flip search: a tie flips toward a lower-index rival") {
    const std::vector<int> preds{1, 1, 1, 0, 0};
    const auto r = adversarial_flip_search(preds, 2, AblationSpec{AblationKind::column, 1, 1, 0}, 3, 5, 1, 1);
    CHECK(r.changed);
    CHECK(r.prediction == 0);
    CHECK(r.attacked_votes.counts == std::vector<std::int64_t>{3, 2});
  }

  TEST_CASE("flip search preconditions") {
    const std::vector<int> preds(5, 0);
    const AblationSpec spec{AblationKind::column, 1, 1, 0};
    CHECK_THROWS_AS(adversarial_flip_search(preds, 2, spec, 3, 5, 6, 0), ParameterError);
    CHECK_THROWS_AS(adversarial_flip_search(std::vector<int>(4, 0), 2, spec, 3, 5, 1, 0), ParameterError);
  }

  TEST_CASE("property: flip search agrees with the exhaustive adversary") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 150; ++trial) {
      const bool block = trial % 3 == 0;
      const int h = std::uniform_int_distribution<int>(3, 9)(rng);
      const int w = std::uniform_int_distribution<int>(3, 9)(rng);
      const int k = std::uniform_int_distribution<int>(2, 4)(rng);
      AblationSpec spec{block ? AblationKind::block : AblationKind::column,
                        std::uniform_int_distribution<int>(1, block ? std::min(h, w) : w)(rng),
                        std::uniform_int_distribution<int>(1, 3)(rng), 0};
      const int m = std::uniform_int_distribution<int>(1, std::min({h, w, 3}))(rng);
      const auto n = oracle::ablations(h, w, spec).size();
      std::vector<int> preds(n);
      std::uniform_int_distribution<int> cls(0, k - 1);
      const int favourite = cls(rng);
      for (auto& p : preds) p = std::bernoulli_distribution(0.7)(rng) ? favourite : cls(rng);
      const int base = oracle::vote_winner(preds, k);
      const auto lib = adversarial_flip_search(preds, k, spec, h, w, m, base);
      const auto ref = oracle::find_attack(preds, k, h, w, spec, m);
      CHECK(lib.changed == ref.has_value());
      CHECK(lib.max_intersected == oracle::max_touched(h, w, spec, m));
    }
  }

  TEST_CASE("certified accuracy requires a correct prediction") {
    const AblationSpec spec{AblationKind::column, 2, 1, 0};
    const std::vector<int> ms{1};
    const auto right = constant_images(1, 4, 8, 1, 2);
    const auto always1 = [](const AblatedImage&) { return 1; };
    const auto r1 = certified_accuracy(right, always1, spec, ms);
    CHECK(r1.standard_accuracy == 1.0);
    CHECK(r1.certified.at(0).accuracy == 1.0);
    CHECK(r1.certified.at(0).delta == 2);
    const auto wrong = constant_images(1, 4, 8, 0, 2);
    const auto r0 = certified_accuracy(wrong, always1, spec, ms);
    CHECK(r0.standard_accuracy == 0.0);
    CHECK(r0.certified.at(0).accuracy == 0.0);
    CHECK(r0.per_image.at(0).certificates.at(0).certified);
  }

  TEST_CASE("certified accuracy is independent of the worker count") {
    LabeledDataset d = constant_images(12, 6, 6, 0, 3);
    std::mt19937_64 rng(5);
    for (auto& img : d.images) img = oracle::random_image(6, 6, 1, rng);
    const auto classify = [](const AblatedImage& z) {
      double s = 0.0;
      for (float v : z.pixels.pixels) s += v;
      return static_cast<int>(s * 7.0) % 3;
    };
    const AblationSpec spec{AblationKind::block, 2, 1, 0};
    const std::vector<int> ms{1, 2};
    const auto a = certified_accuracy(d, classify, spec, ms, DeltaMode::safe, 1);
    const auto b = certified_accuracy(d, classify, spec, ms, DeltaMode::safe, 3);
    REQUIRE(a.per_image.size() == b.per_image.size());
    for (std::size_t i = 0; i < a.per_image.size(); ++i) {
      CHECK(a.per_image[i].votes == b.per_image[i].votes);
      CHECK(a.per_image[i].certificates == b.per_image[i].certificates);
    }
    CHECK(a.standard_accuracy == b.standard_accuracy);
  }

  TEST_CASE("patch threat model") {
    CHECK(PatchThreatModel{2}.placements(4, 5) == 12);
    CHECK_THROWS_AS(PatchThreatModel{6}.validate(5, 8), ParameterError);
    CHECK_THROWS_AS(PatchThreatModel{0}.validate(5, 8), ParameterError);
  }
}
