#include <doctest.h>

#include <cmath>
#include <random>

#include "patchcert/train.hpp"
#include "support/oracles.hpp"
#include "support/reference_vit.hpp"

using namespace patchcert;

namespace {

ViTConfig tiny_config() {
  ViTConfig cfg;
  cfg.height = cfg.width = 8;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.classes = 2;
  return cfg;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("noise-free stripes are constant images") {
    const auto d = make_stripe_dataset(40, 6, 6, 2, 0.0f, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const float level = d.labels[i] == 0 ? 0.25f : 0.75f;
      for (float v : d.images[i].pixels) CHECK(v == level);
    }
  }

  TEST_CASE("stripe data is deterministic and split five, one, two eighths") {
    const auto a = make_stripe_dataset(256, 16, 16, 4, 0.1f, 0);
    CHECK(a == make_stripe_dataset(256, 16, 16, 4, 0.1f, 0));
    CHECK_FALSE(a == make_stripe_dataset(256, 16, 16, 4, 0.1f, 1));
    CHECK(a.subset(Split::train).size() == 160);
    CHECK(a.subset(Split::val).size() == 32);
    CHECK(a.subset(Split::test).size() == 64);
    CHECK_THROWS_AS(make_stripe_dataset(8, 4, 4, 1, 0.1f, 0), ParameterError);
  }

  TEST_CASE("one pixel column separates the noisy stripe classes") {
    const int k = 4;
    const auto d = make_stripe_dataset(1000, 16, 16, k, 0.1f, 5);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::size_t col = i % 16;
      double mean = 0.0;
      for (int r = 0; r < 16; ++r) mean += d.images[i].at(r, static_cast<int>(col), 0);
      mean /= 16.0;
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (std::abs(mean - stripe_level(c, k)) < std::abs(mean - stripe_level(best, k))) best = c;
      correct += best == d.labels[i];
    }
    CHECK(correct == d.size());
  }

  TEST_CASE("early stopping selection") {
    CHECK(early_stopping_select({0.5, 0.7, 0.6}, 5) == 1);
    CHECK(early_stopping_select({0.1, 0.2, 0.3, 0.4}, 2) == 3);
    CHECK(early_stopping_select({0.7, 0.7}, 5) == 0);
    CHECK(early_stopping_select({0.9, 0.1, 0.1, 0.95}, 2) == 0);
    CHECK(early_stopping_should_stop({0.9, 0.1, 0.1}, 2));
    CHECK_FALSE(early_stopping_should_stop({0.9, 0.1}, 2));
    CHECK_THROWS_AS(early_stopping_select({}, 2), ParameterError);
  }

  TEST_CASE("learning-rate schedule") {
    TrainConfig c;
    c.lr = 1.0f;
    CHECK(c.lr_at(7) == 1.0f);
    c.lr_decay = 0.5f;
    c.lr_period = 2;
    CHECK(c.lr_at(1) == 1.0f);
    CHECK(c.lr_at(2) == 0.5f);
    CHECK(c.lr_at(5) == 0.25f);
  }

  TEST_CASE("training config validation") {
    TrainConfig c;
    c.momentum = 1.0f;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ParameterError);
  }

  TEST_CASE("zero learning rate leaves parameters bit-identical") {
    const ViTConfig vit = tiny_config();
    const auto data = make_stripe_dataset(16, 8, 8, 2, 0.1f, 3);
    TrainConfig cfg;
    cfg.lr = 0.0f;
    cfg.batch_size = 4;
    auto params = init_params(vit, 1);
    const auto before = params;
    SgdState state = make_sgd_state(vit);
    std::mt19937_64 rng(0);
    train_epoch(params, state, data, vit, cfg, 0, rng);
    CHECK(params == before);
  }

  TEST_CASE("one SGD step moves by -lr (g + wd theta) with g from finite differences") {
    const ViTConfig vit = tiny_config();
    auto data = make_stripe_dataset(1, 8, 8, 2, 0.1f, 4);
    TrainConfig cfg;
    cfg.lr = 0.1f;
    cfg.weight_decay = 0.01f;
    cfg.batch_size = 1;
    cfg.b_train = 8;  // full-width ablation: the sampled anchor does not matter
    auto params = random_params(vit, 2, 0.3f);
    const auto before = params;
    SgdState state = make_sgd_state(vit);
    std::mt19937_64 rng(0);
    train_epoch(params, state, data, vit, cfg, 0, rng);

    const auto z = column_ablation(data.images[0], 0, 8);
    auto P = reference::to_double(before);
    const double h = 1e-3;
    double diff = 0.0, norm = 0.0;
    std::vector<const Tensor*> after_t;
    params.for_each([&](const std::string&, const Tensor& t) { after_t.push_back(&t); });
    std::size_t ti = 0;
    before.for_each([&](const std::string& name, const Tensor& t) {
      auto& v = P.at(name);
      const Tensor& after = *after_t[ti++];
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double orig = v[i];
        v[i] = orig + h;
        const double up = reference::cross_entropy(reference::logits(z, P, vit), data.labels[0]);
        v[i] = orig - h;
        const double down = reference::cross_entropy(reference::logits(z, P, vit), data.labels[0]);
        v[i] = orig;
        const double g = (up - down) / (2 * h);
        const double expected = -cfg.lr * (g + cfg.weight_decay * t[i]);
        const double actual = static_cast<double>(after[i]) - t[i];
        diff += (expected - actual) * (expected - actual);
        norm += expected * expected;
      }
    });
    CHECK(std::sqrt(diff) / std::sqrt(norm) < 1e-3);
  }

  TEST_CASE("momentum update rule") {
    ViTConfig vit = tiny_config();
    auto params = zero_params(vit);
    params.head_b[0] = 1.0f;
    auto grad = zero_params(vit);
    grad.head_b[0] = 2.0f;
    SgdState state = make_sgd_state(vit);
    sgd_step(params, state, grad, 0.5f, 0.9f, 0.1f);
    // v = 2 + 0.1·1 = 2.1, θ = 1 − 0.5·2.1
    CHECK(state.velocity.head_b[0] == doctest::Approx(2.1f));
    CHECK(params.head_b[0] == doctest::Approx(1.0f - 1.05f));
    sgd_step(params, state, grad, 0.5f, 0.9f, 0.1f);
    const float v2 = 0.9f * 2.1f + 2.0f + 0.1f * (1.0f - 1.05f);
    CHECK(state.velocity.head_b[0] == doctest::Approx(v2));
  }

  TEST_CASE("divergence reports the batch") {
    const ViTConfig vit = tiny_config();
    const auto data = make_stripe_dataset(8, 8, 8, 2, 0.1f, 3);
    TrainConfig cfg;
    cfg.batch_size = 4;
    auto params = init_params(vit, 1);
    params.head_w[0] = std::numeric_limits<float>::quiet_NaN();
    SgdState state = make_sgd_state(vit);
    std::mt19937_64 rng(0);
    try {
      train_epoch(params, state, data, vit, cfg, 0, rng);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.batch_index == 0);
    }
  }

  TEST_CASE("ablation accuracy of a constant classifier") {
    ViTConfig vit = tiny_config();
    auto params = zero_params(vit);
    params.head_b[1] = 1.0f;
    LabeledDataset d = make_stripe_dataset(10, 8, 8, 2, 0.0f, 2);
    for (auto& l : d.labels) l = 1;
    CHECK(ablation_accuracy(params, vit, d, 3, AblationKind::column) == 1.0);
    CHECK(ablation_accuracy(params, vit, d, 2, AblationKind::block, 2) == 1.0);
  }

  TEST_CASE("full-width evaluation equals plain accuracy") {
    const ViTConfig vit = tiny_config();
    const auto params = random_params(vit, 6);
    const auto d = make_stripe_dataset(12, 8, 8, 2, 0.2f, 6);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      correct += argmax(full_token_logits(column_ablation(d.images[i], 0, 8), params, vit)) == d.labels[i];
    CHECK(ablation_accuracy(params, vit, d, 8, AblationKind::column) ==
          doctest::Approx(static_cast<double>(correct) / 12.0));
  }

  TEST_CASE("training is deterministic and learns the toy task") {
    ViTConfig vit;
    const auto data = make_stripe_dataset(128, 16, 16, 4, 0.1f, 0);
    TrainConfig cfg;
    cfg.epochs = 4;
    const auto init = init_params(vit, 0);
    std::vector<EpochLog> logs;
    const auto a = train(init, data.subset(Split::train), data.subset(Split::val), vit, cfg,
                         [&](const EpochLog& e) { logs.push_back(e); });
    const auto b = train(init, data.subset(Split::train), data.subset(Split::val), vit, cfg);
    CHECK(a.best == b.best);
    CHECK(logs.size() == a.history.size());
    CHECK(logs.back().train_loss < logs.front().train_loss);
  }
}
