#include "patchcert/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchcert/parallel.hpp"

namespace patchcert {
namespace {

Image flip_horizontal(const Image& x) {
  Image out = x;
  for (int r = 0; r < x.height; ++r)
    for (int c = 0; c < x.width; ++c)
      for (int ch = 0; ch < x.channels; ++ch) out.at(r, c, ch) = x.at(r, x.width - 1 - c, ch);
  return out;
}

void accumulate(ModelParams& acc, const ModelParams& g) {
  std::vector<Tensor*> dst;
  acc.for_each([&](const std::string&, Tensor& t) { dst.push_back(&t); });
  std::size_t i = 0;
  g.for_each([&](const std::string&, const Tensor& t) {
    Tensor& d = *dst[i++];
    for (std::size_t j = 0; j < t.numel(); ++j) d[j] += t[j];
  });
}

void scale_all(ModelParams& p, float factor) {
  p.for_each([&](const std::string&, Tensor& t) {
    for (auto& v : t.data()) v *= factor;
  });
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ParameterError("invalid training config: " + what); };
  if (epochs < 1) fail("epochs must be positive");
  if (batch_size < 1) fail("batch size must be positive");
  if (!(lr >= 0.0f)) fail("learning rate must be nonnegative");
  if (!(momentum >= 0.0f && momentum < 1.0f)) fail("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0f)) fail("weight decay must be nonnegative");
  if (b_train < 1) fail("training ablation size must be positive");
  if (patience < 1) fail("patience must be positive");
  if (lr_period < 0 || !(lr_decay > 0.0f)) fail("bad learning-rate schedule");
}

float TrainConfig::lr_at(int epoch) const {
  if (lr_period <= 0) return lr;
  return lr * std::pow(lr_decay, static_cast<float>(epoch / lr_period));
}

float stripe_level(int c, int k) { return (static_cast<float>(c) + 0.5f) / static_cast<float>(k); }

LabeledDataset make_stripe_dataset(int n, int h, int w, int k, float noise, std::uint64_t seed,
                                   int channels) {
  if (n < 0) throw ParameterError("dataset size must be nonnegative");
  if (k < 2 || k > 8) throw ParameterError("stripe dataset supports 2..8 classes, got " + std::to_string(k));
  if (!(noise >= 0.0f && noise < 0.5f)) throw ParameterError("noise must lie in [0, 0.5)");
  if (h < 1 || w < 1 || (channels != 1 && channels != 3)) throw ParameterError("bad stripe image shape");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> label_dist(0, k - 1);
  std::uniform_real_distribution<float> noise_dist(-noise, noise);
  LabeledDataset data;
  data.num_classes = k;
  const int n_train = n * 5 / 8;
  const int n_val = n / 8;
  for (int i = 0; i < n; ++i) {
    const int label = label_dist(rng);
    Image img(h, w, channels);
    const float base = stripe_level(label, k);
    for (auto& v : img.pixels) v = std::clamp(base + (noise > 0.0f ? noise_dist(rng) : 0.0f), 0.0f, 1.0f);
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
    data.splits.push_back(i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test);
  }
  return data;
}

SgdState make_sgd_state(const ViTConfig& cfg) { return {zero_params(cfg)}; }

void sgd_step(ModelParams& params, SgdState& state, const ModelParams& grad, float lr, float momentum,
              float weight_decay) {
  std::vector<Tensor*> theta, vel;
  std::vector<const Tensor*> g;
  params.for_each([&](const std::string&, Tensor& t) { theta.push_back(&t); });
  state.velocity.for_each([&](const std::string&, Tensor& t) { vel.push_back(&t); });
  grad.for_each([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  for (std::size_t i = 0; i < theta.size(); ++i) {
    Tensor& p = *theta[i];
    Tensor& v = *vel[i];
    const Tensor& gi = *g[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      v[j] = momentum * v[j] + gi[j] + weight_decay * p[j];
      p[j] -= lr * v[j];
    }
  }
}

EpochResult train_epoch(ModelParams& params, SgdState& state, const LabeledDataset& data, const ViTConfig& vit,
                        const TrainConfig& cfg, int epoch, std::mt19937_64& rng) {
  cfg.validate();
  data.validate();
  if (data.empty()) throw ParameterError("cannot train on an empty dataset");
  const AblationSpec spec{cfg.kind, cfg.b_train, 1, 0};
  spec.validate(vit.height, vit.width);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  EpochResult result;
  result.lr = cfg.lr_at(epoch);
  std::uniform_int_distribution<int> row_dist(0, vit.height - 1);
  std::uniform_int_distribution<int> col_dist(0, vit.width - 1);
  std::bernoulli_distribution flip(0.5);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
    const std::size_t end = std::min(order.size(), start + batch);
    ModelParams grad = zero_params(vit);
    double batch_loss = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t idx = order[i];
      Image img = data.images[idx];
      if (cfg.horizontal_flip && flip(rng)) img = flip_horizontal(img);
      Anchor anchor{0, col_dist(rng)};
      if (cfg.kind == AblationKind::block) anchor.top = row_dist(rng);
      const auto out = loss_and_gradient(make_ablation(img, spec, anchor), data.labels[idx], params, vit);
      batch_loss += out.loss;
      correct += argmax(out.logits) == data.labels[idx];
      accumulate(grad, out.grad);
    }
    if (!std::isfinite(batch_loss)) {
      throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(b), b);
    }
    scale_all(grad, 1.0f / static_cast<float>(end - start));
    sgd_step(params, state, grad, result.lr, cfg.momentum, cfg.weight_decay);
    loss_sum += batch_loss;
  }
  result.mean_loss = loss_sum / static_cast<double>(data.size());
  result.train_ablation_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return result;
}

std::size_t early_stopping_select(const std::vector<double>& history, int patience) {
  if (history.empty()) throw ParameterError("early stopping needs a nonempty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (i - best > static_cast<std::size_t>(patience)) break;
    if (history[i] > history[best]) best = i;
  }
  return best;
}

bool early_stopping_should_stop(const std::vector<double>& history, int patience) {
  if (history.empty()) return false;
  const std::size_t best = early_stopping_select(history, patience);
  return history.size() - 1 - best >= static_cast<std::size_t>(patience);
}

double ablation_accuracy(const ModelParams& params, const ViTConfig& vit, const LabeledDataset& data, int b_eval,
                         AblationKind kind, int workers) {
  if (data.empty()) throw ParameterError("cannot evaluate on an empty dataset");
  const AblationSpec spec{kind, b_eval, 1, 0};
  const auto anchors = ablation_anchors(vit.height, vit.width, spec);
  std::vector<std::size_t> correct(data.size(), 0);
  parallel_for(data.size(), workers, [&](std::size_t i) {
    for (const auto& a : anchors) {
      correct[i] += process_ablation(make_ablation(data.images[i], spec, a), params, vit) == data.labels[i];
    }
  });
  const auto total = static_cast<double>(data.size() * anchors.size());
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), std::size_t{0})) / total;
}

TrainResult train(const ModelParams& init, const LabeledDataset& train_set, const LabeledDataset& val_set,
                  const ViTConfig& vit, const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch,
                  int workers) {
  cfg.validate();
  check_params(init, vit);
  if (val_set.empty()) throw ParameterError("early stopping needs a validation set");
  std::mt19937_64 rng(cfg.seed);
  ModelParams params = init;
  SgdState state = make_sgd_state(vit);
  TrainResult result;
  result.best = params;
  std::vector<double> val_history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const EpochResult er = train_epoch(params, state, train_set, vit, cfg, epoch, rng);
    const double val_acc = ablation_accuracy(params, vit, val_set, cfg.b_train, cfg.kind, workers);
    val_history.push_back(val_acc);
    const EpochLog log{epoch, er.mean_loss, val_acc, er.lr};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
    const std::size_t best = early_stopping_select(val_history, cfg.patience);
    if (best == val_history.size() - 1) {
      result.best = params;
      result.best_epoch = best;
    }
    if (early_stopping_should_stop(val_history, cfg.patience)) break;
  }
  return result;
}

}  // namespace patchcert
