#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "patchcert/dataset.hpp"
#include "patchcert/vit.hpp"

namespace patchcert {

/// Raised when a training step produces a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t batch)
      : std::runtime_error(what), batch_index(batch) {}
  std::size_t batch_index;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  float lr = 0.05f;
  float lr_decay = 1.0f;  // multiply lr by this every lr_period epochs
  int lr_period = 0;      // 0 disables the step schedule
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  int b_train = 3;
  AblationKind kind = AblationKind::column;
  std::uint64_t seed = 0;
  int patience = 5;
  bool horizontal_flip = false;

  void validate() const;
  float lr_at(int epoch) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Synthetic k-class set: class c fills every pixel with (c + 0.5)/k plus
/// uniform noise in [-noise, noise], clamped to [0,1]. Every column carries
/// the label. Split tags: first 62.5% train, next 12.5% val, rest test.
LabeledDataset make_stripe_dataset(int n, int h, int w, int k, float noise, std::uint64_t seed,
                                   int channels = 1);

/// Base colour of class c in the stripe dataset.
float stripe_level(int c, int k);

/// Heavy-ball SGD state (one velocity tensor per parameter).
struct SgdState {
  ModelParams velocity;
};

SgdState make_sgd_state(const ViTConfig& cfg);

/// v ← momentum·v + g + wd·θ; θ ← θ − lr·v.
void sgd_step(ModelParams& params, SgdState& state, const ModelParams& grad, float lr,
              float momentum, float weight_decay);

struct EpochResult {
  double mean_loss = 0.0;
  double train_ablation_accuracy = 0.0;  // over the sampled training ablations
  float lr = 0.0f;
};

/// One pass over `data` (examples tagged train are used as given; no
/// filtering). Each image gets one uniformly random ablation of size
/// b_train, drawn from `rng`.
EpochResult train_epoch(ModelParams& params, SgdState& state, const LabeledDataset& data,
                        const ViTConfig& vit, const TrainConfig& cfg, int epoch,
                        std::mt19937_64& rng);

/// Index of the best validation accuracy seen before `patience` epochs
/// pass without improvement. Ties keep the earliest epoch.
std::size_t early_stopping_select(const std::vector<double>& history, int patience);

/// True once the last `patience` entries brought no improvement.
bool early_stopping_should_stop(const std::vector<double>& history, int patience);

/// Fraction of correct single-ablation predictions over every stride-1
/// ablation of size b_eval of every image.
double ablation_accuracy(const ModelParams& params, const ViTConfig& vit,
                         const LabeledDataset& data, int b_eval, AblationKind kind,
                         int workers = 1);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_ablation_acc = 0.0;
  float lr = 0.0f;
};

struct TrainResult {
  ModelParams best;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> history;
};

/// Full training loop with early stopping on validation ablation accuracy.
/// `on_epoch` (optional) sees every log entry as it is produced.
TrainResult train(const ModelParams& init, const LabeledDataset& train_set,
                  const LabeledDataset& val_set, const ViTConfig& vit, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {}, int workers = 1);

}  // namespace patchcert
