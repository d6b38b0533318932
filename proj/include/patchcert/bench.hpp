#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "patchcert/ablation.hpp"
#include "patchcert/vit.hpp"

namespace patchcert {

/// Surviving token count (class token included) for one ablation after
/// fully masked tokens are dropped. Column: (h/p)·min(⌈(start mod p + b)/p⌉, w/p);
/// blocks apply the same count along both axes.
int tokens_for_ablation(const ViTConfig& cfg, const AblationSpec& spec, Anchor anchor);

/// Itemized multiply-accumulate counts for one forward pass over n tokens.
/// Per layer: attention 2·n²·d (scores plus weighted sum), projections
/// 4·n·d² (Q, K, V, output), MLP 8·n·d². Tokenization embeds the n grid
/// tokens (n minus the class token) at p²c·d each; the head costs d·k.
struct MacBreakdown {
  std::uint64_t attention = 0;
  std::uint64_t projections = 0;
  std::uint64_t mlp = 0;
  std::uint64_t tokenization = 0;
  std::uint64_t head = 0;

  std::uint64_t encoder() const noexcept { return attention + projections + mlp; }
  std::uint64_t total() const noexcept { return encoder() + tokenization + head; }
};

MacBreakdown predicted_macs(const ViTConfig& cfg, std::uint64_t n);

struct SmoothingCost {
  std::size_t ablations = 0;
  double mean_tokens_drop = 0.0;
  std::uint64_t macs_drop = 0;  // surviving tokens only
  std::uint64_t macs_full = 0;  // full grid for every ablation
  std::uint64_t encoder_macs_drop = 0;
  std::uint64_t encoder_macs_full = 0;
};

/// Total MACs of one smoothed forward pass, with and without token dropping.
SmoothingCost smoothing_cost(const ViTConfig& cfg, const AblationSpec& spec);

struct Timing {
  double mean_s = 0.0;
  double stddev_s = 0.0;
  std::vector<double> samples;
};

struct WallclockResult {
  Timing drop;
  Timing full;
  double speedup = 0.0;  // full.mean / drop.mean
};

/// Times the drop-token path and the full-token path over the same
/// pre-built ablations, `trials` times each. Input construction is outside
/// the timed region. Requires trials ≥ 3.
WallclockResult wallclock_harness(const ModelParams& params, const ViTConfig& cfg,
                                  std::span<const AblatedImage> batch, int trials);

/// One row of the bench CSV.
struct BenchRow {
  int b = 0;
  int stride = 1;
  double n_tokens_mean = 0.0;
  std::uint64_t macs_drop = 0;
  std::uint64_t macs_full = 0;
  double mac_ratio = 0.0;  // macs_full / macs_drop
  double time_drop_s = 0.0;
  double time_full_s = 0.0;
  double speedup = 0.0;
};

/// For each b: analytic costs of the smoothed pass plus a timed run over the
/// ablation set of `x`. Trials interleave b values to spread machine noise.
std::vector<BenchRow> bench_sweep(const ModelParams& params, const ViTConfig& cfg, const Image& x,
                                  AblationKind kind, std::span<const int> b_values, int stride,
                                  int trials);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace patchcert
