#include "patchcert/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace patchcert {
namespace {

int covered_tokens(int start, int b, int patch, int grid) {
  return std::min((start % patch + b + patch - 1) / patch, grid);
}

Timing summarize(std::vector<double> samples) {
  Timing t;
  const double n = static_cast<double>(samples.size());
  t.mean_s = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double var = 0.0;
  for (double s : samples) var += (s - t.mean_s) * (s - t.mean_s);
  t.stddev_s = samples.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  t.samples = std::move(samples);
  return t;
}

template <typename Fn>
double time_once(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Keeps the optimizer from discarding timed work.
volatile float g_sink = 0.0f;

double run_drop(std::span<const AblatedImage> batch, const ModelParams& params, const ViTConfig& cfg) {
  return time_once([&] {
    float acc = 0.0f;
    for (const auto& z : batch) acc += ablation_logits(z, params, cfg)[0];
    g_sink = acc;
  });
}

double run_full(std::span<const AblatedImage> batch, const ModelParams& params, const ViTConfig& cfg) {
  return time_once([&] {
    float acc = 0.0f;
    for (const auto& z : batch) acc += full_token_logits(z, params, cfg)[0];
    g_sink = acc;
  });
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

int tokens_for_ablation(const ViTConfig& cfg, const AblationSpec& spec, Anchor anchor) {
  cfg.validate();
  spec.validate(cfg.height, cfg.width);
  if (anchor.left < 0 || anchor.left >= cfg.width || anchor.top < 0 || anchor.top >= cfg.height) {
    throw ParameterError("ablation anchor outside the image");
  }
  const int cls = cfg.use_class_token ? 1 : 0;
  const int cols = covered_tokens(anchor.left, spec.b, cfg.patch, cfg.grid_cols());
  if (spec.kind == AblationKind::column) return cfg.grid_rows() * cols + cls;
  return covered_tokens(anchor.top, spec.b, cfg.patch, cfg.grid_rows()) * cols + cls;
}

MacBreakdown predicted_macs(const ViTConfig& cfg, std::uint64_t n) {
  if (n < 1) throw ParameterError("token count must be positive");
  const std::uint64_t d = static_cast<std::uint64_t>(cfg.dim);
  const std::uint64_t L = static_cast<std::uint64_t>(cfg.layers);
  const std::uint64_t cls = cfg.use_class_token ? 1 : 0;
  const std::uint64_t grid = n >= cls ? n - cls : 0;
  MacBreakdown m;
  m.attention = L * 2 * n * n * d;
  m.projections = L * 4 * n * d * d;
  m.mlp = L * 8 * n * d * d;
  m.tokenization = grid * static_cast<std::uint64_t>(cfg.patch_dim()) * d;
  m.head = d * static_cast<std::uint64_t>(cfg.classes);
  return m;
}

SmoothingCost smoothing_cost(const ViTConfig& cfg, const AblationSpec& spec) {
  const auto anchors = ablation_anchors(cfg.height, cfg.width, spec);
  const std::uint64_t full_n = static_cast<std::uint64_t>(cfg.grid_tokens()) + (cfg.use_class_token ? 1 : 0);
  const MacBreakdown full = predicted_macs(cfg, full_n);
  SmoothingCost cost;
  cost.ablations = anchors.size();
  std::uint64_t token_sum = 0;
  for (const auto& a : anchors) {
    const auto n = static_cast<std::uint64_t>(tokens_for_ablation(cfg, spec, a));
    token_sum += n;
    const MacBreakdown drop = predicted_macs(cfg, n);
    cost.macs_drop += drop.total();
    cost.encoder_macs_drop += drop.encoder();
    cost.macs_full += full.total();
    cost.encoder_macs_full += full.encoder();
  }
  cost.mean_tokens_drop = static_cast<double>(token_sum) / static_cast<double>(anchors.size());
  return cost;
}

WallclockResult wallclock_harness(const ModelParams& params, const ViTConfig& cfg, std::span<const AblatedImage> batch,
                                  int trials) {
  if (trials < 3) throw ParameterError("wall-clock harness needs at least 3 trials");
  if (batch.empty()) throw ParameterError("wall-clock harness needs a nonempty batch");
  // Warm-up pass for each path.
  run_drop(batch, params, cfg);
  run_full(batch, params, cfg);
  std::vector<double> drop, full;
  for (int t = 0; t < trials; ++t) {
    drop.push_back(run_drop(batch, params, cfg));
    full.push_back(run_full(batch, params, cfg));
  }
  WallclockResult r;
  r.drop = summarize(std::move(drop));
  r.full = summarize(std::move(full));
  r.speedup = r.full.mean_s / r.drop.mean_s;
  return r;
}

std::vector<BenchRow> bench_sweep(const ModelParams& params, const ViTConfig& cfg, const Image& x, AblationKind kind,
                                  std::span<const int> b_values, int stride, int trials) {
  if (trials < 3) throw ParameterError("bench sweep needs at least 3 trials");
  std::vector<std::vector<AblatedImage>> batches;
  std::vector<BenchRow> rows;
  for (int b : b_values) {
    const AblationSpec spec{kind, b, stride, 0};
    batches.push_back(ablation_set(x, spec));
    const SmoothingCost cost = smoothing_cost(cfg, spec);
    BenchRow row;
    row.b = b;
    row.stride = stride;
    row.n_tokens_mean = cost.mean_tokens_drop;
    row.macs_drop = cost.macs_drop;
    row.macs_full = cost.macs_full;
    row.mac_ratio = static_cast<double>(cost.macs_full) / static_cast<double>(cost.macs_drop);
    rows.push_back(row);
  }
  std::vector<std::vector<double>> drop(rows.size()), full(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    run_drop(batches[i], params, cfg);
    run_full(batches[i], params, cfg);
  }
  for (int t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      drop[i].push_back(run_drop(batches[i], params, cfg));
      full[i].push_back(run_full(batches[i], params, cfg));
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].time_drop_s = summarize(drop[i]).mean_s;
    rows[i].time_full_s = summarize(full[i]).mean_s;
    rows[i].speedup = rows[i].time_full_s / rows[i].time_drop_s;
  }
  return rows;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ParameterError("spearman needs two equal-length series of length >= 2");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace patchcert
