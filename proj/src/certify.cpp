#include "patchcert/certify.hpp"

#include <algorithm>

#include "patchcert/parallel.hpp"

namespace patchcert {
namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  // Floor-correct for negative numerators.
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

struct IndexRange {
  std::int64_t first;
  std::int64_t last;
  std::int64_t size() const { return std::max<std::int64_t>(0, last - first + 1); }
};

// Indices k in [0, count) with base + k·stride inside [lo, hi].
IndexRange anchors_in(std::int64_t lo, std::int64_t hi, std::int64_t base, std::int64_t stride,
                      std::int64_t count) {
  return {std::max<std::int64_t>(0, ceil_div(lo - base, stride)),
          std::min<std::int64_t>(count - 1, floor_div(hi - base, stride))};
}

// Exact max number of strided, wrapping intervals of length b (anchors
// offset, offset+s, … < extent) that a non-wrapping interval of length m
// inside [0, extent) can touch.
//
// Anchor a touches the patch [e-m+1, e] iff a lies in the window
// [e-m-b+2, e] taken mod extent. Unrolling the circle once to the left,
// anchor k appears at offset+k·s and offset+k·s-extent; a window is counted
// by the union of the two index ranges. The maximum is reached with the
// window's right edge on an anchor or at its lowest admissible position.
std::int64_t max_touched_1d(int extent, int b, int stride, int offset, int m) {
  const std::int64_t count = ceil_div(extent - offset, stride);
  const std::int64_t window = static_cast<std::int64_t>(m) + b - 1;
  std::vector<std::int64_t> edges{m - 1};
  for (std::int64_t k = 0; k < count; ++k) {
    const std::int64_t pos = offset + k * stride;
    if (pos >= m - 1) edges.push_back(pos);
  }
  std::int64_t best = 0;
  for (const auto e : edges) {
    const std::int64_t lo = e - window + 1;
    const IndexRange direct = anchors_in(lo, e, offset, stride, count);
    const IndexRange wrapped = anchors_in(lo, e, static_cast<std::int64_t>(offset) - extent, stride, count);
    const IndexRange both{std::max(direct.first, wrapped.first), std::min(direct.last, wrapped.last)};
    best = std::max(best, direct.size() + wrapped.size() - both.size());
  }
  return best;
}

// Summed-area table over an ablation mask: patch hit test in O(1).
class MaskIntegral {
 public:
  explicit MaskIntegral(const Mask& mask)
      : w_(mask.width), sums_(static_cast<std::size_t>(mask.height + 1) * (mask.width + 1), 0) {
    for (int r = 0; r < mask.height; ++r)
      for (int c = 0; c < mask.width; ++c)
        at(r + 1, c + 1) = mask(r, c) + at(r, c + 1) + at(r + 1, c) - at(r, c);
  }
  bool any(int top, int left, int m) const {
    return at(top + m, left + m) - at(top, left + m) - at(top + m, left) + at(top, left) > 0;
  }

 private:
  int& at(int r, int c) { return sums_[static_cast<std::size_t>(r) * (w_ + 1) + c]; }
  int at(int r, int c) const { return sums_[static_cast<std::size_t>(r) * (w_ + 1) + c]; }
  int w_;
  std::vector<int> sums_;
};

void check_budget(std::size_t ablations, std::size_t placements, std::uint64_t budget) {
  const auto work = static_cast<std::uint64_t>(ablations) * placements;
  if (work > budget) {
    throw BudgetError("exhaustive enumeration needs " + std::to_string(work) +
                      " ablation/placement pairs, budget is " + std::to_string(budget) +
                      "; use the closed-form threshold instead");
  }
}

// Calls visit(placement_index, ablation_index) for every intersecting pair.
template <typename Visit>
void for_each_intersection(int h, int w, const AblationSpec& spec, int m,
                           const std::vector<Anchor>& anchors, Visit&& visit) {
  const int rows = h - m + 1;
  const int cols = w - m + 1;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const MaskIntegral integral(ablation_mask(h, w, spec, anchors[a]));
    for (int top = 0; top < rows; ++top)
      for (int left = 0; left < cols; ++left)
        if (integral.any(top, left, m)) visit(static_cast<std::size_t>(top) * cols + left, a);
  }
}

int runner_up_of(const VoteCounts& votes, int predicted) {
  int best = -1;
  for (int c = 0; c < votes.num_classes(); ++c) {
    if (c == predicted) continue;
    if (best < 0 || votes.counts[c] > votes.counts[best]) best = c;
  }
  return best;
}

}  // namespace

VoteCounts aggregate_votes(std::span<const int> predictions, int k) {
  if (k < 1) throw std::out_of_range("class count must be positive");
  VoteCounts v{std::vector<std::int64_t>(static_cast<std::size_t>(k), 0), 0};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    if (p < 0 || p >= k) {
      throw std::out_of_range("prediction " + std::to_string(p) + " at position " + std::to_string(i) +
                              " outside [0," + std::to_string(k) + ")");
    }
    ++v.counts[static_cast<std::size_t>(p)];
  }
  v.total = static_cast<std::int64_t>(predictions.size());
  return v;
}

int smoothed_predict(const VoteCounts& votes) {
  if (votes.total <= 0 || votes.counts.empty()) throw EmptyVotesError("no ablation votes to aggregate");
  return static_cast<int>(std::max_element(votes.counts.begin(), votes.counts.end()) -
                          votes.counts.begin());
}

std::string to_string(DeltaMode mode) {
  switch (mode) {
    case DeltaMode::safe: return "safe";
    case DeltaMode::paper: return "paper";
    case DeltaMode::oracle: return "oracle";
  }
  return "unknown";
}

DeltaMode delta_mode_from_string(const std::string& name) {
  if (name == "safe") return DeltaMode::safe;
  if (name == "paper") return DeltaMode::paper;
  if (name == "oracle") return DeltaMode::oracle;
  throw ParameterError("unknown delta mode '" + name + "' (expected safe, paper or oracle)");
}

std::int64_t delta_closed_form(const AblationSpec& spec, int m, DeltaMode mode) {
  if (m < 1) throw ParameterError("patch size must be positive, got " + std::to_string(m));
  if (spec.b < 1 || spec.stride < 1) throw ParameterError("ablation size and stride must be positive");
  const std::int64_t s = spec.stride;
  std::int64_t side = 0;
  switch (mode) {
    case DeltaMode::safe:
      side = ceil_div(static_cast<std::int64_t>(m) + spec.b - 1, s);
      break;
    case DeltaMode::paper:
      side = s == 1 ? static_cast<std::int64_t>(m) + spec.b - 1 : ceil_div(m + s - 1, s);
      break;
    case DeltaMode::oracle:
      throw ParameterError("oracle mode has no closed form; use delta_oracle");
  }
  return spec.kind == AblationKind::column ? side : side * side;
}

std::int64_t delta_closed_form(int h, int w, const AblationSpec& spec, int m, DeltaMode mode) {
  spec.validate(h, w);
  PatchThreatModel{m}.validate(h, w);
  if (mode != DeltaMode::safe) return delta_closed_form(spec, m, mode);
  const std::int64_t across = max_touched_1d(w, spec.b, spec.stride, spec.offset, m);
  if (spec.kind == AblationKind::column) return across;
  return across * max_touched_1d(h, spec.b, spec.stride, spec.offset, m);
}

std::int64_t delta_oracle(int h, int w, const AblationSpec& spec, int m, std::uint64_t budget) {
  spec.validate(h, w);
  const PatchThreatModel threat{m};
  threat.validate(h, w);
  const auto anchors = ablation_anchors(h, w, spec);
  const std::size_t placements = threat.placements(h, w);
  check_budget(anchors.size(), placements, budget);
  std::vector<std::int64_t> hits(placements, 0);
  for_each_intersection(h, w, spec, m, anchors, [&](std::size_t p, std::size_t) { ++hits[p]; });
  return *std::max_element(hits.begin(), hits.end());
}

std::int64_t resolve_delta(int h, int w, const AblationSpec& spec, int m, DeltaMode mode) {
  if (mode == DeltaMode::oracle) return delta_oracle(h, w, spec, m);
  return delta_closed_form(h, w, spec, m, mode);
}

Certificate certify_votes(const VoteCounts& votes, std::int64_t delta, int m, DeltaMode mode) {
  if (delta < 0) throw ParameterError("delta must be nonnegative");
  Certificate cert;
  cert.predicted = smoothed_predict(votes);
  cert.runner_up = runner_up_of(votes, cert.predicted);
  const std::int64_t top = votes.counts[static_cast<std::size_t>(cert.predicted)];
  const std::int64_t rival = cert.runner_up < 0 ? 0 : votes.counts[static_cast<std::size_t>(cert.runner_up)];
  cert.margin = top - rival;
  cert.delta = delta;
  cert.patch_m = m;
  cert.certified = top > rival + 2 * delta;
  cert.delta_mode = mode;
  return cert;
}

void PatchThreatModel::validate(int h, int w) const {
  if (m < 1 || m > std::min(h, w)) {
    throw ParameterError("patch size m=" + std::to_string(m) + " outside [1," +
                         std::to_string(std::min(h, w)) + "] for a " + std::to_string(h) + "x" +
                         std::to_string(w) + " image");
  }
}

std::size_t PatchThreatModel::placements(int h, int w) const {
  validate(h, w);
  return static_cast<std::size_t>(h - m + 1) * static_cast<std::size_t>(w - m + 1);
}

FlipSearchResult adversarial_flip_search(std::span<const int> predictions, int num_classes,
                                         const AblationSpec& spec, int h, int w, int m,
                                         int defended_class, std::uint64_t budget) {
  spec.validate(h, w);
  const PatchThreatModel threat{m};
  const std::size_t placements = threat.placements(h, w);
  const auto anchors = ablation_anchors(h, w, spec);
  if (predictions.size() != anchors.size()) {
    throw ParameterError("got " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(anchors.size()) + " ablations");
  }
  if (defended_class < 0 || defended_class >= num_classes) {
    throw ParameterError("defended class outside [0," + std::to_string(num_classes) + ")");
  }
  check_budget(anchors.size(), placements, budget);
  const VoteCounts clean = aggregate_votes(predictions, num_classes);

  // hit[p * k + c]: ablations predicting c that placement p intersects.
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::int64_t> hit(placements * k, 0);
  for_each_intersection(h, w, spec, m, anchors, [&](std::size_t p, std::size_t a) {
    ++hit[p * k + static_cast<std::size_t>(predictions[a])];
  });

  const int cols = w - m + 1;
  FlipSearchResult result;
  result.prediction = defended_class;
  result.placement = {0, 0};
  result.attacked_votes = clean;
  for (std::size_t p = 0; p < placements; ++p) {
    std::int64_t touched = 0;
    for (std::size_t c = 0; c < k; ++c) touched += hit[p * k + c];
    result.max_intersected = std::max(result.max_intersected, touched);
    if (result.changed) continue;
    for (int rival = 0; rival < num_classes; ++rival) {
      if (rival == defended_class) continue;
      VoteCounts attacked = clean;
      for (std::size_t c = 0; c < k; ++c) attacked.counts[c] -= hit[p * k + c];
      attacked.counts[static_cast<std::size_t>(rival)] += touched;
      const int pred = smoothed_predict(attacked);
      if (pred != defended_class) {
        result.changed = true;
        result.prediction = pred;
        result.placement = {static_cast<int>(p / cols), static_cast<int>(p % cols)};
        result.attacked_votes = std::move(attacked);
        break;
      }
    }
  }
  return result;
}

std::vector<int> classify_ablations(const Image& x, const AblationSpec& spec,
                                    const BaseClassifier& classify) {
  const auto anchors = ablation_anchors(x.height, x.width, spec);
  std::vector<int> predictions;
  predictions.reserve(anchors.size());
  for (const auto& a : anchors) predictions.push_back(classify(make_ablation(x, spec, a)));
  return predictions;
}

CertificationReport certified_accuracy(const LabeledDataset& data, const BaseClassifier& classify,
                                       const AblationSpec& spec, std::span<const int> patch_sizes,
                                       DeltaMode mode, int workers) {
  if (data.empty()) throw ParameterError("cannot certify an empty dataset");
  data.validate();
  const int h = data.images.front().height;
  const int w = data.images.front().width;
  for (const auto& img : data.images) {
    if (img.height != h || img.width != w) throw ParameterError("dataset images differ in size");
  }
  spec.validate(h, w);

  CertificationReport report;
  report.spec = spec;
  report.delta_mode = mode;
  report.height = h;
  report.width = w;
  for (int m : patch_sizes) report.certified.push_back({m, resolve_delta(h, w, spec, m, mode), 0.0});

  report.per_image.resize(data.size());
  parallel_for(data.size(), workers, [&](std::size_t i) {
    const auto predictions = classify_ablations(data.images[i], spec, classify);
    ImageCertification& out = report.per_image[i];
    out.index = i;
    out.label = data.labels[i];
    out.votes = aggregate_votes(predictions, data.num_classes);
    for (const auto& row : report.certified) {
      out.certificates.push_back(certify_votes(out.votes, row.delta, row.m, mode));
    }
  });

  std::size_t correct = 0;
  std::vector<std::size_t> certified(report.certified.size(), 0);
  for (const auto& img : report.per_image) {
    const bool ok = img.certificates.empty() ? smoothed_predict(img.votes) == img.label
                                             : img.certificates.front().predicted == img.label;
    if (!ok) continue;
    ++correct;
    for (std::size_t j = 0; j < img.certificates.size(); ++j) certified[j] += img.certificates[j].certified;
  }
  const auto n = static_cast<double>(data.size());
  report.standard_accuracy = static_cast<double>(correct) / n;
  for (std::size_t j = 0; j < certified.size(); ++j) {
    report.certified[j].accuracy = static_cast<double>(certified[j]) / n;
  }
  return report;
}

}  // namespace patchcert
