#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchcert/ablation.hpp"
#include "patchcert/dataset.hpp"

namespace patchcert {

class EmptyVotesError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an exhaustive enumeration would exceed its work budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VoteCounts {
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  int num_classes() const noexcept { return static_cast<int>(counts.size()); }
  friend bool operator==(const VoteCounts&, const VoteCounts&) = default;
};

/// Histogram of per-ablation predictions. Throws std::out_of_range for a
/// prediction outside [0, k).
VoteCounts aggregate_votes(std::span<const int> predictions, int k);

/// Most frequent class; ties go to the lowest index. Throws EmptyVotesError
/// when no votes were cast.
int smoothed_predict(const VoteCounts& votes);

/// How Δ is derived.
///  safe   – ⌈(m+b-1)/s⌉ (squared for blocks); with image dimensions it is
///           the exact wrap-aware maximum.
///  paper  – m+b-1 at s=1 and ⌈(m+s-1)/s⌉ when strided (squared for blocks).
///  oracle – exhaustive enumeration of patch placements.
enum class DeltaMode { safe, paper, oracle };

std::string to_string(DeltaMode mode);
DeltaMode delta_mode_from_string(const std::string& name);

/// Dimension-free threshold formulas. `mode` must be safe or paper.
std::int64_t delta_closed_form(const AblationSpec& spec, int m, DeltaMode mode = DeltaMode::safe);

/// Threshold for an h×w image. For safe mode this is the exact number of
/// set members an m×m patch can touch: it accounts for the short wrap gap
/// when s does not divide the image side and saturates at |S|. Paper mode
/// returns the dimension-free formula unchanged.
std::int64_t delta_closed_form(int h, int w, const AblationSpec& spec, int m,
                               DeltaMode mode = DeltaMode::safe);

inline constexpr std::uint64_t kDefaultEnumerationBudget = 100'000'000;

/// Max over all non-wrapping m×m placements of the number of ablations whose
/// mask intersects the patch, by exhaustive enumeration.
std::int64_t delta_oracle(int h, int w, const AblationSpec& spec, int m,
                          std::uint64_t budget = kDefaultEnumerationBudget);

/// Dispatches to the closed form or the oracle according to `mode`.
std::int64_t resolve_delta(int h, int w, const AblationSpec& spec, int m, DeltaMode mode);

struct Certificate {
  int predicted = 0;
  int runner_up = -1;  // -1 only when there is a single class
  std::int64_t margin = 0;
  std::int64_t delta = 0;
  int patch_m = 0;
  bool certified = false;
  DeltaMode delta_mode = DeltaMode::safe;

  friend bool operator==(const Certificate&, const Certificate&) = default;
};

/// Certified iff counts[pred] > counts[runner_up] + 2Δ (integer arithmetic).
Certificate certify_votes(const VoteCounts& votes, std::int64_t delta, int m,
                          DeltaMode mode = DeltaMode::safe);

/// Validated patch geometry: 1 ≤ m ≤ min(h, w), placements never wrap.
struct PatchThreatModel {
  int m = 1;
  void validate(int h, int w) const;
  std::size_t placements(int h, int w) const;
};

struct FlipSearchResult {
  bool changed = false;        // some placement alters the smoothed prediction
  int prediction = 0;          // worst-case smoothed prediction
  Anchor placement;            // patch top-left achieving it
  VoteCounts attacked_votes;   // vote counts after the reassignment
  std::int64_t max_intersected = 0;  // largest number of ablations one patch touched
};

/// Worst-case adversary: for every placement, moves all intersected
/// ablations to a single rival class and reports whether the smoothed
/// prediction can be pushed away from `defended_class`. `predictions` is
/// indexed like ablation_anchors(h, w, spec).
FlipSearchResult adversarial_flip_search(std::span<const int> predictions, int num_classes,
                                         const AblationSpec& spec, int h, int w, int m,
                                         int defended_class,
                                         std::uint64_t budget = kDefaultEnumerationBudget);

/// Classifies one ablation. Must be safe to call concurrently.
using BaseClassifier = std::function<int(const AblatedImage&)>;

/// Per-ablation predictions for every member of the ablation set.
std::vector<int> classify_ablations(const Image& x, const AblationSpec& spec,
                                    const BaseClassifier& classify);

struct ImageCertification {
  std::size_t index = 0;
  int label = 0;
  VoteCounts votes;
  std::vector<Certificate> certificates;  // one per requested patch size
};

struct PatchAccuracy {
  int m = 0;
  std::int64_t delta = 0;
  double accuracy = 0.0;
};

struct CertificationReport {
  AblationSpec spec;
  DeltaMode delta_mode = DeltaMode::safe;
  int height = 0;
  int width = 0;
  double standard_accuracy = 0.0;
  std::vector<PatchAccuracy> certified;
  std::vector<ImageCertification> per_image;
};

/// Standard and certified accuracy of the smoothed classifier over `data`.
/// Images are processed on `workers` threads; results do not depend on the
/// worker count.
CertificationReport certified_accuracy(const LabeledDataset& data, const BaseClassifier& classify,
                                       const AblationSpec& spec, std::span<const int> patch_sizes,
                                       DeltaMode mode = DeltaMode::safe, int workers = 1);

}  // namespace patchcert
