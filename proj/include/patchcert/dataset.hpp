#pragma once

#include <string>
#include <vector>

#include "patchcert/ablation.hpp"

namespace patchcert {

enum class Split { train, val, test };

std::string to_string(Split split);

/// Images with class labels and a split tag per example.
struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<Split> splits;
  int num_classes = 0;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }

  /// Throws ParameterError on length mismatch or labels outside [0, num_classes).
  void validate() const;

  /// Examples carrying the given split tag, in original order.
  LabeledDataset subset(Split split) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

}  // namespace patchcert
