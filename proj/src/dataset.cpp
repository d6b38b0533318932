#include "patchcert/dataset.hpp"

namespace patchcert {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

void LabeledDataset::validate() const {
  if (labels.size() != images.size() || splits.size() != images.size()) {
    throw ParameterError("dataset has " + std::to_string(images.size()) + " images, " +
                         std::to_string(labels.size()) + " labels and " +
                         std::to_string(splits.size()) + " split tags");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ParameterError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                           " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

LabeledDataset LabeledDataset::subset(Split split) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (splits[i] != split) continue;
    out.images.push_back(images[i]);
    out.labels.push_back(labels[i]);
    out.splits.push_back(splits[i]);
  }
  return out;
}

}  // namespace patchcert
