#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchcert {

/// Thrown for out-of-range geometric or configuration parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// h×w×c image in [0,1], stored row-major with interleaved channels (HWC).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c);
  Image(int h, int w, int c, std::vector<float> values);

  float& at(int row, int col, int ch) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  float at(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }

  /// Throws ParameterError unless dimensions and pixel range are valid.
  void validate() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary h×w mask, 1 = retained.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t operator()(int row, int col) const {
    return bits[static_cast<std::size_t>(row) * width + col];
  }
  std::uint8_t& operator()(int row, int col) {
    return bits[static_cast<std::size_t>(row) * width + col];
  }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

struct AblatedImage {
  Image pixels;  // zero wherever mask is 0
  Mask mask;

  friend bool operator==(const AblatedImage&, const AblatedImage&) = default;
};

enum class AblationKind { column, block };

std::string to_string(AblationKind kind);
AblationKind ablation_kind_from_string(const std::string& name);

/// Family of ablations: retained width/side `b`, anchor stride and phase.
struct AblationSpec {
  AblationKind kind = AblationKind::column;
  int b = 1;
  int stride = 1;
  int offset = 0;

  void validate(int h, int w) const;

  friend bool operator==(const AblationSpec&, const AblationSpec&) = default;
};

/// Top-left corner of one ablation. Column ablations use top = 0.
struct Anchor {
  int top = 0;
  int left = 0;
  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Column ablation: columns start, start+1, …, start+b-1 (mod w) are kept.
AblatedImage column_ablation(const Image& x, int start, int b);

/// Block ablation: b×b square at (top, left), wrapping in both axes.
AblatedImage block_ablation(const Image& x, int top, int left, int b);

/// Mask for one ablation of an h×w image, without touching pixels.
Mask ablation_mask(int h, int w, const AblationSpec& spec, Anchor anchor);

/// Applies `mask` to `x`, zeroing every channel of masked pixels.
AblatedImage apply_mask(const Image& x, Mask mask);

/// Anchors of the ablation set in generation order (ascending, row-major for blocks).
std::vector<Anchor> ablation_anchors(int h, int w, const AblationSpec& spec);

/// |S| without enumerating: ⌈(w-offset)/s⌉ columns, or its square-grid analogue.
std::size_t ablation_count(int h, int w, const AblationSpec& spec);

/// Single ablation of `x` at `anchor` under `spec`'s kind and size.
AblatedImage make_ablation(const Image& x, const AblationSpec& spec, Anchor anchor);

/// Full materialized ablation set.
std::vector<AblatedImage> ablation_set(const Image& x, const AblationSpec& spec);

}  // namespace patchcert
