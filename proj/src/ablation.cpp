#include "patchcert/ablation.hpp"

namespace patchcert {
namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

std::string dims(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace

Image::Image(int h, int w, int c)
    : height(h), width(w), channels(c),
      pixels(static_cast<std::size_t>(h < 0 ? 0 : h) * (w < 0 ? 0 : w) * (c < 0 ? 0 : c), 0.0f) {}

Image::Image(int h, int w, int c, std::vector<float> values)
    : height(h), width(w), channels(c), pixels(std::move(values)) {
  validate();
}

void Image::validate() const {
  if (height < 1 || width < 1) throw ParameterError("image must be at least 1x1, got " + dims(height, width));
  if (channels != 1 && channels != 3) {
    throw ParameterError("image channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (pixels.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ParameterError("image buffer holds " + std::to_string(pixels.size()) +
                         " values, expected " + dims(height, width) + "x" +
                         std::to_string(channels));
  }
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ParameterError("pixel value outside [0,1]");
  }
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b;
  return n;
}

std::string to_string(AblationKind kind) {
  return kind == AblationKind::column ? "column" : "block";
}

AblationKind ablation_kind_from_string(const std::string& name) {
  if (name == "column") return AblationKind::column;
  if (name == "block") return AblationKind::block;
  throw ParameterError("unknown ablation kind '" + name + "' (expected column or block)");
}

void AblationSpec::validate(int h, int w) const {
  if (h < 1 || w < 1) throw ParameterError("image dimensions must be positive, got " + dims(h, w));
  const int limit = kind == AblationKind::column ? w : std::min(h, w);
  if (b < 1 || b > limit) {
    throw ParameterError(to_string(kind) + " ablation size b=" + std::to_string(b) +
                         " outside [1," + std::to_string(limit) + "] for " + dims(h, w));
  }
  if (stride < 1 || stride > w) {
    throw ParameterError("stride " + std::to_string(stride) + " outside [1," + std::to_string(w) + "]");
  }
  if (offset < 0 || offset >= stride) {
    throw ParameterError("offset " + std::to_string(offset) + " outside [0," +
                         std::to_string(stride) + ")");
  }
  if (kind == AblationKind::block && offset >= h) {
    throw ParameterError("offset " + std::to_string(offset) + " exceeds image height " + std::to_string(h));
  }
}

Mask ablation_mask(int h, int w, const AblationSpec& spec, Anchor anchor) {
  Mask mask(h, w);
  if (spec.kind == AblationKind::column) {
    if (anchor.left < 0 || anchor.left >= w) {
      throw ParameterError("column start " + std::to_string(anchor.left) + " outside [0," +
                           std::to_string(w) + ")");
    }
    if (spec.b < 1 || spec.b > w) {
      throw ParameterError("column width " + std::to_string(spec.b) + " outside [1," + std::to_string(w) + "]");
    }
    for (int t = 0; t < spec.b; ++t) {
      const int col = (anchor.left + t) % w;
      for (int row = 0; row < h; ++row) mask(row, col) = 1;
    }
  } else {
    if (anchor.top < 0 || anchor.top >= h || anchor.left < 0 || anchor.left >= w) {
      throw ParameterError("block anchor (" + std::to_string(anchor.top) + "," +
                           std::to_string(anchor.left) + ") outside " + dims(h, w));
    }
    if (spec.b < 1 || spec.b > std::min(h, w)) {
      throw ParameterError("block side " + std::to_string(spec.b) + " outside [1," +
                           std::to_string(std::min(h, w)) + "]");
    }
    for (int dr = 0; dr < spec.b; ++dr)
      for (int dc = 0; dc < spec.b; ++dc) mask((anchor.top + dr) % h, (anchor.left + dc) % w) = 1;
  }
  return mask;
}

AblatedImage apply_mask(const Image& x, Mask mask) {
  if (mask.height != x.height || mask.width != x.width) {
    throw ParameterError("mask " + dims(mask.height, mask.width) + " does not match image " +
                         dims(x.height, x.width));
  }
  AblatedImage out{Image(x.height, x.width, x.channels), std::move(mask)};
  for (int r = 0; r < x.height; ++r)
    for (int c = 0; c < x.width; ++c)
      if (out.mask(r, c))
        for (int ch = 0; ch < x.channels; ++ch) out.pixels.at(r, c, ch) = x.at(r, c, ch);
  return out;
}

AblatedImage column_ablation(const Image& x, int start, int b) {
  const AblationSpec spec{AblationKind::column, b, 1, 0};
  return apply_mask(x, ablation_mask(x.height, x.width, spec, {0, start}));
}

AblatedImage block_ablation(const Image& x, int top, int left, int b) {
  const AblationSpec spec{AblationKind::block, b, 1, 0};
  return apply_mask(x, ablation_mask(x.height, x.width, spec, {top, left}));
}

std::vector<Anchor> ablation_anchors(int h, int w, const AblationSpec& spec) {
  spec.validate(h, w);
  std::vector<Anchor> anchors;
  anchors.reserve(ablation_count(h, w, spec));
  if (spec.kind == AblationKind::column) {
    for (int start = spec.offset; start < w; start += spec.stride) anchors.push_back({0, start});
  } else {
    for (int top = spec.offset; top < h; top += spec.stride)
      for (int left = spec.offset; left < w; left += spec.stride) anchors.push_back({top, left});
  }
  return anchors;
}

std::size_t ablation_count(int h, int w, const AblationSpec& spec) {
  spec.validate(h, w);
  const auto cols = static_cast<std::size_t>(ceil_div(w - spec.offset, spec.stride));
  if (spec.kind == AblationKind::column) return cols;
  return static_cast<std::size_t>(ceil_div(h - spec.offset, spec.stride)) * cols;
}

AblatedImage make_ablation(const Image& x, const AblationSpec& spec, Anchor anchor) {
  return apply_mask(x, ablation_mask(x.height, x.width, spec, anchor));
}

std::vector<AblatedImage> ablation_set(const Image& x, const AblationSpec& spec) {
  std::vector<AblatedImage> out;
  for (const auto& a : ablation_anchors(x.height, x.width, spec)) out.push_back(make_ablation(x, spec, a));
  return out;
}

}  // namespace patchcert
