#pragma once
// Central finite differences of the double-precision reference loss against
// the library's analytic gradient, compared tensor by tensor.

#include <cmath>
#include <string>

#include "patchcert/vit.hpp"
#include "support/reference_vit.hpp"

namespace gradcheck {

// Norms below this are treated as exact zeros on both sides; the error is
// then absolute.
inline constexpr double kZeroNorm = 1e-6;

struct TensorError {
  std::string name;
  double relative = 0.0;  // ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, kZeroNorm)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

struct Result {
  std::vector<TensorError> tensors;
  TensorError worst;
};

inline Result run(const patchcert::ModelParams& params, const patchcert::ViTConfig& cfg,
                  const patchcert::AblatedImage& z, int label, double h = 1e-3) {
  const auto analytic = patchcert::loss_and_gradient(z, label, params, cfg).grad;
  reference::Params P = reference::to_double(params);
  Result result;
  analytic.for_each([&](const std::string& name, const patchcert::Tensor& g) {
    auto& values = P.at(name);
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = reference::cross_entropy(reference::logits(z, P, cfg), label);
      values[i] = orig - h;
      const double down = reference::cross_entropy(reference::logits(z, P, cfg), label);
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      diff += (g[i] - numeric) * (g[i] - numeric);
      na += static_cast<double>(g[i]) * g[i];
      nn += numeric * numeric;
    }
    TensorError e{name, 0.0, std::sqrt(na), std::sqrt(nn)};
    e.relative = std::sqrt(diff) / std::max({e.analytic_norm, e.numeric_norm, kZeroNorm});
    result.tensors.push_back(e);
    if (e.relative >= result.worst.relative) result.worst = e;
  });
  return result;
}

}  // namespace gradcheck
