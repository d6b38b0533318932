#include "patchcert/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace patchcert {
namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " must be a matrix, got " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, MacCounter* counter) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  Tensor c({m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  // i-t-j order; each c[i][j] accumulates over t in ascending order.
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = pc + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const float av = pa[i * k + t];
      const float* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  if (counter) counter->add(static_cast<std::uint64_t>(m) * k * n);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.numel() != x.last_dim()) {
    throw DimensionError("bias " + shape_to_string(bias.shape()) + " does not match last dim of " +
                         shape_to_string(x.shape()));
  }
  Tensor y = x;
  const std::size_t d = x.last_dim();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t j = 0; j < d; ++j) row[j] += bias[j];
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias, MacCounter* counter) {
  return add_bias(matmul(x, w, counter), bias);
}

Tensor softmax_last_dim(const Tensor& x) {
  Tensor y = x;
  const std::size_t d = x.last_dim();
  if (d == 0) throw DimensionError("softmax over an empty last dimension");
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    const float mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    const double inv = 1.0 / sum;
    for (auto& v : row) v = static_cast<float>(v * inv);
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps,
                  LayerNormCache* cache) {
  const std::size_t d = x.last_dim();
  if (d == 0 || gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm parameters " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " vs input " +
                         shape_to_string(x.shape()));
  }
  Tensor normalized(x.shape());
  Tensor y(x.shape());
  std::vector<float> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<float>(rstd);
    auto xn = normalized.row(r);
    auto out = y.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      xn[j] = static_cast<float>((in[j] - mean) * rstd);
      out[j] = xn[j] * gamma[j] + beta[j];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

float gelu_scalar(float x) noexcept {
  const double xd = x;
  return static_cast<float>(0.5 * xd * (1.0 + std::tanh(kGeluScale * (xd + kGeluCubic * xd * xd * xd))));
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = gelu_scalar(v);
  return y;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc) {
  if (dc.rank() != 2 || dc.dim(0) != a.dim(0) || dc.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_backward upstream " + shape_to_string(dc.shape()) +
                         " does not match " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  return {matmul(dc, transpose(b)), matmul(transpose(a), dc)};
}

Tensor bias_backward(const Tensor& dy) {
  const std::size_t d = dy.last_dim();
  std::vector<double> acc(d, 0.0);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto row = dy.row(r);
    for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
  }
  Tensor g({d});
  for (std::size_t j = 0; j < d; ++j) g[j] = static_cast<float>(acc[j]);
  return g;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_backward");
  Tensor dx(y.shape());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto gr = dy.row(r);
    double dot = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += static_cast<double>(yr[j]) * gr[j];
    auto out = dx.row(r);
    for (std::size_t j = 0; j < yr.size(); ++j) out[j] = static_cast<float>(yr[j] * (gr[j] - dot));
  }
  return dx;
}

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma,
                                   const Tensor& dy) {
  if (cache.empty()) throw UsageError("layer_norm_backward called without a forward cache");
  require_same_shape(cache.normalized, dy, "layer_norm_backward");
  const std::size_t d = dy.last_dim();
  LayerNormGrads g{Tensor(dy.shape()), Tensor({d}), Tensor({d})};
  std::vector<double> dgamma(d, 0.0), dbeta(d, 0.0);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto xn = cache.normalized.row(r);
    auto gy = dy.row(r);
    double mean_g = 0.0, mean_gx = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double gxn = static_cast<double>(gy[j]) * gamma[j];
      mean_g += gxn;
      mean_gx += gxn * xn[j];
      dgamma[j] += static_cast<double>(gy[j]) * xn[j];
      dbeta[j] += gy[j];
    }
    mean_g /= static_cast<double>(d);
    mean_gx /= static_cast<double>(d);
    auto dx = g.dx.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double gxn = static_cast<double>(gy[j]) * gamma[j];
      dx[j] = static_cast<float>(cache.inv_std[r] * (gxn - mean_g - xn[j] * mean_gx));
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    g.dgamma[j] = static_cast<float>(dgamma[j]);
    g.dbeta[j] = static_cast<float>(dbeta[j]);
  }
  return g;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "gelu_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    const double inner = kGeluScale * (v + kGeluCubic * v * v * v);
    const double th = std::tanh(inner);
    const double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
    const double deriv = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner;
    dx[i] = static_cast<float>(deriv * dy[i]);
  }
  return dx;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  if (target >= logits.numel()) {
    throw DimensionError("cross-entropy target " + std::to_string(target) + " out of range for " +
                         shape_to_string(logits.shape()));
  }
  const auto v = logits.data();
  const float mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (float x : v) sum += std::exp(static_cast<double>(x) - mx);
  const double log_z = std::log(sum) + mx;
  CrossEntropy ce;
  ce.loss = log_z - v[target];
  ce.dlogits = Tensor(logits.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    ce.dlogits[i] = static_cast<float>(std::exp(static_cast<double>(v[i]) - log_z) -
                                       (i == target ? 1.0 : 0.0));
  }
  return ce;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float orig = x[i];
    // Divide by the step actually representable in float storage.
    const float hi = static_cast<float>(orig + h);
    const float lo = static_cast<float>(orig - h);
    probe[i] = hi;
    const double up = f(probe);
    probe[i] = lo;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = static_cast<float>((up - down) / (static_cast<double>(hi) - lo));
  }
  return grad;
}

}  // namespace patchcert
