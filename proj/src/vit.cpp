#include "patchcert/vit.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace patchcert {
namespace {

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width) {
  Tensor out({x.dim(0), width});
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = x.at(r, start + c);
  return out;
}

void put_cols(Tensor& dst, const Tensor& src, std::size_t start) {
  for (std::size_t r = 0; r < src.dim(0); ++r)
    for (std::size_t c = 0; c < src.dim(1); ++c) dst.at(r, start + c) = src.at(r, c);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

Tensor scaled(Tensor t, float factor) {
  for (auto& v : t.data()) v *= factor;
  return t;
}

Tensor as_row(const Tensor& v) { return Tensor({1, v.numel()}, v.storage()); }

// Flattened p×p×c patch at grid cell (gr, gc): index (py·p + px)·c + ch.
void copy_patch(const Image& img, int patch, int gr, int gc, std::span<float> out) {
  std::size_t idx = 0;
  for (int py = 0; py < patch; ++py)
    for (int px = 0; px < patch; ++px)
      for (int ch = 0; ch < img.channels; ++ch) out[idx++] = img.at(gr * patch + py, gc * patch + px, ch);
}

void check_input(const AblatedImage& z, const ViTConfig& cfg) {
  if (z.pixels.height != cfg.height || z.pixels.width != cfg.width || z.pixels.channels != cfg.channels ||
      z.mask.height != cfg.height || z.mask.width != cfg.width) {
    throw DimensionError("ablated image " + std::to_string(z.pixels.height) + "x" +
                         std::to_string(z.pixels.width) + "x" + std::to_string(z.pixels.channels) +
                         " does not match model input " + std::to_string(cfg.height) + "x" +
                         std::to_string(cfg.width) + "x" + std::to_string(cfg.channels));
  }
}

struct Embedded {
  TokenSet tokens;
  Tensor patches;  // grid rows only
};

// Embeds the given positions (class token included if present in the list).
Embedded embed_positions(const Image& img, const std::vector<TokenPosition>& positions,
                         const ModelParams& params, const ViTConfig& cfg, MacCounter* counter) {
  const auto d = static_cast<std::size_t>(cfg.dim);
  std::size_t grid = 0;
  for (const auto& p : positions) grid += !p.is_class();
  Tensor patches({grid, static_cast<std::size_t>(cfg.patch_dim())});
  std::size_t g = 0;
  for (const auto& p : positions) {
    if (!p.is_class()) copy_patch(img, cfg.patch, p.row, p.col, patches.row(g++));
  }
  const Tensor projected = grid ? linear(patches, params.patch_w, params.patch_b, counter) : Tensor({0, d});

  Embedded out{{positions, Tensor({positions.size(), d})}, std::move(patches)};
  g = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    auto row = out.tokens.embeddings.row(i);
    const auto& p = positions[i];
    if (p.is_class()) {
      for (std::size_t j = 0; j < d; ++j) row[j] = params.cls_token[j] + params.cls_pos[j];
    } else {
      const auto pos = params.pos_embed.row(static_cast<std::size_t>(p.row * cfg.grid_cols() + p.col));
      const auto proj = projected.row(g++);
      for (std::size_t j = 0; j < d; ++j) row[j] = proj[j] + pos[j];
    }
  }
  return out;
}

std::vector<TokenPosition> all_positions(const ViTConfig& cfg) {
  std::vector<TokenPosition> out;
  if (cfg.use_class_token) out.push_back({});
  for (int r = 0; r < cfg.grid_rows(); ++r)
    for (int c = 0; c < cfg.grid_cols(); ++c) out.push_back({r, c});
  return out;
}

std::ptrdiff_t class_row(const std::vector<TokenPosition>& positions) {
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (positions[i].is_class()) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

// Shared encoder body. `key_mask`, when non-empty, marks tokens that may be
// attended to and read out; others are present but inert.
Tensor encode(Tensor x, const std::vector<TokenPosition>& positions, const ModelParams& params,
              const ViTConfig& cfg, MacCounter* counter, ForwardTape* tape,
              const std::vector<bool>& key_mask = {}) {
  const std::size_t n = x.dim(0);
  if (n == 0) throw ParameterError("cannot classify an empty token set");
  const auto dh = static_cast<std::size_t>(cfg.head_dim());
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const bool masked = !key_mask.empty();

  for (const auto& L : params.layers) {
    ForwardTape::Layer* rec = nullptr;
    if (tape) {
      tape->layers.emplace_back();
      rec = &tape->layers.back();
      rec->input = x;
    }
    LayerNormCache ln1;
    const Tensor h1 = layer_norm(x, L.ln1_gamma, L.ln1_beta, cfg.ln_eps, &ln1);
    const Tensor q = linear(h1, L.wq, L.bq, counter);
    const Tensor k = linear(h1, L.wk, L.bk, counter);
    const Tensor v = linear(h1, L.wv, L.bv, counter);
    Tensor context({n, static_cast<std::size_t>(cfg.dim)});
    for (int head = 0; head < cfg.heads; ++head) {
      const std::size_t off = static_cast<std::size_t>(head) * dh;
      const Tensor kh = slice_cols(k, off, dh);
      Tensor scores = scaled(matmul(slice_cols(q, off, dh), transpose(kh), counter), scale);
      if (masked) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (!key_mask[j]) scores.at(i, j) = -std::numeric_limits<float>::infinity();
      }
      Tensor probs = softmax_last_dim(scores);
      put_cols(context, matmul(probs, slice_cols(v, off, dh), counter), off);
      if (rec) rec->attention.push_back(std::move(probs));
    }
    const Tensor attn_out = linear(context, L.wo, L.bo, counter);
    Tensor mid = x;
    add_into(mid, attn_out);

    LayerNormCache ln2;
    const Tensor h2 = layer_norm(mid, L.ln2_gamma, L.ln2_beta, cfg.ln_eps, &ln2);
    Tensor pre = linear(h2, L.w1, L.b1, counter);
    Tensor act = gelu(pre);
    const Tensor mlp_out = linear(act, L.w2, L.b2, counter);
    Tensor out = mid;
    add_into(out, mlp_out);

    if (rec) {
      rec->ln1 = std::move(ln1);
      rec->ln1_out = h1;
      rec->q = q;
      rec->k = k;
      rec->v = v;
      rec->context = std::move(context);
      rec->mid = std::move(mid);
      rec->ln2 = std::move(ln2);
      rec->ln2_out = h2;
      rec->mlp_pre = std::move(pre);
      rec->mlp_act = std::move(act);
    }
    x = std::move(out);
  }

  const auto d = static_cast<std::size_t>(cfg.dim);
  Tensor readout({1, d});
  const auto cls = class_row(positions);
  if (cfg.use_class_token && cls >= 0) {
    const auto row = x.row(static_cast<std::size_t>(cls));
    std::copy(row.begin(), row.end(), readout.data().begin());
  } else {
    std::vector<double> acc(d, 0.0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (masked && !key_mask[i]) continue;
      ++used;
      const auto row = x.row(i);
      for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) readout[j] = static_cast<float>(acc[j] / static_cast<double>(used));
  }
  LayerNormCache final_ln;
  Tensor readout_norm = layer_norm(readout, params.final_gamma, params.final_beta, cfg.ln_eps, &final_ln);
  Tensor logits = linear(readout_norm, params.head_w, params.head_b, counter);
  if (tape) {
    tape->encoded = std::move(x);
    tape->readout = std::move(readout);
    tape->final_ln = std::move(final_ln);
    tape->readout_norm = std::move(readout_norm);
    tape->recorded = true;
  }
  return Tensor({logits.numel()}, logits.storage());
}

class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}
  Tensor xavier(std::size_t fan_in, std::size_t fan_out) {
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    std::uniform_real_distribution<float> dist(-bound, bound);
    Tensor t({fan_in, fan_out});
    for (auto& v : t.data()) v = dist(rng_);
    return t;
  }
  Tensor normal(Shape shape, float stddev) {
    std::normal_distribution<float> dist(0.0f, stddev);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng_);
    return t;
  }
  Tensor uniform(Shape shape, float lo, float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng_);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

void ViTConfig::validate() const {
  auto fail = [](const std::string& what) { throw ParameterError("invalid ViT config: " + what); };
  if (height < 1 || width < 1) fail("image size must be positive");
  if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
  if (patch < 1 || height % patch || width % patch) {
    fail("patch " + std::to_string(patch) + " must divide " + std::to_string(height) + "x" + std::to_string(width));
  }
  if (dim < 1 || heads < 1 || dim % heads) fail("dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
  if (layers < 0) fail("negative depth");
  if (classes < 2) fail("need at least 2 classes");
  if (!(ln_eps > 0.0f)) fail("layer-norm eps must be positive");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

ModelParams zero_params(const ViTConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.dim);
  const auto k = static_cast<std::size_t>(cfg.classes);
  ModelParams p;
  p.patch_w = Tensor({static_cast<std::size_t>(cfg.patch_dim()), d});
  p.patch_b = Tensor({d});
  p.pos_embed = Tensor({static_cast<std::size_t>(cfg.grid_tokens()), d});
  p.cls_token = Tensor({d});
  p.cls_pos = Tensor({d});
  for (int l = 0; l < cfg.layers; ++l) {
    LayerParams L;
    L.ln1_gamma = Tensor({d});
    L.ln1_beta = Tensor({d});
    L.wq = Tensor({d, d});
    L.bq = Tensor({d});
    L.wk = Tensor({d, d});
    L.bk = Tensor({d});
    L.wv = Tensor({d, d});
    L.bv = Tensor({d});
    L.wo = Tensor({d, d});
    L.bo = Tensor({d});
    L.ln2_gamma = Tensor({d});
    L.ln2_beta = Tensor({d});
    L.w1 = Tensor({d, 4 * d});
    L.b1 = Tensor({4 * d});
    L.w2 = Tensor({4 * d, d});
    L.b2 = Tensor({d});
    p.layers.push_back(std::move(L));
  }
  p.final_gamma = Tensor({d});
  p.final_beta = Tensor({d});
  p.head_w = Tensor({d, k});
  p.head_b = Tensor({k});
  return p;
}

ModelParams init_params(const ViTConfig& cfg, std::uint64_t seed) {
  ModelParams p = zero_params(cfg);
  ParamInit init(seed);
  const auto d = static_cast<std::size_t>(cfg.dim);
  p.patch_w = init.xavier(static_cast<std::size_t>(cfg.patch_dim()), d);
  p.pos_embed = init.normal(p.pos_embed.shape(), 0.02f);
  p.cls_token = init.normal({d}, 0.02f);
  p.cls_pos = init.normal({d}, 0.02f);
  for (auto& L : p.layers) {
    L.ln1_gamma = Tensor::filled({d}, 1.0f);
    L.ln2_gamma = Tensor::filled({d}, 1.0f);
    L.wq = init.xavier(d, d);
    L.wk = init.xavier(d, d);
    L.wv = init.xavier(d, d);
    L.wo = init.xavier(d, d);
    L.w1 = init.xavier(d, 4 * d);
    L.w2 = init.xavier(4 * d, d);
  }
  p.final_gamma = Tensor::filled({d}, 1.0f);
  p.head_w = init.xavier(d, static_cast<std::size_t>(cfg.classes));
  return p;
}

ModelParams random_params(const ViTConfig& cfg, std::uint64_t seed, float scale) {
  ModelParams p = zero_params(cfg);
  ParamInit init(seed);
  p.for_each([&](const std::string& name, Tensor& t) {
    const bool gain = name.find("gamma") != std::string::npos;
    const bool matrix = t.rank() == 2 && name != "pos_embed";
    const float s = matrix ? scale / std::sqrt(static_cast<float>(t.dim(0))) * 2.0f : scale;
    t = init.uniform(t.shape(), gain ? 1.0f - s : -s, gain ? 1.0f + s : s);
  });
  return p;
}

void check_params(const ModelParams& params, const ViTConfig& cfg) {
  const ModelParams ref = zero_params(cfg);
  std::vector<std::pair<std::string, Shape>> expected;
  ref.for_each([&](const std::string& name, const Tensor& t) { expected.emplace_back(name, t.shape()); });
  std::size_t i = 0;
  if (params.layers.size() != ref.layers.size()) {
    throw ParameterError("parameter set has " + std::to_string(params.layers.size()) + " layers, config expects " +
                         std::to_string(ref.layers.size()));
  }
  params.for_each([&](const std::string& name, const Tensor& t) {
    if (t.shape() != expected[i].second) {
      throw ParameterError("parameter " + name + " has shape " + shape_to_string(t.shape()) + ", expected " +
                           shape_to_string(expected[i].second));
    }
    ++i;
  });
}

TokenSet tokenize(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg, MacCounter* counter) {
  check_input(z, cfg);
  return embed_positions(z.pixels, all_positions(cfg), params, cfg, counter).tokens;
}

std::vector<TokenPosition> surviving_positions(const Mask& mask, const ViTConfig& cfg) {
  std::vector<TokenPosition> out;
  for (int gr = 0; gr < cfg.grid_rows(); ++gr) {
    for (int gc = 0; gc < cfg.grid_cols(); ++gc) {
      bool any = false;
      for (int py = 0; py < cfg.patch && !any; ++py)
        for (int px = 0; px < cfg.patch && !any; ++px) any = mask(gr * cfg.patch + py, gc * cfg.patch + px) != 0;
      if (any) out.push_back({gr, gc});
    }
  }
  return out;
}

TokenSet drop_masked_tokens(const TokenSet& tokens, const Mask& mask, const ViTConfig& cfg) {
  std::vector<bool> keep_cell(static_cast<std::size_t>(cfg.grid_tokens()), false);
  for (const auto& p : surviving_positions(mask, cfg)) keep_cell[static_cast<std::size_t>(p.row * cfg.grid_cols() + p.col)] = true;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& p = tokens.positions[i];
    if (p.is_class() || keep_cell[static_cast<std::size_t>(p.row * cfg.grid_cols() + p.col)]) keep.push_back(i);
  }
  const std::size_t d = tokens.embeddings.last_dim();
  TokenSet out{{}, Tensor({keep.size(), d})};
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.positions.push_back(tokens.positions[keep[r]]);
    const auto src = tokens.embeddings.row(keep[r]);
    std::copy(src.begin(), src.end(), out.embeddings.row(r).begin());
  }
  return out;
}

Tensor encoder_forward(const TokenSet& tokens, const ModelParams& params, const ViTConfig& cfg, MacCounter* counter) {
  if (tokens.size() == 0) throw ParameterError("cannot classify an empty token set");
  if (tokens.embeddings.rank() != 2 || tokens.embeddings.dim(0) != tokens.size() ||
      tokens.embeddings.dim(1) != static_cast<std::size_t>(cfg.dim)) {
    throw DimensionError("token embeddings " + shape_to_string(tokens.embeddings.shape()) + " do not match " +
                         std::to_string(tokens.size()) + " tokens of width " + std::to_string(cfg.dim));
  }
  return encode(tokens.embeddings, tokens.positions, params, cfg, counter, nullptr);
}

Tensor ablation_logits(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg, MacCounter* counter) {
  check_input(z, cfg);
  std::vector<TokenPosition> positions;
  if (cfg.use_class_token) positions.push_back({});
  const auto grid = surviving_positions(z.mask, cfg);
  positions.insert(positions.end(), grid.begin(), grid.end());
  const Embedded e = embed_positions(z.pixels, positions, params, cfg, counter);
  return encode(e.tokens.embeddings, e.tokens.positions, params, cfg, counter, nullptr);
}

Tensor full_token_logits(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg, MacCounter* counter) {
  return encoder_forward(tokenize(z, params, cfg, counter), params, cfg, counter);
}

int argmax(const Tensor& logits) {
  if (logits.numel() == 0) throw DimensionError("argmax of empty logits");
  const auto v = logits.data();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int process_ablation(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg, MacCounter* counter) {
  return argmax(ablation_logits(z, params, cfg, counter));
}

Tensor masked_attention_oracle_forward(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg) {
  const TokenSet full = tokenize(z, params, cfg);
  std::vector<bool> live(full.size(), false);
  std::vector<bool> cell(static_cast<std::size_t>(cfg.grid_tokens()), false);
  for (const auto& p : surviving_positions(z.mask, cfg)) cell[static_cast<std::size_t>(p.row * cfg.grid_cols() + p.col)] = true;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto& p = full.positions[i];
    live[i] = p.is_class() || cell[static_cast<std::size_t>(p.row * cfg.grid_cols() + p.col)];
  }
  return encode(full.embeddings, full.positions, params, cfg, nullptr, nullptr, live);
}

SmoothedPrediction smoothed_vit_forward(const Image& x, const AblationSpec& spec, const ModelParams& params,
                                        const ViTConfig& cfg) {
  const auto predictions = classify_ablations(x, spec, make_vit_classifier(params, cfg));
  SmoothedPrediction out;
  out.votes = aggregate_votes(predictions, cfg.classes);
  out.prediction = smoothed_predict(out.votes);
  return out;
}

BaseClassifier make_vit_classifier(const ModelParams& params, const ViTConfig& cfg) {
  return [&params, cfg](const AblatedImage& z) { return process_ablation(z, params, cfg); };
}

Tensor forward_with_tape(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg, ForwardTape& tape) {
  check_input(z, cfg);
  tape = ForwardTape{};
  std::vector<TokenPosition> positions;
  if (cfg.use_class_token) positions.push_back({});
  const auto grid = surviving_positions(z.mask, cfg);
  positions.insert(positions.end(), grid.begin(), grid.end());
  Embedded e = embed_positions(z.pixels, positions, params, cfg, nullptr);
  tape.positions = positions;
  tape.patches = std::move(e.patches);
  return encode(std::move(e.tokens.embeddings), positions, params, cfg, nullptr, &tape);
}

ModelParams backward(const ForwardTape& tape, const ModelParams& params, const ViTConfig& cfg, const Tensor& dlogits) {
  if (!tape.recorded) throw UsageError("backward called without a recorded forward pass");
  if (dlogits.numel() != static_cast<std::size_t>(cfg.classes)) {
    throw DimensionError("upstream gradient " + shape_to_string(dlogits.shape()) + " does not match " +
                         std::to_string(cfg.classes) + " classes");
  }
  ModelParams g = zero_params(cfg);
  const Tensor dl = as_row(dlogits);
  const std::size_t n = tape.encoded.dim(0);
  const auto d = static_cast<std::size_t>(cfg.dim);

  // Head and final norm.
  auto head = matmul_backward(tape.readout_norm, params.head_w, dl);
  g.head_w = std::move(head.db);
  g.head_b = bias_backward(dl);
  auto fln = layer_norm_backward(tape.final_ln, params.final_gamma, head.da);
  g.final_gamma = std::move(fln.dgamma);
  g.final_beta = std::move(fln.dbeta);

  Tensor dx({n, d});
  const auto cls = class_row(tape.positions);
  if (cfg.use_class_token && cls >= 0) {
    auto row = dx.row(static_cast<std::size_t>(cls));
    std::copy(fln.dx.data().begin(), fln.dx.data().end(), row.begin());
  } else {
    const float inv = 1.0f / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) dx.at(i, j) = fln.dx[j] * inv;
  }

  const auto dh = static_cast<std::size_t>(cfg.head_dim());
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& L = params.layers[li];
    const auto& rec = tape.layers[li];
    auto& G = g.layers[li];

    // MLP branch: out = mid + W2·gelu(W1·LN2(mid)).
    auto mlp2 = matmul_backward(rec.mlp_act, L.w2, dx);
    G.w2 = std::move(mlp2.db);
    G.b2 = bias_backward(dx);
    const Tensor dpre = gelu_backward(rec.mlp_pre, mlp2.da);
    auto mlp1 = matmul_backward(rec.ln2_out, L.w1, dpre);
    G.w1 = std::move(mlp1.db);
    G.b1 = bias_backward(dpre);
    auto ln2 = layer_norm_backward(rec.ln2, L.ln2_gamma, mlp1.da);
    G.ln2_gamma = std::move(ln2.dgamma);
    G.ln2_beta = std::move(ln2.dbeta);
    Tensor dmid = dx;
    add_into(dmid, ln2.dx);

    // Attention branch: mid = x + Wo·concat_h(softmax(Q_h K_hᵀ·scale) V_h).
    auto outp = matmul_backward(rec.context, L.wo, dmid);
    G.wo = std::move(outp.db);
    G.bo = bias_backward(dmid);
    Tensor dq({n, d}), dk({n, d}), dv({n, d});
    for (int head = 0; head < cfg.heads; ++head) {
      const std::size_t off = static_cast<std::size_t>(head) * dh;
      const Tensor& probs = rec.attention[static_cast<std::size_t>(head)];
      const Tensor qh = slice_cols(rec.q, off, dh);
      const Tensor kh = slice_cols(rec.k, off, dh);
      const Tensor vh = slice_cols(rec.v, off, dh);
      auto pv = matmul_backward(probs, vh, slice_cols(outp.da, off, dh));
      const Tensor dscores = scaled(softmax_backward(probs, pv.da), scale);
      put_cols(dq, matmul(dscores, kh), off);
      put_cols(dk, matmul(transpose(dscores), qh), off);
      put_cols(dv, pv.db, off);
    }
    auto qg = matmul_backward(rec.ln1_out, L.wq, dq);
    auto kg = matmul_backward(rec.ln1_out, L.wk, dk);
    auto vg = matmul_backward(rec.ln1_out, L.wv, dv);
    G.wq = std::move(qg.db);
    G.wk = std::move(kg.db);
    G.wv = std::move(vg.db);
    G.bq = bias_backward(dq);
    // Softmax is invariant to a per-query constant, so q·bk cancels and the
    // key bias gradient is identically zero; summing dk would only add roundoff.
    G.bk = Tensor(L.bk.shape());
    G.bv = bias_backward(dv);
    Tensor dh1 = std::move(qg.da);
    add_into(dh1, kg.da);
    add_into(dh1, vg.da);
    auto ln1 = layer_norm_backward(rec.ln1, L.ln1_gamma, dh1);
    G.ln1_gamma = std::move(ln1.dgamma);
    G.ln1_beta = std::move(ln1.dbeta);
    dx = std::move(dmid);
    add_into(dx, ln1.dx);
  }

  // Token embedding: class row = cls_token + cls_pos; grid row = patch·W + b + pos.
  Tensor dgrid({tape.patches.dim(0), d});
  std::size_t gi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = tape.positions[i];
    const auto row = dx.row(i);
    if (p.is_class()) {
      for (std::size_t j = 0; j < d; ++j) {
        g.cls_token[j] += row[j];
        g.cls_pos[j] += row[j];
      }
    } else {
      auto pos = g.pos_embed.row(static_cast<std::size_t>(p.row * cfg.grid_cols() + p.col));
      auto dst = dgrid.row(gi++);
      for (std::size_t j = 0; j < d; ++j) {
        pos[j] += row[j];
        dst[j] = row[j];
      }
    }
  }
  if (gi > 0) {
    g.patch_w = matmul(transpose(tape.patches), dgrid);
    g.patch_b = bias_backward(dgrid);
  }
  return g;
}

LossAndGradient loss_and_gradient(const AblatedImage& z, int label, const ModelParams& params, const ViTConfig& cfg) {
  if (label < 0 || label >= cfg.classes) throw ParameterError("label " + std::to_string(label) + " out of range");
  ForwardTape tape;
  LossAndGradient out;
  out.logits = forward_with_tape(z, params, cfg, tape);
  const CrossEntropy ce = softmax_cross_entropy(out.logits, static_cast<std::size_t>(label));
  out.loss = ce.loss;
  out.grad = backward(tape, params, cfg, ce.dlogits);
  return out;
}

}  // namespace patchcert
