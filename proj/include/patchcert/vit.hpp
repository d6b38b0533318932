#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "patchcert/ablation.hpp"
#include "patchcert/certify.hpp"
#include "patchcert/numerics.hpp"

namespace patchcert {

struct ViTConfig {
  int height = 16;
  int width = 16;
  int channels = 1;
  int patch = 4;
  int dim = 32;
  int heads = 4;
  int layers = 2;
  int classes = 4;
  bool use_class_token = true;
  float ln_eps = 1e-6f;

  void validate() const;

  int grid_rows() const noexcept { return height / patch; }
  int grid_cols() const noexcept { return width / patch; }
  int grid_tokens() const noexcept { return grid_rows() * grid_cols(); }
  int patch_dim() const noexcept { return patch * patch * channels; }
  int head_dim() const noexcept { return dim / heads; }

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

struct LayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;  // d -> 4d -> d

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// All trainable tensors. Also used as the gradient container.
struct ModelParams {
  Tensor patch_w, patch_b;  // [p²c × d], [d]
  Tensor pos_embed;         // [grid_tokens × d]
  Tensor cls_token;         // [d]
  Tensor cls_pos;           // [d]
  std::vector<LayerParams> layers;
  Tensor final_gamma, final_beta;
  Tensor head_w, head_b;  // [d × k], [k]

  /// Calls fn(name, tensor) for every parameter in serialization order.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn);

  template <typename Fn> void for_each(Fn&& fn) { visit(*this, fn); }
  template <typename Fn> void for_each(Fn&& fn) const { visit(*this, fn); }

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

template <typename Self, typename Fn>
void ModelParams::visit(Self& self, Fn&& fn) {
  fn(std::string("patch_w"), self.patch_w);
  fn(std::string("patch_b"), self.patch_b);
  fn(std::string("pos_embed"), self.pos_embed);
  fn(std::string("cls_token"), self.cls_token);
  fn(std::string("cls_pos"), self.cls_pos);
  for (std::size_t l = 0; l < self.layers.size(); ++l) {
    auto& L = self.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    fn(p + "ln1_gamma", L.ln1_gamma);
    fn(p + "ln1_beta", L.ln1_beta);
    fn(p + "wq", L.wq);
    fn(p + "bq", L.bq);
    fn(p + "wk", L.wk);
    fn(p + "bk", L.bk);
    fn(p + "wv", L.wv);
    fn(p + "bv", L.bv);
    fn(p + "wo", L.wo);
    fn(p + "bo", L.bo);
    fn(p + "ln2_gamma", L.ln2_gamma);
    fn(p + "ln2_beta", L.ln2_beta);
    fn(p + "w1", L.w1);
    fn(p + "b1", L.b1);
    fn(p + "w2", L.w2);
    fn(p + "b2", L.b2);
  }
  fn(std::string("final_gamma"), self.final_gamma);
  fn(std::string("final_beta"), self.final_beta);
  fn(std::string("head_w"), self.head_w);
  fn(std::string("head_b"), self.head_b);
}

/// Correctly shaped parameters, all zero (layer-norm gains included).
ModelParams zero_params(const ViTConfig& cfg);

/// Seeded initialization: Xavier-uniform matrices, N(0, 0.02) embeddings,
/// unit layer-norm gains, zero biases.
ModelParams init_params(const ViTConfig& cfg, std::uint64_t seed);

/// Like init_params but every tensor (biases and gains included) is random.
/// Used to exercise code paths that a fresh initialization leaves trivial.
ModelParams random_params(const ViTConfig& cfg, std::uint64_t seed, float scale = 0.5f);

/// Throws ParameterError if any tensor's shape disagrees with `cfg`.
void check_params(const ModelParams& params, const ViTConfig& cfg);

/// Grid position of a token; the class token has row = col = -1.
struct TokenPosition {
  int row = -1;
  int col = -1;
  bool is_class() const noexcept { return row < 0; }
  friend bool operator==(const TokenPosition&, const TokenPosition&) = default;
};

/// Unordered set of positionally encoded tokens: row i of `embeddings`
/// belongs to positions[i].
struct TokenSet {
  std::vector<TokenPosition> positions;
  Tensor embeddings;  // [n × d]
  std::size_t size() const noexcept { return positions.size(); }
};

/// Embeds every p×p patch of the (already masked) image and adds its
/// positional vector. The class token, when enabled, comes first.
TokenSet tokenize(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg,
                  MacCounter* counter = nullptr);

/// Grid positions whose p×p mask block has at least one retained pixel.
std::vector<TokenPosition> surviving_positions(const Mask& mask, const ViTConfig& cfg);

/// Keeps the class token and every grid token whose mask block is not all zero.
TokenSet drop_masked_tokens(const TokenSet& tokens, const Mask& mask, const ViTConfig& cfg);

/// Pre-norm transformer encoder over exactly the given tokens, then the
/// classification head. Returns k logits.
Tensor encoder_forward(const TokenSet& tokens, const ModelParams& params, const ViTConfig& cfg,
                       MacCounter* counter = nullptr);

/// Logits for one ablation with fully masked tokens removed before the encoder.
Tensor ablation_logits(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg,
                       MacCounter* counter = nullptr);

/// Logits for one ablation on the full token set (no dropping).
Tensor full_token_logits(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg,
                         MacCounter* counter = nullptr);

/// Argmax with lowest-index tie-break.
int argmax(const Tensor& logits);

/// Tokenize, drop masked tokens, encode, argmax.
int process_ablation(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg,
                     MacCounter* counter = nullptr);

/// Runs the encoder on the full token set while masking out tokens that
/// would be dropped: they are excluded as attention keys, their own updates
/// never feed back, and they are left out of the readout. Verification
/// reference for token dropping.
Tensor masked_attention_oracle_forward(const AblatedImage& z, const ModelParams& params,
                                       const ViTConfig& cfg);

struct SmoothedPrediction {
  int prediction = 0;
  VoteCounts votes;
};

/// Majority vote of process_ablation over the ablation set of `x`.
SmoothedPrediction smoothed_vit_forward(const Image& x, const AblationSpec& spec,
                                        const ModelParams& params, const ViTConfig& cfg);

/// Adapter for certify::certified_accuracy. Captures params by reference.
BaseClassifier make_vit_classifier(const ModelParams& params, const ViTConfig& cfg);

/// Activations recorded by a training forward pass.
struct ForwardTape {
  struct Layer {
    Tensor input;
    LayerNormCache ln1;
    Tensor ln1_out;
    Tensor q, k, v;
    std::vector<Tensor> attention;  // per head, [n × n] probabilities
    Tensor context;                 // concatenated heads [n × d]
    Tensor mid;                     // after attention residual
    LayerNormCache ln2;
    Tensor ln2_out;
    Tensor mlp_pre;                 // before GELU
    Tensor mlp_act;                 // after GELU
  };
  std::vector<TokenPosition> positions;
  Tensor patches;  // grid-token patch vectors [n_grid × p²c]
  std::vector<Layer> layers;
  Tensor encoded;        // encoder output [n × d]
  Tensor readout;        // pre-norm readout vector [1 × d]
  LayerNormCache final_ln;
  Tensor readout_norm;   // [1 × d]
  bool recorded = false;
};

/// Training forward pass on one ablation (with token dropping); fills `tape`.
Tensor forward_with_tape(const AblatedImage& z, const ModelParams& params, const ViTConfig& cfg,
                         ForwardTape& tape);

/// Exact parameter gradients given dL/dlogits. Throws UsageError if `tape`
/// was not filled by forward_with_tape.
ModelParams backward(const ForwardTape& tape, const ModelParams& params, const ViTConfig& cfg,
                     const Tensor& dlogits);

struct LossAndGradient {
  double loss = 0.0;
  Tensor logits;
  ModelParams grad;
};

/// Cross-entropy of one ablation against `label` with exact gradients.
LossAndGradient loss_and_gradient(const AblatedImage& z, int label, const ModelParams& params,
                                  const ViTConfig& cfg);

}  // namespace patchcert
