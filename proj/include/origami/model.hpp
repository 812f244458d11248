#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "origami/encoding.hpp"
#include "origami/pipeline.hpp"
#include "origami/rng.hpp"

namespace origami {

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int32_t d = 64;      // embedding width
  int32_t h = 4;       // attention heads
  int32_t layers = 2;
  int32_t n = 128;     // max sequence length
  int32_t v = 8;       // vocabulary size
  PositionEncodingKind pe_kind = PositionEncodingKind::KVPE;
  float dropout = 0.0f;
  uint64_t seed = 0;

  void validate() const;
};

template <typename Scalar>
struct LayerParams {
  RowMatrix<Scalar> ln1_g, ln1_b;          // 1 x d
  RowMatrix<Scalar> w_qkv, b_qkv;          // d x 3d, 1 x 3d
  RowMatrix<Scalar> w_attn_proj, b_attn_proj;  // d x d, 1 x d
  RowMatrix<Scalar> ln2_g, ln2_b;          // 1 x d
  RowMatrix<Scalar> w_mlp_in, b_mlp_in;    // d x 4d, 1 x 4d
  RowMatrix<Scalar> w_mlp_out, b_mlp_out;  // 4d x d, 1 x d
};

template <typename Scalar>
struct Parameters {
  RowMatrix<Scalar> embedding;  // v x d, shared by tokens and stack symbols
  RowMatrix<Scalar> pos_table;  // n x d for the learned-position ablation, else empty
  std::vector<LayerParams<Scalar>> layers;
  RowMatrix<Scalar> lnf_g, lnf_b;  // 1 x d
  RowMatrix<Scalar> head;          // d x v, untied from the embedding

  int64_t count() const;
  Parameters<Scalar> zeros_like() const;

  template <typename OtherScalar>
  Parameters<OtherScalar> cast() const;
};

// Enumerates tensors as (name, matrix&) in the fixed checkpoint order.
template <typename ParamsRef, typename F>
void visit_tensors(ParamsRef&& p, F&& f) {
  f("embedding", p.embedding);
  if (p.pos_table.size() > 0) f("pos_table", p.pos_table);
  for (size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    f(pre + "ln1.g", l.ln1_g);
    f(pre + "ln1.b", l.ln1_b);
    f(pre + "attn.w_qkv", l.w_qkv);
    f(pre + "attn.b_qkv", l.b_qkv);
    f(pre + "attn.w_proj", l.w_attn_proj);
    f(pre + "attn.b_proj", l.b_attn_proj);
    f(pre + "ln2.g", l.ln2_g);
    f(pre + "ln2.b", l.ln2_b);
    f(pre + "mlp.w_in", l.w_mlp_in);
    f(pre + "mlp.b_in", l.b_mlp_in);
    f(pre + "mlp.w_out", l.w_mlp_out);
    f(pre + "mlp.b_out", l.b_mlp_out);
  }
  f("ln_f.g", p.lnf_g);
  f("ln_f.b", p.lnf_b);
  f("head", p.head);
}

// Weights ~ normal(0, 0.02), biases and norm offsets zero, norm gains one;
// draw order fixed by visit_tensors, reproducible from cfg.seed.
template <typename Scalar>
Parameters<Scalar> init_parameters(const ModelConfig& cfg);

using MaskSet = std::array<std::vector<uint8_t>, kNumMaskClasses>;

// Token embedding plus position encoding for every batch position (b*n x d).
template <typename Scalar>
RowMatrix<Scalar> embed(const ModelConfig& cfg, const Parameters<Scalar>& params,
                        const Batch& batch);

// Causal transformer logits, one row per batch position (b*n x v).
template <typename Scalar>
RowMatrix<Scalar> forward(const ModelConfig& cfg, const Parameters<Scalar>& params,
                          const Batch& batch);

// Probabilities with masked entries exactly zero; softmax over the rest.
template <typename Scalar>
RowVector<Scalar> masked_distribution(const RowVector<Scalar>& logits_row,
                                      const std::vector<uint8_t>& mask);

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;        // mean negative log-likelihood over counted positions
  int64_t positions = 0;  // loss-mask popcount
};

// Mean masked cross-entropy of a precomputed logits matrix against the
// batch targets. Guardrails pick each position's mask row from `masks` by
// the batch's mask classes; a grammatical target can never be masked, so a
// masked target throws.
template <typename Scalar>
LossResult<Scalar> batch_loss(const ModelConfig& cfg, const RowMatrix<Scalar>& logits,
                              const Batch& batch, const MaskSet& masks);

// Forward + loss + full backward in one pass; gradients are accumulated
// into *grads (pass zeros for plain gradients). With grads == nullptr only
// the loss is computed. dropout_rng drives the (off-by-default) dropout.
template <typename Scalar>
LossResult<Scalar> loss_and_gradients(const ModelConfig& cfg, const Parameters<Scalar>& params,
                                      const Batch& batch, const MaskSet& masks,
                                      Parameters<Scalar>* grads, Rng* dropout_rng = nullptr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  Parameters<Scalar> m, v;
  int64_t t = 0;
};

template <typename Scalar>
AdamState<Scalar> init_adam(const Parameters<Scalar>& params);

template <typename Scalar>
void adam_step(Parameters<Scalar>& params, const Parameters<Scalar>& grads,
               AdamState<Scalar>& state, const AdamConfig& cfg);

// Incremental decoder with per-layer key/value caches: feed one token and
// its recorded-stack symbol ids, get the logits row for the next position.
// Matches forward() on the same prefix up to floating-point reassociation.
template <typename Scalar>
class InferenceSession {
 public:
  InferenceSession(const ModelConfig& cfg, const Parameters<Scalar>& params);

  RowVector<Scalar> feed(int32_t id, const std::vector<int32_t>& stack_symbol_ids);
  size_t length() const { return len_; }
  void reset() { len_ = 0; }

 private:
  const ModelConfig* cfg_;
  const Parameters<Scalar>* params_;
  std::vector<RowMatrix<Scalar>> k_cache_, v_cache_;  // per layer, n x d
  size_t len_ = 0;
};

// Checkpoint directory layout: manifest.txt (config + tensor shapes),
// params.bin (little-endian float32 in manifest order), vocab.txt.
void save_checkpoint(const std::string& dir, const ModelConfig& cfg,
                     const Parameters<float>& params, const Vocabulary& vocab);

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
  Vocabulary vocab;
};

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace origami
