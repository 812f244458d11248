#include "origami/model.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace origami {

namespace {

template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <typename S>
void layernorm_forward(const RowMatrix<S>& x, const RowMatrix<S>& g, const RowMatrix<S>& b,
                       RowMatrix<S>& y, RowMatrix<S>& xhat, ColVector<S>& inv_std) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  y.resize(rows, cols);
  xhat.resize(rows, cols);
  inv_std.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S mu = x.row(r).mean();
    const S var = (x.row(r).array() - mu).square().sum() / static_cast<S>(cols);
    const S inv = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    inv_std(r) = inv;
    xhat.row(r) = (x.row(r).array() - mu) * inv;
    y.row(r) = xhat.row(r).array() * g.array() + b.array();
  }
}

template <typename S>
void layernorm_backward(const RowMatrix<S>& dy, const RowMatrix<S>& xhat,
                        const ColVector<S>& inv_std, const RowMatrix<S>& g, RowMatrix<S>& dx,
                        RowMatrix<S>& dg, RowMatrix<S>& db) {
  const Eigen::Index rows = dy.rows(), cols = dy.cols();
  dx.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dg.array() += dy.row(r).array() * xhat.row(r).array();
    db += dy.row(r);
    Eigen::Array<S, 1, Eigen::Dynamic> dxhat = dy.row(r).array() * g.array();
    const S m1 = dxhat.mean();
    const S m2 = (dxhat * xhat.row(r).array()).mean();
    dx.row(r) = (dxhat - m1 - xhat.row(r).array() * m2) * inv_std(r);
  }
}

template <typename S>
void gelu_forward(const RowMatrix<S>& h, RowMatrix<S>& tanh_u, RowMatrix<S>& g) {
  tanh_u = (static_cast<S>(kGeluC) *
            (h.array() + static_cast<S>(kGeluA) * h.array().cube()))
               .tanh();
  g = S(0.5) * h.array() * (S(1) + tanh_u.array());
}

template <typename S>
void gelu_backward(const RowMatrix<S>& dg_out, const RowMatrix<S>& h, const RowMatrix<S>& tanh_u,
                   RowMatrix<S>& dh) {
  dh = dg_out.array() *
       (S(0.5) * (S(1) + tanh_u.array()) +
        S(0.5) * h.array() * (S(1) - tanh_u.array().square()) * static_cast<S>(kGeluC) *
            (S(1) + S(3) * static_cast<S>(kGeluA) * h.array().square()));
}

template <typename S>
struct LayerCache {
  RowMatrix<S> a1, xhat1;
  ColVector<S> inv1;
  RowMatrix<S> qkv;    // bn x 3d
  RowMatrix<S> att;    // (b*h*n) x n probabilities, causal rows
  RowMatrix<S> att_y;  // bn x d, heads concatenated, pre-projection
  RowMatrix<S> a2, xhat2;
  ColVector<S> inv2;
  RowMatrix<S> h1, tanh_u, g;  // bn x 4d
  RowMatrix<S> drop_attn, drop_mlp;
};

template <typename S>
struct ForwardCache {
  std::vector<LayerCache<S>> layers;
  RowMatrix<S> af, xhatf;
  ColVector<S> invf;
};

template <typename S>
RowMatrix<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, float rate, Rng& rng) {
  RowMatrix<S> m(rows, cols);
  const S keep_scale = S(1) / static_cast<S>(1.0f - rate);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = rng.uniform_real() < rate ? S(0) : keep_scale;
  return m;
}

// One transformer pass over x (bn x d embeddings, updated in place to the
// final pre-norm residual stream). With a cache, every intermediate needed
// by the backward pass is kept; without, scratch buffers are reused.
template <typename S>
void transformer_forward(const ModelConfig& cfg, const Parameters<S>& params, const Batch& batch,
                         RowMatrix<S>& x, ForwardCache<S>* cache, Rng* dropout_rng) {
  const Eigen::Index B = batch.b, N = batch.n, d = cfg.d, H = cfg.h, hd = d / H;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(hd));
  const bool drop = dropout_rng != nullptr && cfg.dropout > 0.0f;
  if (cache) cache->layers.resize(params.layers.size());

  LayerCache<S> scratch;
  RowMatrix<S> branch;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams<S>& lp = params.layers[l];
    LayerCache<S>& c = cache ? cache->layers[l] : scratch;

    layernorm_forward(x, lp.ln1_g, lp.ln1_b, c.a1, c.xhat1, c.inv1);
    c.qkv.noalias() = c.a1 * lp.w_qkv;
    c.qkv.rowwise() += lp.b_qkv.row(0);

    c.att.resize(B * H * N, N);
    c.att_y.resize(B * N, d);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        auto q = c.qkv.block(b * N, h * hd, N, hd);
        auto k = c.qkv.block(b * N, d + h * hd, N, hd);
        auto v = c.qkv.block(b * N, 2 * d + h * hd, N, hd);
        auto p = c.att.block((b * H + h) * N, 0, N, N);
        p.noalias() = q * k.transpose();
        for (Eigen::Index i = 0; i < N; ++i) {
          auto row = p.row(i).head(i + 1).array();
          row *= inv_sqrt;
          const S mx = row.maxCoeff();
          row = (row - mx).exp();
          row /= row.sum();
          if (i + 1 < N) p.row(i).tail(N - i - 1).setZero();
        }
        c.att_y.block(b * N, h * hd, N, hd).noalias() = p * v;
      }
    }
    branch.noalias() = c.att_y * lp.w_attn_proj;
    branch.rowwise() += lp.b_attn_proj.row(0);
    if (drop) {
      c.drop_attn = dropout_mask<S>(branch.rows(), branch.cols(), cfg.dropout, *dropout_rng);
      branch.array() *= c.drop_attn.array();
    }
    x += branch;

    layernorm_forward(x, lp.ln2_g, lp.ln2_b, c.a2, c.xhat2, c.inv2);
    c.h1.noalias() = c.a2 * lp.w_mlp_in;
    c.h1.rowwise() += lp.b_mlp_in.row(0);
    gelu_forward(c.h1, c.tanh_u, c.g);
    branch.noalias() = c.g * lp.w_mlp_out;
    branch.rowwise() += lp.b_mlp_out.row(0);
    if (drop) {
      c.drop_mlp = dropout_mask<S>(branch.rows(), branch.cols(), cfg.dropout, *dropout_rng);
      branch.array() *= c.drop_mlp.array();
    }
    x += branch;
  }
}

template <typename S>
RowMatrix<S> logits_from_stream(const ModelConfig& cfg, const Parameters<S>& params,
                                RowMatrix<S>& x, ForwardCache<S>* cache) {
  RowMatrix<S> af, xhatf;
  ColVector<S> invf;
  RowMatrix<S>& af_ref = cache ? cache->af : af;
  RowMatrix<S>& xhatf_ref = cache ? cache->xhatf : xhatf;
  ColVector<S>& invf_ref = cache ? cache->invf : invf;
  layernorm_forward(x, params.lnf_g, params.lnf_b, af_ref, xhatf_ref, invf_ref);
  RowMatrix<S> logits;
  logits.noalias() = af_ref * params.head;
  if (!logits.allFinite())
    throw std::runtime_error("non-finite activation in transformer forward pass");
  return logits;
}

// Cross-entropy core shared by batch_loss and the backward pass. Fills
// *dlogits (same shape as logits) with d(mean loss)/d(logits) when given.
template <typename S>
LossResult<S> loss_from_logits(const ModelConfig& cfg, const RowMatrix<S>& logits,
                               const Batch& batch, const MaskSet& masks, RowMatrix<S>* dlogits) {
  const Eigen::Index v = cfg.v;
  int64_t count = 0;
  for (uint8_t m : batch.loss_mask) count += m;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  LossResult<S> result;
  result.positions = count;
  if (count == 0) return result;
  const S w = S(1) / static_cast<S>(count);

  double total = 0;
  for (Eigen::Index p = 0; p < logits.rows(); ++p) {
    if (!batch.loss_mask[static_cast<size_t>(p)]) continue;
    const uint8_t* mask = nullptr;
    if (batch.guardrails) {
      const auto& m = masks[batch.mask_class[static_cast<size_t>(p)]];
      if (static_cast<Eigen::Index>(m.size()) != v)
        throw std::logic_error("mask set does not match vocabulary size");
      mask = m.data();
    }
    const int32_t target = batch.targets[static_cast<size_t>(p)];
    if (target < 0 || target >= v) throw std::out_of_range("target id out of range");
    if (mask && !mask[target])
      throw std::logic_error("grammatical target masked invalid at position " +
                             std::to_string(p) + "; tokenizer and automaton disagree");
    const auto row = logits.row(p);
    S mx = std::numeric_limits<S>::lowest();
    for (Eigen::Index j = 0; j < v; ++j)
      if (!mask || mask[j]) mx = std::max(mx, row(j));
    S z = 0;
    for (Eigen::Index j = 0; j < v; ++j)
      if (!mask || mask[j]) z += std::exp(row(j) - mx);
    total += -static_cast<double>(row(target) - mx) + std::log(static_cast<double>(z));
    if (dlogits) {
      auto drow = dlogits->row(p);
      for (Eigen::Index j = 0; j < v; ++j) {
        if (mask && !mask[j]) continue;
        const S pj = std::exp(row(j) - mx) / z;
        drow(j) = (pj - S(j == target)) * w;
      }
    }
  }
  result.loss = static_cast<S>(total / static_cast<double>(count));
  if (!std::isfinite(static_cast<double>(result.loss)))
    throw std::runtime_error("non-finite training loss");
  return result;
}

template <typename S>
std::vector<RowMatrix<S>*> tensor_list(Parameters<S>& p) {
  std::vector<RowMatrix<S>*> out;
  visit_tensors(p, [&](const std::string&, RowMatrix<S>& t) { out.push_back(&t); });
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (d <= 0 || h <= 0 || layers <= 0 || n <= 0) throw std::invalid_argument("model dims must be positive");
  if (d % h != 0) throw std::invalid_argument("embedding dim must be divisible by head count");
  if (v < 8) throw std::invalid_argument("vocabulary must hold the grammar tokens plus content");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw std::invalid_argument("dropout must be in [0, 1)");
}

template <typename Scalar>
int64_t Parameters<Scalar>::count() const {
  int64_t n = 0;
  visit_tensors(*this, [&](const std::string&, const RowMatrix<Scalar>& t) { n += t.size(); });
  return n;
}

template <typename Scalar>
Parameters<Scalar> Parameters<Scalar>::zeros_like() const {
  Parameters<Scalar> out = *this;
  visit_tensors(out, [](const std::string&, RowMatrix<Scalar>& t) { t.setZero(); });
  return out;
}

template <typename Scalar>
template <typename OtherScalar>
Parameters<OtherScalar> Parameters<Scalar>::cast() const {
  Parameters<OtherScalar> out;
  out.embedding = embedding.template cast<OtherScalar>();
  out.pos_table = pos_table.template cast<OtherScalar>();
  out.layers.resize(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerParams<Scalar>& a = layers[i];
    LayerParams<OtherScalar>& b = out.layers[i];
    b.ln1_g = a.ln1_g.template cast<OtherScalar>();
    b.ln1_b = a.ln1_b.template cast<OtherScalar>();
    b.w_qkv = a.w_qkv.template cast<OtherScalar>();
    b.b_qkv = a.b_qkv.template cast<OtherScalar>();
    b.w_attn_proj = a.w_attn_proj.template cast<OtherScalar>();
    b.b_attn_proj = a.b_attn_proj.template cast<OtherScalar>();
    b.ln2_g = a.ln2_g.template cast<OtherScalar>();
    b.ln2_b = a.ln2_b.template cast<OtherScalar>();
    b.w_mlp_in = a.w_mlp_in.template cast<OtherScalar>();
    b.b_mlp_in = a.b_mlp_in.template cast<OtherScalar>();
    b.w_mlp_out = a.w_mlp_out.template cast<OtherScalar>();
    b.b_mlp_out = a.b_mlp_out.template cast<OtherScalar>();
  }
  out.lnf_g = lnf_g.template cast<OtherScalar>();
  out.lnf_b = lnf_b.template cast<OtherScalar>();
  out.head = head.template cast<OtherScalar>();
  return out;
}

namespace {

template <typename Scalar>
Parameters<Scalar> shaped_parameters(const ModelConfig& cfg) {
  Parameters<Scalar> p;
  p.embedding.setZero(cfg.v, cfg.d);
  if (cfg.pe_kind == PositionEncodingKind::AbsoluteLearned) p.pos_table.setZero(cfg.n, cfg.d);
  p.layers.resize(static_cast<size_t>(cfg.layers));
  for (auto& l : p.layers) {
    l.ln1_g.setZero(1, cfg.d);
    l.ln1_b.setZero(1, cfg.d);
    l.w_qkv.setZero(cfg.d, 3 * cfg.d);
    l.b_qkv.setZero(1, 3 * cfg.d);
    l.w_attn_proj.setZero(cfg.d, cfg.d);
    l.b_attn_proj.setZero(1, cfg.d);
    l.ln2_g.setZero(1, cfg.d);
    l.ln2_b.setZero(1, cfg.d);
    l.w_mlp_in.setZero(cfg.d, 4 * cfg.d);
    l.b_mlp_in.setZero(1, 4 * cfg.d);
    l.w_mlp_out.setZero(4 * cfg.d, cfg.d);
    l.b_mlp_out.setZero(1, cfg.d);
  }
  p.lnf_g.setZero(1, cfg.d);
  p.lnf_b.setZero(1, cfg.d);
  p.head.setZero(cfg.d, cfg.v);
  return p;
}

bool is_gain(const std::string& name) { return name.size() >= 2 && name.ends_with(".g"); }

bool is_bias(const std::string& name) {
  return name.ends_with(".b") || name.find(".b_") != std::string::npos;
}

}  // namespace

template <typename Scalar>
Parameters<Scalar> init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  Parameters<Scalar> p = shaped_parameters<Scalar>(cfg);
  Rng rng(cfg.seed);
  visit_tensors(p, [&](const std::string& name, RowMatrix<Scalar>& t) {
    if (is_gain(name)) {
      t.setOnes();
    } else if (is_bias(name)) {
      t.setZero();
    } else {
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c)
          t(r, c) = static_cast<Scalar>(rng.normal() * 0.02);
    }
  });
  return p;
}

template <typename Scalar>
RowMatrix<Scalar> embed(const ModelConfig& cfg, const Parameters<Scalar>& params,
                        const Batch& batch) {
  const Eigen::Index total = batch.b * batch.n;
  RowMatrix<Scalar> x(total, cfg.d);
  for (Eigen::Index p = 0; p < total; ++p) {
    const int32_t id = batch.ids[static_cast<size_t>(p)];
    if (id < 0 || id >= cfg.v) throw std::out_of_range("token id out of vocabulary range");
    x.row(p) = params.embedding.row(id);
  }
  switch (cfg.pe_kind) {
    case PositionEncodingKind::KVPE:
      for (Eigen::Index p = 0; p < total; ++p) {
        const auto lo = static_cast<size_t>(batch.trace_offsets[static_cast<size_t>(p)]);
        const auto hi = static_cast<size_t>(batch.trace_offsets[static_cast<size_t>(p) + 1]);
        for (size_t s = lo; s < hi; ++s) {
          const int32_t sym = batch.trace_symbols[s];
          if (sym < 0 || sym >= cfg.v) throw std::out_of_range("stack symbol id out of range");
          x.row(p) += params.embedding.row(sym);
        }
      }
      break;
    case PositionEncodingKind::AbsoluteLearned:
      if (batch.n > cfg.n)
        throw std::out_of_range("sequence position beyond the learned position table");
      for (Eigen::Index p = 0; p < total; ++p) x.row(p) += params.pos_table.row(p % batch.n);
      break;
    case PositionEncodingKind::Sinusoidal: {
      const RowMatrix<Scalar> table = sinusoidal_pe<Scalar>(batch.n, cfg.d);
      for (Eigen::Index p = 0; p < total; ++p) x.row(p) += table.row(p % batch.n);
      break;
    }
    case PositionEncodingKind::NoneKind:
      break;
  }
  return x;
}

template <typename Scalar>
RowMatrix<Scalar> forward(const ModelConfig& cfg, const Parameters<Scalar>& params,
                          const Batch& batch) {
  cfg.validate();
  RowMatrix<Scalar> x = embed(cfg, params, batch);
  transformer_forward<Scalar>(cfg, params, batch, x, nullptr, nullptr);
  return logits_from_stream<Scalar>(cfg, params, x, nullptr);
}

template <typename Scalar>
RowVector<Scalar> masked_distribution(const RowVector<Scalar>& logits_row,
                                      const std::vector<uint8_t>& mask) {
  if (static_cast<size_t>(logits_row.size()) != mask.size())
    throw std::invalid_argument("mask length does not match logits");
  Scalar mx = std::numeric_limits<Scalar>::lowest();
  bool any = false;
  for (Eigen::Index j = 0; j < logits_row.size(); ++j)
    if (mask[static_cast<size_t>(j)]) {
      mx = std::max(mx, logits_row(j));
      any = true;
    }
  if (!any) throw std::invalid_argument("mask admits no token");
  RowVector<Scalar> probs = RowVector<Scalar>::Zero(logits_row.size());
  Scalar z = 0;
  for (Eigen::Index j = 0; j < logits_row.size(); ++j)
    if (mask[static_cast<size_t>(j)]) {
      probs(j) = std::exp(logits_row(j) - mx);
      z += probs(j);
    }
  probs /= z;
  return probs;
}

template <typename Scalar>
LossResult<Scalar> batch_loss(const ModelConfig& cfg, const RowMatrix<Scalar>& logits,
                              const Batch& batch, const MaskSet& masks) {
  return loss_from_logits<Scalar>(cfg, logits, batch, masks, nullptr);
}

template <typename Scalar>
LossResult<Scalar> loss_and_gradients(const ModelConfig& cfg, const Parameters<Scalar>& params,
                                      const Batch& batch, const MaskSet& masks,
                                      Parameters<Scalar>* grads, Rng* dropout_rng) {
  cfg.validate();
  const Eigen::Index B = batch.b, N = batch.n, d = cfg.d, H = cfg.h, hd = d / H;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  RowMatrix<Scalar> x = embed(cfg, params, batch);
  if (!grads) {
    transformer_forward<Scalar>(cfg, params, batch, x, nullptr, nullptr);
    RowMatrix<Scalar> logits = logits_from_stream<Scalar>(cfg, params, x, nullptr);
    return loss_from_logits<Scalar>(cfg, logits, batch, masks, nullptr);
  }

  ForwardCache<Scalar> cache;
  transformer_forward<Scalar>(cfg, params, batch, x, &cache, dropout_rng);
  RowMatrix<Scalar> logits = logits_from_stream<Scalar>(cfg, params, x, &cache);

  RowMatrix<Scalar> dlogits;
  const LossResult<Scalar> result = loss_from_logits<Scalar>(cfg, logits, batch, masks, &dlogits);
  if (result.positions == 0) return result;

  grads->head.noalias() += cache.af.transpose() * dlogits;
  RowMatrix<Scalar> daf;
  daf.noalias() = dlogits * params.head.transpose();

  RowMatrix<Scalar> dx;
  layernorm_backward(daf, cache.xhatf, cache.invf, params.lnf_g, dx, grads->lnf_g, grads->lnf_b);

  RowMatrix<Scalar> dbranch, dh1, dg_act, da2, da1, dqkv, dx_ln;
  RowMatrix<Scalar> dp(N, N), ds(N, N);
  for (size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams<Scalar>& lp = params.layers[li];
    LayerCache<Scalar>& c = cache.layers[li];
    LayerParams<Scalar>& gl = grads->layers[li];

    // MLP branch.
    if (c.drop_mlp.size() > 0)
      dbranch = dx.array() * c.drop_mlp.array();
    else
      dbranch = dx;
    gl.w_mlp_out.noalias() += c.g.transpose() * dbranch;
    gl.b_mlp_out += dbranch.colwise().sum();
    dg_act.noalias() = dbranch * lp.w_mlp_out.transpose();
    gelu_backward(dg_act, c.h1, c.tanh_u, dh1);
    gl.w_mlp_in.noalias() += c.a2.transpose() * dh1;
    gl.b_mlp_in += dh1.colwise().sum();
    da2.noalias() = dh1 * lp.w_mlp_in.transpose();
    layernorm_backward(da2, c.xhat2, c.inv2, lp.ln2_g, dx_ln, gl.ln2_g, gl.ln2_b);
    dx += dx_ln;

    // Attention branch.
    if (c.drop_attn.size() > 0)
      dbranch = dx.array() * c.drop_attn.array();
    else
      dbranch = dx;
    gl.w_attn_proj.noalias() += c.att_y.transpose() * dbranch;
    gl.b_attn_proj += dbranch.colwise().sum();
    RowMatrix<Scalar> datt_y;
    datt_y.noalias() = dbranch * lp.w_attn_proj.transpose();

    dqkv.setZero(B * N, 3 * d);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        auto q = c.qkv.block(b * N, h * hd, N, hd);
        auto k = c.qkv.block(b * N, d + h * hd, N, hd);
        auto v = c.qkv.block(b * N, 2 * d + h * hd, N, hd);
        auto p = c.att.block((b * H + h) * N, 0, N, N);
        auto dyh = datt_y.block(b * N, h * hd, N, hd);
        dp.noalias() = dyh * v.transpose();
        dqkv.block(b * N, 2 * d + h * hd, N, hd).noalias() = p.transpose() * dyh;
        for (Eigen::Index i = 0; i < N; ++i) {
          auto prow = p.row(i).head(i + 1).array();
          auto dprow = dp.row(i).head(i + 1).array();
          const Scalar dot = (prow * dprow).sum();
          ds.row(i).head(i + 1) = prow * (dprow - dot) * inv_sqrt;
          if (i + 1 < N) ds.row(i).tail(N - i - 1).setZero();
        }
        dqkv.block(b * N, h * hd, N, hd).noalias() = ds * k;
        dqkv.block(b * N, d + h * hd, N, hd).noalias() = ds.transpose() * q;
      }
    }
    gl.w_qkv.noalias() += c.a1.transpose() * dqkv;
    gl.b_qkv += dqkv.colwise().sum();
    da1.noalias() = dqkv * lp.w_qkv.transpose();
    layernorm_backward(da1, c.xhat1, c.inv1, lp.ln1_g, dx_ln, gl.ln1_g, gl.ln1_b);
    dx += dx_ln;
  }

  // Embedding and position gradients.
  const Eigen::Index total = B * N;
  for (Eigen::Index p = 0; p < total; ++p)
    grads->embedding.row(batch.ids[static_cast<size_t>(p)]) += dx.row(p);
  switch (cfg.pe_kind) {
    case PositionEncodingKind::KVPE:
      for (Eigen::Index p = 0; p < total; ++p) {
        const auto lo = static_cast<size_t>(batch.trace_offsets[static_cast<size_t>(p)]);
        const auto hi = static_cast<size_t>(batch.trace_offsets[static_cast<size_t>(p) + 1]);
        for (size_t s = lo; s < hi; ++s)
          grads->embedding.row(batch.trace_symbols[s]) += dx.row(p);
      }
      break;
    case PositionEncodingKind::AbsoluteLearned:
      for (Eigen::Index p = 0; p < total; ++p) grads->pos_table.row(p % N) += dx.row(p);
      break;
    default:
      break;
  }
  return result;
}

template <typename Scalar>
AdamState<Scalar> init_adam(const Parameters<Scalar>& params) {
  AdamState<Scalar> st;
  st.m = params.zeros_like();
  st.v = params.zeros_like();
  return st;
}

template <typename Scalar>
void adam_step(Parameters<Scalar>& params, const Parameters<Scalar>& grads,
               AdamState<Scalar>& state, const AdamConfig& cfg) {
  ++state.t;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto eps = static_cast<Scalar>(cfg.eps);
  const auto bc1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)));
  const auto bc2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.t)));

  auto ps = tensor_list(params);
  auto ms = tensor_list(state.m);
  auto vs = tensor_list(state.v);
  std::vector<const RowMatrix<Scalar>*> gs;
  visit_tensors(grads, [&](const std::string&, const RowMatrix<Scalar>& t) { gs.push_back(&t); });
  if (ps.size() != gs.size() || ps.size() != ms.size() || ps.size() != vs.size())
    throw std::logic_error("parameter and gradient shapes diverge");

  for (size_t i = 0; i < ps.size(); ++i) {
    auto& p = *ps[i];
    const auto& g = *gs[i];
    auto& m = *ms[i];
    auto& v = *vs[i];
    m = b1 * m.array() + (Scalar(1) - b1) * g.array();
    v = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

template <typename Scalar>
InferenceSession<Scalar>::InferenceSession(const ModelConfig& cfg, const Parameters<Scalar>& params)
    : cfg_(&cfg), params_(&params) {
  cfg.validate();
  k_cache_.assign(static_cast<size_t>(cfg.layers), RowMatrix<Scalar>(cfg.n, cfg.d));
  v_cache_.assign(static_cast<size_t>(cfg.layers), RowMatrix<Scalar>(cfg.n, cfg.d));
}

template <typename Scalar>
RowVector<Scalar> InferenceSession<Scalar>::feed(int32_t id,
                                                 const std::vector<int32_t>& stack_symbol_ids) {
  const ModelConfig& cfg = *cfg_;
  const Parameters<Scalar>& params = *params_;
  const Eigen::Index d = cfg.d, H = cfg.h, hd = d / H;
  const auto pos = static_cast<Eigen::Index>(len_);
  if (pos >= cfg.n) throw std::out_of_range("sequence exceeds the model's maximum length");
  if (id < 0 || id >= cfg.v) throw std::out_of_range("token id out of vocabulary range");

  RowMatrix<Scalar> x = params.embedding.row(id);
  switch (cfg.pe_kind) {
    case PositionEncodingKind::KVPE:
      for (int32_t sym : stack_symbol_ids) {
        if (sym < 0 || sym >= cfg.v) throw std::out_of_range("stack symbol id out of range");
        x += params.embedding.row(sym);
      }
      break;
    case PositionEncodingKind::AbsoluteLearned:
      x += params.pos_table.row(pos);
      break;
    case PositionEncodingKind::Sinusoidal:
      for (Eigen::Index j = 0; j < d; ++j) {
        const double k = static_cast<double>(2 * (j / 2));
        const double angle =
            static_cast<double>(pos) * std::pow(10000.0, -k / static_cast<double>(d));
        x(0, j) += static_cast<Scalar>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
      break;
    case PositionEncodingKind::NoneKind:
      break;
  }

  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
  RowMatrix<Scalar> a, xhat, qkv, y(1, d), branch, tanh_u, g;
  ColVector<Scalar> inv;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams<Scalar>& lp = params.layers[l];
    layernorm_forward(x, lp.ln1_g, lp.ln1_b, a, xhat, inv);
    qkv.noalias() = a * lp.w_qkv;
    qkv += lp.b_qkv;
    k_cache_[l].row(pos) = qkv.block(0, d, 1, d);
    v_cache_[l].row(pos) = qkv.block(0, 2 * d, 1, d);
    for (Eigen::Index h = 0; h < H; ++h) {
      auto q = qkv.block(0, h * hd, 1, hd);
      auto ks = k_cache_[l].block(0, h * hd, pos + 1, hd);
      auto vs = v_cache_[l].block(0, h * hd, pos + 1, hd);
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scores = ks * q.transpose();
      scores *= inv_sqrt;
      const Scalar mx = scores.maxCoeff();
      scores = (scores.array() - mx).exp();
      scores /= scores.sum();
      y.block(0, h * hd, 1, hd).noalias() = scores.transpose() * vs;
    }
    branch.noalias() = y * lp.w_attn_proj;
    branch += lp.b_attn_proj;
    x += branch;

    layernorm_forward(x, lp.ln2_g, lp.ln2_b, a, xhat, inv);
    RowMatrix<Scalar> h1;
    h1.noalias() = a * lp.w_mlp_in;
    h1 += lp.b_mlp_in;
    gelu_forward(h1, tanh_u, g);
    branch.noalias() = g * lp.w_mlp_out;
    branch += lp.b_mlp_out;
    x += branch;
  }
  layernorm_forward(x, params.lnf_g, params.lnf_b, a, xhat, inv);
  RowVector<Scalar> logits;
  logits.noalias() = a.row(0) * params.head;
  if (!logits.allFinite()) throw std::runtime_error("non-finite activation in decoding");
  ++len_;
  return logits;
}

namespace {

std::string format_float(float value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string checksum_hex(uint64_t v) {
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xf];
    v >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& dir, const ModelConfig& cfg,
                     const Parameters<float>& params, const Vocabulary& vocab) {
  cfg.validate();
  if (vocab.size() != cfg.v) throw std::invalid_argument("vocabulary size disagrees with config");
  std::filesystem::create_directories(dir);

  std::ostringstream manifest;
  manifest << "format_version = 1\n";
  manifest << "d = " << cfg.d << "\n";
  manifest << "h = " << cfg.h << "\n";
  manifest << "layers = " << cfg.layers << "\n";
  manifest << "n = " << cfg.n << "\n";
  manifest << "v = " << cfg.v << "\n";
  manifest << "pe_kind = " << pe_kind_name(cfg.pe_kind) << "\n";
  manifest << "dropout = " << format_float(cfg.dropout) << "\n";
  manifest << "seed = " << cfg.seed << "\n";
  manifest << "vocab_checksum = " << checksum_hex(vocabulary_checksum(vocab)) << "\n";

  std::ofstream bin(dir + "/params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + dir + "/params.bin");
  visit_tensors(params, [&](const std::string& name, const RowMatrix<float>& t) {
    manifest << "tensor " << name << " " << t.rows() << " " << t.cols() << "\n";
    bin.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.size())));
  });
  bin.close();
  if (!bin) throw std::runtime_error("failed writing " + dir + "/params.bin");

  std::ofstream mf(dir + "/manifest.txt", std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write " + dir + "/manifest.txt");
  mf << manifest.str();
  mf.close();
  if (!mf) throw std::runtime_error("failed writing " + dir + "/manifest.txt");

  vocab.save(dir + "/vocab.txt");
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.txt", std::ios::binary);
  if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.txt");

  ModelConfig cfg;
  std::string vocab_checksum;
  std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> tensors;
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tensor") {
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      ls >> name >> rows >> cols;
      tensors.emplace_back(name, rows, cols);
      continue;
    }
    std::string eq, value;
    ls >> eq >> value;
    if (eq != "=") throw std::runtime_error("malformed manifest line: " + line);
    if (key == "format_version") {
      if (value != "1") throw std::runtime_error("unsupported checkpoint format version " + value);
    } else if (key == "d") cfg.d = std::stoi(value);
    else if (key == "h") cfg.h = std::stoi(value);
    else if (key == "layers") cfg.layers = std::stoi(value);
    else if (key == "n") cfg.n = std::stoi(value);
    else if (key == "v") cfg.v = std::stoi(value);
    else if (key == "pe_kind") cfg.pe_kind = pe_kind_from_name(value);
    else if (key == "dropout") cfg.dropout = std::stof(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "vocab_checksum") vocab_checksum = value;
    else throw std::runtime_error("unknown manifest key: " + key);
  }
  cfg.validate();

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = shaped_parameters<float>(cfg);

  std::ifstream bin(dir + "/params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + dir + "/params.bin");
  size_t next = 0;
  visit_tensors(ckpt.params, [&](const std::string& name, RowMatrix<float>& t) {
    if (next >= tensors.size()) throw std::runtime_error("manifest lists too few tensors");
    const auto& [mname, mrows, mcols] = tensors[next++];
    if (mname != name || mrows != t.rows() || mcols != t.cols())
      throw std::runtime_error("manifest tensor " + mname + " does not match expected " + name);
    bin.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.size())));
    if (!bin) throw std::runtime_error("params.bin truncated at tensor " + name);
  });
  if (next != tensors.size()) throw std::runtime_error("manifest lists extra tensors");
  char extra;
  if (bin.read(&extra, 1)) throw std::runtime_error("params.bin holds trailing bytes");

  ckpt.vocab = Vocabulary::load(dir + "/vocab.txt");
  if (checksum_hex(vocabulary_checksum(ckpt.vocab)) != vocab_checksum)
    throw std::runtime_error("vocabulary checksum mismatch in " + dir);
  if (ckpt.vocab.size() != cfg.v)
    throw std::runtime_error("vocabulary size disagrees with checkpoint config");
  return ckpt;
}

template struct Parameters<float>;
template struct Parameters<double>;
template Parameters<double> Parameters<float>::cast<double>() const;
template Parameters<float> Parameters<float>::cast<float>() const;
template Parameters<float> Parameters<double>::cast<float>() const;
template Parameters<double> Parameters<double>::cast<double>() const;

template Parameters<float> init_parameters<float>(const ModelConfig&);
template Parameters<double> init_parameters<double>(const ModelConfig&);

template RowMatrix<float> embed<float>(const ModelConfig&, const Parameters<float>&, const Batch&);
template RowMatrix<double> embed<double>(const ModelConfig&, const Parameters<double>&, const Batch&);

template RowMatrix<float> forward<float>(const ModelConfig&, const Parameters<float>&, const Batch&);
template RowMatrix<double> forward<double>(const ModelConfig&, const Parameters<double>&, const Batch&);

template RowVector<float> masked_distribution<float>(const RowVector<float>&, const std::vector<uint8_t>&);
template RowVector<double> masked_distribution<double>(const RowVector<double>&, const std::vector<uint8_t>&);

template LossResult<float> batch_loss<float>(const ModelConfig&, const RowMatrix<float>&, const Batch&, const MaskSet&);
template LossResult<double> batch_loss<double>(const ModelConfig&, const RowMatrix<double>&, const Batch&, const MaskSet&);

template LossResult<float> loss_and_gradients<float>(const ModelConfig&, const Parameters<float>&, const Batch&, const MaskSet&, Parameters<float>*, Rng*);
template LossResult<double> loss_and_gradients<double>(const ModelConfig&, const Parameters<double>&, const Batch&, const MaskSet&, Parameters<double>*, Rng*);

template AdamState<float> init_adam<float>(const Parameters<float>&);
template AdamState<double> init_adam<double>(const Parameters<double>&);

template void adam_step<float>(Parameters<float>&, const Parameters<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(Parameters<double>&, const Parameters<double>&, AdamState<double>&, const AdamConfig&);

template class InferenceSession<float>;
template class InferenceSession<double>;

}  // namespace origami
