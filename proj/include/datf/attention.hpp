#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "datf/distance.hpp"
#include "datf/grad_check.hpp"
#include "datf/matrix.hpp"

namespace datf {

// How the re-scaled distance coefficients enter the attention computation.
// EarlyMultiply is the main method: softmax(relu(Q K^T) .* R_hat / sqrt(d)) V.
// Early variants act before softmax normalization, late variants after it
// (without renormalizing). Vanilla ignores the coefficients entirely.
enum class AdjustmentStrategy { EarlyMultiply, EarlyAdd, LateAdd, LateMultiply, Vanilla };

AdjustmentStrategy parse_strategy(const std::string& name);
std::string strategy_name(AdjustmentStrategy strategy);

struct HeadParams {
    Matrix wq, wk, wv;  // each d_model x d
};

struct MultiHeadAttentionParams {
    std::vector<HeadParams> heads;
    Matrix wo;  // (h * d) x d_model
    std::vector<HeadDistanceParams> distance;  // one per head

    int head_count() const { return static_cast<int>(heads.size()); }
    int head_dim() const { return heads.empty() ? 0 : heads[0].wq.cols; }
    int model_dim() const { return heads.empty() ? 0 : heads[0].wq.rows; }
};

struct TransformerBlockParams {
    MultiHeadAttentionParams attention;
    Matrix ffn_w1, ffn_b1;  // d_model x d_ff, 1 x d_ff
    Matrix ffn_w2, ffn_b2;  // d_ff x d_model, 1 x d_model
    Matrix ln1_gain, ln1_bias;
    Matrix ln2_gain, ln2_bias;
};

MultiHeadAttentionParams zeros_like(const MultiHeadAttentionParams& p);
TransformerBlockParams zeros_like(const TransformerBlockParams& p);

// Trainable scalars in fixed order: per-head wq/wk/wv, wo, per-head distance
// scalars (w, v, linear_k, linear_b); the block adds ffn and layer-norm
// parameters after the attention ones.
std::vector<ParamRef> param_refs(MultiHeadAttentionParams& p);
std::vector<ParamRef> param_refs(TransformerBlockParams& p);

// Key positions marked 1 receive exactly zero attention weight in every
// strategy, and their rows are excluded from pooling. Empty mask = no padding.
using PadMask = std::vector<unsigned char>;

// ---- single-head operations ----

std::tuple<Matrix, Matrix, Matrix> project_qkv(const Matrix& h_in, const HeadParams& head);

struct HeadAttentionCache {
    Matrix q, k, v;
    Matrix scores;      // raw Q K^T (EarlyMultiply) or unused
    Matrix presoftmax;  // softmax argument
    Matrix attn_base;   // softmax output before any late adjustment
    Matrix attn;        // late-adjusted weights; empty when identical to attn_base
    Matrix coeffs;      // R_hat as used (possibly column-masked for late paths)

    // The weights actually multiplied with V (and exported as heatmaps).
    const Matrix& weights() const { return attn.values.empty() ? attn_base : attn; }
};

// softmax(Q K^T / sqrt(d)) V
Matrix vanilla_head_attention(const Matrix& q, const Matrix& k, const Matrix& v);

// softmax(relu(Q K^T) .* r_hat / sqrt(d)) V — relu first, then the
// elementwise product, then the 1/sqrt(d) scaling, exactly in that order.
Matrix da_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& r_hat);

// r_hat is taken by value: pass an rvalue to hand it to the cache without a
// copy (the multi-head loop does).
Matrix adjusted_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix r_hat,
                               AdjustmentStrategy strategy, const PadMask* mask = nullptr,
                               HeadAttentionCache* cache = nullptr);

// Gradients for one head. r_hat gradient is returned via grad_r_hat (null to
// skip); q/k/v gradients always computed.
void adjusted_head_attention_backward(const HeadAttentionCache& cache,
                                      AdjustmentStrategy strategy, const PadMask* mask,
                                      const Matrix& g, Matrix* grad_q, Matrix* grad_k,
                                      Matrix* grad_v, Matrix* grad_r_hat);

// ---- multi-head attention and the transformer block ----

struct MultiHeadCache {
    Matrix input;
    std::vector<HeadAttentionCache> heads;
    Matrix concat;  // N x (h * d)
};

Matrix multi_head_attention(const Matrix& h_in, const MultiHeadAttentionParams& params,
                            const MappingKind& kind, AdjustmentStrategy strategy,
                            const PadMask* mask = nullptr, MultiHeadCache* cache = nullptr);

// Returns the gradient w.r.t. h_in; parameter gradients accumulate into
// *grads (same structure as the parameters).
Matrix multi_head_attention_backward(const Matrix& g, const MultiHeadCache& cache,
                                     const MultiHeadAttentionParams& params,
                                     const MappingKind& kind, AdjustmentStrategy strategy,
                                     const PadMask* mask, MultiHeadAttentionParams* grads);

struct TransformerBlockCache {
    MultiHeadCache mha;
    Matrix mha_out, res1;
    LayerNormCache ln1;
    Matrix ln1_out;
    Matrix ffn_pre;  // x W1 + b1, before relu
    Matrix ffn_act;  // relu(ffn_pre)
    Matrix ffn_out, res2;
    LayerNormCache ln2;
};

// max(0, x W1 + b1) W2 + b2 applied row-wise.
Matrix feed_forward(const Matrix& x, const TransformerBlockParams& block);

// Post-norm residual wiring: y1 = LN(x + MHA(x)); y2 = LN(y1 + FFN(y1)).
Matrix transformer_block(const Matrix& h_in, const TransformerBlockParams& block,
                         const MappingKind& kind, AdjustmentStrategy strategy,
                         const PadMask* mask = nullptr, TransformerBlockCache* cache = nullptr);

Matrix transformer_block_backward(const Matrix& g, const TransformerBlockCache& cache,
                                  const TransformerBlockParams& block, const MappingKind& kind,
                                  AdjustmentStrategy strategy, const PadMask* mask,
                                  TransformerBlockParams* grads);

// Standard sin/cos table: entry (pos, 2k) = sin(pos / 10000^(2k/d_model)),
// entry (pos, 2k+1) = cos(same). Vanilla-baseline only.
Matrix sinusoidal_position_encoding(int n, int d_model);

}  // namespace datf
