#include "datf/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace datf {

namespace {

// Large negative logit for padded keys; exp underflows to exactly 0 after
// the per-row max subtraction, so masked columns get weight 0, not epsilon.
constexpr double kMaskedLogit = -1e30;

void apply_key_mask(Matrix& presoftmax, const PadMask& mask) {
    for (int j = 0; j < presoftmax.cols; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        for (int i = 0; i < presoftmax.rows; ++i) presoftmax(i, j) = kMaskedLogit;
    }
}

Matrix zero_masked_columns(const Matrix& x, const PadMask& mask) {
    Matrix out = x;
    for (int j = 0; j < out.cols; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        for (int i = 0; i < out.rows; ++i) out(i, j) = 0.0;
    }
    return out;
}

bool has_padding(const PadMask* mask) {
    if (!mask) return false;
    for (unsigned char m : *mask)
        if (m) return true;
    return false;
}

}  // namespace

AdjustmentStrategy parse_strategy(const std::string& name) {
    if (name == "early_multiply") return AdjustmentStrategy::EarlyMultiply;
    if (name == "early_add") return AdjustmentStrategy::EarlyAdd;
    if (name == "late_add") return AdjustmentStrategy::LateAdd;
    if (name == "late_multiply") return AdjustmentStrategy::LateMultiply;
    if (name == "vanilla") return AdjustmentStrategy::Vanilla;
    throw std::invalid_argument(
        "unknown strategy '" + name +
        "' (expected early_multiply|early_add|late_add|late_multiply|vanilla)");
}

std::string strategy_name(AdjustmentStrategy strategy) {
    switch (strategy) {
        case AdjustmentStrategy::EarlyMultiply: return "early_multiply";
        case AdjustmentStrategy::EarlyAdd: return "early_add";
        case AdjustmentStrategy::LateAdd: return "late_add";
        case AdjustmentStrategy::LateMultiply: return "late_multiply";
        case AdjustmentStrategy::Vanilla: return "vanilla";
    }
    return "?";
}

MultiHeadAttentionParams zeros_like(const MultiHeadAttentionParams& p) {
    MultiHeadAttentionParams z;
    z.heads.reserve(p.heads.size());
    for (const HeadParams& h : p.heads) {
        z.heads.push_back({Matrix(h.wq.rows, h.wq.cols), Matrix(h.wk.rows, h.wk.cols),
                           Matrix(h.wv.rows, h.wv.cols)});
    }
    z.wo = Matrix(p.wo.rows, p.wo.cols);
    z.distance.assign(p.distance.size(), HeadDistanceParams{0.0, 0.0, 0.0, 0.0});
    return z;
}

TransformerBlockParams zeros_like(const TransformerBlockParams& p) {
    TransformerBlockParams z;
    z.attention = zeros_like(p.attention);
    z.ffn_w1 = Matrix(p.ffn_w1.rows, p.ffn_w1.cols);
    z.ffn_b1 = Matrix(p.ffn_b1.rows, p.ffn_b1.cols);
    z.ffn_w2 = Matrix(p.ffn_w2.rows, p.ffn_w2.cols);
    z.ffn_b2 = Matrix(p.ffn_b2.rows, p.ffn_b2.cols);
    z.ln1_gain = Matrix(p.ln1_gain.rows, p.ln1_gain.cols);
    z.ln1_bias = Matrix(p.ln1_bias.rows, p.ln1_bias.cols);
    z.ln2_gain = Matrix(p.ln2_gain.rows, p.ln2_gain.cols);
    z.ln2_bias = Matrix(p.ln2_bias.rows, p.ln2_bias.cols);
    return z;
}

std::vector<ParamRef> param_refs(MultiHeadAttentionParams& p) {
    std::vector<ParamRef> refs;
    auto push = [&refs](const std::string& name, Matrix& m) {
        refs.push_back({name, m.data(), m.size(), m.rows, m.cols});
    };
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
        const std::string prefix = "head" + std::to_string(i);
        push(prefix + ".wq", p.heads[i].wq);
        push(prefix + ".wk", p.heads[i].wk);
        push(prefix + ".wv", p.heads[i].wv);
    }
    push("wo", p.wo);
    for (std::size_t i = 0; i < p.distance.size(); ++i) {
        const std::string prefix = "dist" + std::to_string(i);
        refs.push_back({prefix + ".w", &p.distance[i].w, 1, 1, 1});
        refs.push_back({prefix + ".v", &p.distance[i].v, 1, 1, 1});
        refs.push_back({prefix + ".linear_k", &p.distance[i].linear_k, 1, 1, 1});
        refs.push_back({prefix + ".linear_b", &p.distance[i].linear_b, 1, 1, 1});
    }
    return refs;
}

std::vector<ParamRef> param_refs(TransformerBlockParams& p) {
    std::vector<ParamRef> refs = param_refs(p.attention);
    auto push = [&refs](const std::string& name, Matrix& m) {
        refs.push_back({name, m.data(), m.size(), m.rows, m.cols});
    };
    push("ffn_w1", p.ffn_w1);
    push("ffn_b1", p.ffn_b1);
    push("ffn_w2", p.ffn_w2);
    push("ffn_b2", p.ffn_b2);
    push("ln1_gain", p.ln1_gain);
    push("ln1_bias", p.ln1_bias);
    push("ln2_gain", p.ln2_gain);
    push("ln2_bias", p.ln2_bias);
    return refs;
}

std::tuple<Matrix, Matrix, Matrix> project_qkv(const Matrix& h_in, const HeadParams& head) {
    if (h_in.cols != head.wq.rows) throw_shape_error("project_qkv", h_in, head.wq);
    return {matmul(h_in, head.wq), matmul(h_in, head.wk), matmul(h_in, head.wv)};
}

Matrix adjusted_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix r_hat,
                               AdjustmentStrategy strategy, const PadMask* mask,
                               HeadAttentionCache* cache) {
    if (q.rows != k.rows || q.rows != v.rows || q.cols != k.cols) {
        throw_shape_error("adjusted_head_attention q/k", q, k);
    }
    const int n = q.rows;
    const int d = q.cols;
    if (strategy != AdjustmentStrategy::Vanilla && (r_hat.rows != n || r_hat.cols != n)) {
        throw_shape_error("adjusted_head_attention r_hat", q, r_hat);
    }
    const bool masked = has_padding(mask);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    HeadAttentionCache local;
    HeadAttentionCache& c = cache ? *cache : local;
    c.q = q;
    c.k = k;
    c.v = v;
    c.attn = Matrix();

    switch (strategy) {
        case AdjustmentStrategy::EarlyMultiply: {
            c.scores = matmul_nt(q, k);
            c.coeffs = std::move(r_hat);
            // relu, elementwise product, then 1/sqrt(d), in one pass
            c.presoftmax = Matrix(n, n);
            for (std::size_t e = 0; e < c.presoftmax.size(); ++e) {
                const double gated = c.scores.values[e] > 0.0 ? c.scores.values[e] : 0.0;
                c.presoftmax.values[e] = (gated * c.coeffs.values[e]) * inv_sqrt_d;
            }
            break;
        }
        case AdjustmentStrategy::EarlyAdd: {
            c.coeffs = std::move(r_hat);
            c.presoftmax = matmul_nt(q, k);
            for (std::size_t e = 0; e < c.presoftmax.size(); ++e) {
                c.presoftmax.values[e] = c.presoftmax.values[e] * inv_sqrt_d + c.coeffs.values[e];
            }
            break;
        }
        case AdjustmentStrategy::LateAdd:
        case AdjustmentStrategy::LateMultiply: {
            c.coeffs = masked ? zero_masked_columns(r_hat, *mask) : std::move(r_hat);
            c.presoftmax = matmul_nt(q, k);
            scale_inplace(c.presoftmax, inv_sqrt_d);
            break;
        }
        case AdjustmentStrategy::Vanilla: {
            c.presoftmax = matmul_nt(q, k);
            scale_inplace(c.presoftmax, inv_sqrt_d);
            break;
        }
    }
    if (masked) apply_key_mask(c.presoftmax, *mask);
    c.attn_base = row_softmax(c.presoftmax);

    switch (strategy) {
        case AdjustmentStrategy::LateAdd: c.attn = add(c.attn_base, c.coeffs); break;
        case AdjustmentStrategy::LateMultiply: c.attn = elementwise_mul(c.attn_base, c.coeffs); break;
        default: break;  // weights() falls through to attn_base
    }
    return matmul(c.weights(), v);
}

Matrix vanilla_head_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    return adjusted_head_attention(q, k, v, Matrix(), AdjustmentStrategy::Vanilla);
}

Matrix da_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& r_hat) {
    return adjusted_head_attention(q, k, v, r_hat, AdjustmentStrategy::EarlyMultiply);
}

void adjusted_head_attention_backward(const HeadAttentionCache& cache,
                                      AdjustmentStrategy strategy, const PadMask* mask,
                                      const Matrix& g, Matrix* grad_q, Matrix* grad_k,
                                      Matrix* grad_v, Matrix* grad_r_hat) {
    const bool masked = has_padding(mask);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cache.q.cols));

    // out = weights * v
    Matrix d_attn = matmul_nt(g, cache.v);
    if (grad_v) *grad_v = matmul_tn(cache.weights(), g);

    Matrix d_attn_base;
    switch (strategy) {
        case AdjustmentStrategy::LateAdd: {
            if (grad_r_hat) {
                *grad_r_hat = masked ? zero_masked_columns(d_attn, *mask) : d_attn;
            }
            d_attn_base = std::move(d_attn);
            break;
        }
        case AdjustmentStrategy::LateMultiply: {
            auto [da, dc] = elementwise_mul_backward(cache.attn_base, cache.coeffs, d_attn);
            if (grad_r_hat) *grad_r_hat = masked ? zero_masked_columns(dc, *mask) : std::move(dc);
            d_attn_base = std::move(da);
            break;
        }
        default: d_attn_base = std::move(d_attn); break;
    }

    // Masked columns have attn_base == 0, so the softmax backward already
    // sends zero gradient through them.
    Matrix d_pre = row_softmax_backward(cache.attn_base, d_attn_base);

    Matrix d_scores;  // gradient w.r.t. raw Q K^T
    switch (strategy) {
        case AdjustmentStrategy::EarlyMultiply: {
            // presoftmax = (relu(scores) .* coeffs) / sqrt(d)
            d_scores = Matrix(d_pre.rows, d_pre.cols);
            Matrix d_coeffs(d_pre.rows, d_pre.cols);
            for (std::size_t e = 0; e < d_pre.size(); ++e) {
                const double d_prod = d_pre.values[e] * inv_sqrt_d;
                const double score = cache.scores.values[e];
                d_coeffs.values[e] = d_prod * (score > 0.0 ? score : 0.0);
                d_scores.values[e] = score > 0.0 ? d_prod * cache.coeffs.values[e] : 0.0;
            }
            if (grad_r_hat) *grad_r_hat = std::move(d_coeffs);
            break;
        }
        case AdjustmentStrategy::EarlyAdd: {
            if (grad_r_hat) *grad_r_hat = d_pre;
            d_scores = scale(d_pre, inv_sqrt_d);
            break;
        }
        default: {
            if (grad_r_hat && strategy == AdjustmentStrategy::Vanilla) {
                *grad_r_hat = Matrix(cache.attn_base.rows, cache.attn_base.cols);
            }
            d_scores = scale(d_pre, inv_sqrt_d);
            break;
        }
    }

    // scores = q * k^T
    if (grad_q) *grad_q = matmul(d_scores, cache.k);
    if (grad_k) *grad_k = matmul_tn(d_scores, cache.q);
}

Matrix multi_head_attention(const Matrix& h_in, const MultiHeadAttentionParams& params,
                            const MappingKind& kind, AdjustmentStrategy strategy,
                            const PadMask* mask, MultiHeadCache* cache) {
    const int h = params.head_count();
    if (h < 1) throw std::invalid_argument("multi_head_attention: no heads");
    if (h_in.cols != params.model_dim()) throw_shape_error("multi_head_attention", h_in, params.heads[0].wq);
    if (static_cast<int>(params.distance.size()) != h) {
        throw std::invalid_argument("multi_head_attention: distance params count != head count");
    }
    const int n = h_in.rows;
    const int d = params.head_dim();
    if (params.wo.rows != h * d) throw_shape_error("multi_head_attention wo", h_in, params.wo);

    std::shared_ptr<const DistanceMatrix> r;
    if (strategy != AdjustmentStrategy::Vanilla) r = cached_distance_matrix(n);

    MultiHeadCache local;
    MultiHeadCache& c = cache ? *cache : local;
    c.input = h_in;
    c.heads.resize(static_cast<std::size_t>(h));
    c.concat = Matrix(n, h * d);

    for (int i = 0; i < h; ++i) {
        auto [q, k, v] = project_qkv(h_in, params.heads[static_cast<std::size_t>(i)]);
        Matrix r_hat;
        if (strategy != AdjustmentStrategy::Vanilla) {
            r_hat = rescaled_coefficients(*r, params.distance[static_cast<std::size_t>(i)], kind);
        }
        const Matrix head_out =
            adjusted_head_attention(q, k, v, std::move(r_hat), strategy, mask,
                                    &c.heads[static_cast<std::size_t>(i)]);
        for (int row = 0; row < n; ++row)
            for (int col = 0; col < d; ++col) c.concat(row, i * d + col) = head_out(row, col);
    }
    return matmul(c.concat, params.wo);
}

Matrix multi_head_attention_backward(const Matrix& g, const MultiHeadCache& cache,
                                     const MultiHeadAttentionParams& params,
                                     const MappingKind& kind, AdjustmentStrategy strategy,
                                     const PadMask* mask, MultiHeadAttentionParams* grads) {
    const int h = params.head_count();
    const int d = params.head_dim();
    const int n = cache.input.rows;

    auto [d_concat, d_wo] = matmul_backward(cache.concat, params.wo, g);
    add_inplace(grads->wo, d_wo);

    std::shared_ptr<const DistanceMatrix> r;
    if (strategy != AdjustmentStrategy::Vanilla) r = cached_distance_matrix(n);

    Matrix d_input(cache.input.rows, cache.input.cols);
    Matrix d_head(n, d);
    for (int i = 0; i < h; ++i) {
        for (int row = 0; row < n; ++row)
            for (int col = 0; col < d; ++col) d_head(row, col) = d_concat(row, i * d + col);

        Matrix dq, dk, dv, d_r_hat;
        const bool want_r_hat = strategy != AdjustmentStrategy::Vanilla;
        adjusted_head_attention_backward(cache.heads[static_cast<std::size_t>(i)], strategy, mask,
                                         d_head, &dq, &dk, &dv, want_r_hat ? &d_r_hat : nullptr);

        if (want_r_hat) {
            const DistanceParamGrads dg = rescaled_coefficients_backward(
                *r, params.distance[static_cast<std::size_t>(i)], kind, d_r_hat);
            HeadDistanceParams& acc = grads->distance[static_cast<std::size_t>(i)];
            acc.w += dg.w;
            acc.v += dg.v;
            acc.linear_k += dg.linear_k;
            acc.linear_b += dg.linear_b;
        }

        const HeadParams& head = params.heads[static_cast<std::size_t>(i)];
        HeadParams& head_grads = grads->heads[static_cast<std::size_t>(i)];
        add_inplace(head_grads.wq, matmul_tn(cache.input, dq));
        add_inplace(head_grads.wk, matmul_tn(cache.input, dk));
        add_inplace(head_grads.wv, matmul_tn(cache.input, dv));
        add_inplace(d_input, matmul_nt(dq, head.wq));
        add_inplace(d_input, matmul_nt(dk, head.wk));
        add_inplace(d_input, matmul_nt(dv, head.wv));
    }
    return d_input;
}

Matrix feed_forward(const Matrix& x, const TransformerBlockParams& block) {
    if (x.cols != block.ffn_w1.rows) throw_shape_error("feed_forward", x, block.ffn_w1);
    const Matrix hidden = relu(add_row_broadcast(matmul(x, block.ffn_w1), block.ffn_b1));
    return add_row_broadcast(matmul(hidden, block.ffn_w2), block.ffn_b2);
}

Matrix transformer_block(const Matrix& h_in, const TransformerBlockParams& block,
                         const MappingKind& kind, AdjustmentStrategy strategy,
                         const PadMask* mask, TransformerBlockCache* cache) {
    TransformerBlockCache local;
    TransformerBlockCache& c = cache ? *cache : local;

    c.mha_out = multi_head_attention(h_in, block.attention, kind, strategy, mask, &c.mha);
    c.res1 = add(h_in, c.mha_out);
    c.ln1_out = layer_norm(c.res1, block.ln1_gain, block.ln1_bias, &c.ln1);

    c.ffn_pre = add_row_broadcast(matmul(c.ln1_out, block.ffn_w1), block.ffn_b1);
    c.ffn_act = relu(c.ffn_pre);
    c.ffn_out = add_row_broadcast(matmul(c.ffn_act, block.ffn_w2), block.ffn_b2);
    c.res2 = add(c.ln1_out, c.ffn_out);
    return layer_norm(c.res2, block.ln2_gain, block.ln2_bias, &c.ln2);
}

Matrix transformer_block_backward(const Matrix& g, const TransformerBlockCache& cache,
                                  const TransformerBlockParams& block, const MappingKind& kind,
                                  AdjustmentStrategy strategy, const PadMask* mask,
                                  TransformerBlockParams* grads) {
    Matrix d_res2, d_ln2_gain, d_ln2_bias;
    layer_norm_backward(cache.ln2, block.ln2_gain, g, &d_res2, &d_ln2_gain, &d_ln2_bias);
    add_inplace(grads->ln2_gain, d_ln2_gain);
    add_inplace(grads->ln2_bias, d_ln2_bias);

    // res2 = ln1_out + ffn_out
    Matrix d_ln1_out = d_res2;
    const Matrix& d_ffn_out = d_res2;

    add_inplace(grads->ffn_b2, column_sums(d_ffn_out));
    auto [d_ffn_act, d_w2] = matmul_backward(cache.ffn_act, block.ffn_w2, d_ffn_out);
    add_inplace(grads->ffn_w2, d_w2);
    const Matrix d_ffn_pre = relu_backward(cache.ffn_pre, d_ffn_act);
    add_inplace(grads->ffn_b1, column_sums(d_ffn_pre));
    auto [d_ln1_from_ffn, d_w1] = matmul_backward(cache.ln1_out, block.ffn_w1, d_ffn_pre);
    add_inplace(grads->ffn_w1, d_w1);
    add_inplace(d_ln1_out, d_ln1_from_ffn);

    Matrix d_res1, d_ln1_gain, d_ln1_bias;
    layer_norm_backward(cache.ln1, block.ln1_gain, d_ln1_out, &d_res1, &d_ln1_gain, &d_ln1_bias);
    add_inplace(grads->ln1_gain, d_ln1_gain);
    add_inplace(grads->ln1_bias, d_ln1_bias);

    // res1 = h_in + mha_out
    Matrix d_h_in = d_res1;
    const Matrix d_from_mha = multi_head_attention_backward(d_res1, cache.mha, block.attention,
                                                            kind, strategy, mask,
                                                            &grads->attention);
    add_inplace(d_h_in, d_from_mha);
    return d_h_in;
}

Matrix sinusoidal_position_encoding(int n, int d_model) {
    if (n < 1) throw std::invalid_argument("sinusoidal_position_encoding: n must be >= 1");
    if (d_model < 2 || d_model % 2 != 0) {
        throw std::invalid_argument("sinusoidal_position_encoding: d_model must be even, got " +
                                    std::to_string(d_model));
    }
    Matrix out(n, d_model);
    for (int pos = 0; pos < n; ++pos) {
        for (int k = 0; 2 * k < d_model; ++k) {
            const double rate = std::pow(10000.0, (2.0 * k) / d_model);
            const double angle = pos / rate;
            out(pos, 2 * k) = std::sin(angle);
            out(pos, 2 * k + 1) = std::cos(angle);
        }
    }
    return out;
}

}  // namespace datf
