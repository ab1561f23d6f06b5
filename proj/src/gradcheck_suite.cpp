#include "datf/gradcheck_suite.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "datf/model.hpp"

namespace datf {

namespace {

Matrix random_nonzero(int rows, int cols, std::uint64_t seed, double margin = 1e-2) {
    Matrix m = random_matrix(rows, cols, seed);
    for (double& v : m.values) {
        if (std::fabs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
    }
    return m;
}

GradCheckResult check_head_attention(AdjustmentStrategy strategy, std::uint64_t seed) {
    const int n = 5, d = 4;
    return gradient_check(
        [strategy](const std::vector<Matrix>& in) {
            return adjusted_head_attention(in[0], in[1], in[2], in[3], strategy);
        },
        [strategy](const std::vector<Matrix>& in, const Matrix& g) {
            HeadAttentionCache cache;
            adjusted_head_attention(in[0], in[1], in[2], in[3], strategy, nullptr, &cache);
            Matrix dq, dk, dv, dr;
            adjusted_head_attention_backward(cache, strategy, nullptr, g, &dq, &dk, &dv, &dr);
            return std::vector<Matrix>{dq, dk, dv, dr};
        },
        {random_matrix(n, d, seed, -0.9, 0.9), random_matrix(n, d, seed + 1, -0.9, 0.9),
         random_matrix(n, d, seed + 2), random_matrix(n, n, seed + 3, 0.1, 1.9)},
        seed + 4);
}

GradCheckResult check_multi_head() {
    const int h = 2, d = 3, d_model = 6, n = 4;
    MultiHeadAttentionParams params;
    for (int i = 0; i < h; ++i) {
        params.heads.push_back({random_matrix(d_model, d, 900 + 10 * i, -0.5, 0.5),
                                random_matrix(d_model, d, 901 + 10 * i, -0.5, 0.5),
                                random_matrix(d_model, d, 902 + 10 * i, -0.5, 0.5)});
        HeadDistanceParams dp;
        dp.w = i % 2 == 0 ? 0.6 : -0.8;
        dp.v = 0.25;
        params.distance.push_back(dp);
    }
    params.wo = random_matrix(h * d, d_model, 950, -0.5, 0.5);
    MultiHeadAttentionParams grads = zeros_like(params);
    Matrix h_in = random_matrix(n, d_model, 951);
    Matrix h_in_grad(n, d_model);

    const MappingKind kind;
    std::vector<ParamRef> values = param_refs(params);
    std::vector<ParamRef> grad_refs = param_refs(grads);
    values.push_back({"h_in", h_in.data(), h_in.size(), n, d_model});
    grad_refs.push_back({"h_in", h_in_grad.data(), h_in_grad.size(), n, d_model});

    return gradient_check_refs(
        [&]() {
            return multi_head_attention(h_in, params, kind, AdjustmentStrategy::EarlyMultiply);
        },
        [&](const Matrix& g) {
            zero_param_refs(grad_refs);
            MultiHeadCache cache;
            multi_head_attention(h_in, params, kind, AdjustmentStrategy::EarlyMultiply, nullptr,
                                 &cache);
            const Matrix dh = multi_head_attention_backward(
                g, cache, params, kind, AdjustmentStrategy::EarlyMultiply, nullptr, &grads);
            add_inplace(h_in_grad, dh);
        },
        values, grad_refs, 952);
}

TransformerBlockParams demo_block(int h, int d_model, int d, int d_ff, std::uint64_t seed) {
    TransformerBlockParams b;
    for (int i = 0; i < h; ++i) {
        b.attention.heads.push_back({random_matrix(d_model, d, seed + 10 * i, -0.5, 0.5),
                                     random_matrix(d_model, d, seed + 10 * i + 1, -0.5, 0.5),
                                     random_matrix(d_model, d, seed + 10 * i + 2, -0.5, 0.5)});
        HeadDistanceParams dp;
        dp.w = i % 2 == 0 ? 0.5 : -0.7;
        dp.v = -0.2;
        b.attention.distance.push_back(dp);
    }
    b.attention.wo = random_matrix(h * d, d_model, seed + 100, -0.5, 0.5);
    b.ffn_w1 = random_matrix(d_model, d_ff, seed + 101, -0.5, 0.5);
    b.ffn_b1 = random_matrix(1, d_ff, seed + 102, -0.1, 0.1);
    b.ffn_w2 = random_matrix(d_ff, d_model, seed + 103, -0.5, 0.5);
    b.ffn_b2 = random_matrix(1, d_model, seed + 104, -0.1, 0.1);
    b.ln1_gain = random_matrix(1, d_model, seed + 105, 0.8, 1.2);
    b.ln1_bias = random_matrix(1, d_model, seed + 106, -0.1, 0.1);
    b.ln2_gain = random_matrix(1, d_model, seed + 107, 0.8, 1.2);
    b.ln2_bias = random_matrix(1, d_model, seed + 108, -0.1, 0.1);
    return b;
}

GradCheckResult check_transformer_block() {
    const int h = 2, d = 4, d_model = 8, d_ff = 12, n = 4;
    TransformerBlockParams block = demo_block(h, d_model, d, d_ff, 1000);
    TransformerBlockParams grads = zeros_like(block);
    Matrix h_in = random_matrix(n, d_model, 1200);
    Matrix h_in_grad(n, d_model);
    const MappingKind kind;
    const AdjustmentStrategy strategy = AdjustmentStrategy::EarlyMultiply;

    std::vector<ParamRef> values = param_refs(block);
    std::vector<ParamRef> grad_refs = param_refs(grads);
    values.push_back({"h_in", h_in.data(), h_in.size(), n, d_model});
    grad_refs.push_back({"h_in", h_in_grad.data(), h_in_grad.size(), n, d_model});

    return gradient_check_refs(
        [&]() { return transformer_block(h_in, block, kind, strategy); },
        [&](const Matrix& g) {
            zero_param_refs(grad_refs);
            TransformerBlockCache cache;
            transformer_block(h_in, block, kind, strategy, nullptr, &cache);
            const Matrix dh =
                transformer_block_backward(g, cache, block, kind, strategy, nullptr, &grads);
            add_inplace(h_in_grad, dh);
        },
        values, grad_refs, 1201);
}

GradCheckResult check_full_model() {
    ModelConfig cfg;
    cfg.vocab = 10;
    cfg.heads = 2;
    cfg.head_dim = 4;
    cfg.d_model = 8;
    cfg.d_ff = 12;
    cfg.classes = 3;
    cfg.max_len = 8;
    ModelParams params = init_model(cfg, 4242);
    ModelParams grads = zeros_like(params);
    const Example example{{2, 7, 3, 9, 4}, 1};

    const std::vector<ParamRef> values = param_refs(params);
    const std::vector<ParamRef> grad_refs = param_refs(grads);
    return gradient_check_refs(
        [&]() {
            Matrix loss(1, 1);
            loss(0, 0) = softmax_cross_entropy(model_forward(params, cfg, example.tokens),
                                               example.label);
            return loss;
        },
        [&](const Matrix& g) {
            zero_param_refs(grad_refs);
            model_example_grad(params, cfg, example, &grads);
            for (const ParamRef& ref : grad_refs) {
                for (std::size_t j = 0; j < ref.size; ++j) ref.data[j] *= g(0, 0);
            }
        },
        values, grad_refs, 4243);
}

}  // namespace

std::vector<SuiteEntry> standard_gradcheck_entries() {
    std::vector<SuiteEntry> entries;

    entries.push_back({"matmul", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) { return matmul(in[0], in[1]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                auto [da, db] = matmul_backward(in[0], in[1], g);
                return std::vector<Matrix>{da, db};
            },
            {random_matrix(3, 4, 1), random_matrix(4, 2, 2)}, 3);
    }});

    entries.push_back({"row_softmax", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) { return row_softmax(in[0]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                return std::vector<Matrix>{row_softmax_backward(row_softmax(in[0]), g)};
            },
            {random_matrix(4, 4, 10, -2.0, 2.0)}, 11);
    }});

    entries.push_back({"relu", [] {
        Matrix x = random_nonzero(4, 4, 20);
        return gradient_check(
            [](const std::vector<Matrix>& in) { return relu(in[0]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                return std::vector<Matrix>{relu_backward(in[0], g)};
            },
            {x}, 21,
            [x](std::size_t, std::size_t e) { return std::fabs(x.values[e]) < 1e-3; });
    }});

    entries.push_back({"elementwise_mul", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) { return elementwise_mul(in[0], in[1]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                auto [da, db] = elementwise_mul_backward(in[0], in[1], g);
                return std::vector<Matrix>{da, db};
            },
            {random_matrix(3, 4, 30), random_matrix(3, 4, 31)}, 32);
    }});

    entries.push_back({"layer_norm", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) { return layer_norm(in[0], in[1], in[2]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                LayerNormCache cache;
                layer_norm(in[0], in[1], in[2], &cache);
                Matrix gx, ggain, gbias;
                layer_norm_backward(cache, in[1], g, &gx, &ggain, &gbias);
                return std::vector<Matrix>{gx, ggain, gbias};
            },
            {random_matrix(3, 8, 40, -2.0, 2.0), random_matrix(1, 8, 41, 0.5, 1.5),
             random_matrix(1, 8, 42, -0.5, 0.5)},
            43);
    }});

    entries.push_back({"mean_pool_rows", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) { return mean_pool_rows(in[0]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                return std::vector<Matrix>{mean_pool_rows_backward(in[0].rows, g)};
            },
            {random_matrix(4, 3, 50)}, 51);
    }});

    entries.push_back({"softmax_cross_entropy", [] {
        const int label = 2;
        return gradient_check(
            [label](const std::vector<Matrix>& in) {
                Matrix loss(1, 1);
                loss(0, 0) = softmax_cross_entropy(in[0], label);
                return loss;
            },
            [label](const std::vector<Matrix>& in, const Matrix& g) {
                Matrix probs;
                softmax_cross_entropy(in[0], label, &probs);
                return std::vector<Matrix>{
                    scale(softmax_cross_entropy_backward(probs, label), g(0, 0))};
            },
            {random_matrix(1, 5, 60, -2.0, 2.0)}, 61);
    }});

    entries.push_back({"weight_distances", [] {
        const DistanceMatrix r = build_distance_matrix(6);
        return gradient_check(
            [r](const std::vector<Matrix>& in) { return weight_distances(r, in[0](0, 0)); },
            [r](const std::vector<Matrix>& in, const Matrix& g) {
                (void)in;
                return std::vector<Matrix>{
                    Matrix::filled(1, 1, weight_distances_backward_w(r, g))};
            },
            {Matrix::filled(1, 1, 0.6)}, 70);
    }});

    entries.push_back({"map_learnable_sigmoid", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) {
                return map_learnable_sigmoid(in[0], in[1](0, 0));
            },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                Matrix gx;
                double gv = 0.0;
                map_learnable_sigmoid_backward(in[0], in[1](0, 0), g, &gx, &gv);
                return std::vector<Matrix>{gx, Matrix::filled(1, 1, gv)};
            },
            {random_matrix(4, 4, 80, -6.0, 6.0), Matrix::filled(1, 1, 0.7)}, 81);
    }});

    entries.push_back({"map_clip", [] {
        const double t = 1.0;
        Matrix x = random_matrix(4, 4, 90, -3.0, 3.0);
        return gradient_check(
            [t](const std::vector<Matrix>& in) { return map_clip(in[0], t); },
            [t](const std::vector<Matrix>& in, const Matrix& g) {
                return std::vector<Matrix>{map_clip_backward(in[0], t, g)};
            },
            {x}, 91,
            [x, t](std::size_t, std::size_t e) { return std::fabs(x.values[e] - t) < 1e-3; });
    }});

    entries.push_back({"map_linear", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) {
                return map_linear(in[0], in[1](0, 0), in[2](0, 0));
            },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                Matrix gx;
                double gk = 0.0, gb = 0.0;
                map_linear_backward(in[0], in[1](0, 0), g, &gx, &gk, &gb);
                return std::vector<Matrix>{gx, Matrix::filled(1, 1, gk),
                                           Matrix::filled(1, 1, gb)};
            },
            {random_matrix(4, 4, 100), Matrix::filled(1, 1, 1.3), Matrix::filled(1, 1, -0.4)},
            101);
    }});

    entries.push_back({"map_exponent", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) { return map_exponent(in[0]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                return std::vector<Matrix>{map_exponent_backward(in[0], g)};
            },
            {random_matrix(3, 3, 110, -2.0, 2.0)}, 111);
    }});

    entries.push_back({"map_standard_sigmoid", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) { return map_standard_sigmoid(in[0]); },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                return std::vector<Matrix>{map_standard_sigmoid_backward(in[0], g)};
            },
            {random_matrix(3, 3, 120, -4.0, 4.0)}, 121);
    }});

    entries.push_back({"rescaled_coefficients", [] {
        const DistanceMatrix r = build_distance_matrix(6);
        const MappingKind kind;
        return gradient_check(
            [&r, kind](const std::vector<Matrix>& in) {
                HeadDistanceParams p;
                p.w = in[0](0, 0);
                p.v = in[1](0, 0);
                return rescaled_coefficients(r, p, kind);
            },
            [&r, kind](const std::vector<Matrix>& in, const Matrix& g) {
                HeadDistanceParams p;
                p.w = in[0](0, 0);
                p.v = in[1](0, 0);
                const DistanceParamGrads dg = rescaled_coefficients_backward(r, p, kind, g);
                return std::vector<Matrix>{Matrix::filled(1, 1, dg.w), Matrix::filled(1, 1, dg.v)};
            },
            {Matrix::filled(1, 1, -0.45), Matrix::filled(1, 1, 0.8)}, 130);
    }});

    entries.push_back({"project_qkv", [] {
        return gradient_check(
            [](const std::vector<Matrix>& in) {
                auto [q, k, v] = project_qkv(in[0], {in[1], in[2], in[3]});
                return add(add(q, k), v);
            },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                auto [dh_q, dwq] = matmul_backward(in[0], in[1], g);
                auto [dh_k, dwk] = matmul_backward(in[0], in[2], g);
                auto [dh_v, dwv] = matmul_backward(in[0], in[3], g);
                return std::vector<Matrix>{add(add(dh_q, dh_k), dh_v), dwq, dwk, dwv};
            },
            {random_matrix(4, 3, 140), random_matrix(3, 2, 141), random_matrix(3, 2, 142),
             random_matrix(3, 2, 143)},
            144);
    }});

    entries.push_back({"vanilla_head_attention",
                       [] { return check_head_attention(AdjustmentStrategy::Vanilla, 150); }});
    entries.push_back({"da_head_attention",
                       [] { return check_head_attention(AdjustmentStrategy::EarlyMultiply, 160); }});
    entries.push_back({"adjusted_early_add",
                       [] { return check_head_attention(AdjustmentStrategy::EarlyAdd, 170); }});
    entries.push_back({"adjusted_late_add",
                       [] { return check_head_attention(AdjustmentStrategy::LateAdd, 180); }});
    entries.push_back({"adjusted_late_multiply",
                       [] { return check_head_attention(AdjustmentStrategy::LateMultiply, 190); }});

    entries.push_back({"multi_head_attention", [] { return check_multi_head(); }});

    entries.push_back({"feed_forward", [] {
        const int d_model = 6, d_ff = 9;
        TransformerBlockParams block = demo_block(1, d_model, d_model, d_ff, 2000);
        return gradient_check(
            [&block](const std::vector<Matrix>& in) {
                TransformerBlockParams b = block;
                b.ffn_w1 = in[1];
                b.ffn_b1 = in[2];
                b.ffn_w2 = in[3];
                b.ffn_b2 = in[4];
                return feed_forward(in[0], b);
            },
            [&block](const std::vector<Matrix>& in, const Matrix& g) {
                (void)block;
                const Matrix pre = add_row_broadcast(matmul(in[0], in[1]), in[2]);
                const Matrix act = relu(pre);
                auto [d_act, d_w2] = matmul_backward(act, in[3], g);
                const Matrix d_b2 = column_sums(g);
                const Matrix d_pre = relu_backward(pre, d_act);
                auto [d_x, d_w1] = matmul_backward(in[0], in[1], d_pre);
                const Matrix d_b1 = column_sums(d_pre);
                return std::vector<Matrix>{d_x, d_w1, d_b1, d_w2, d_b2};
            },
            {random_matrix(3, d_model, 2050), random_matrix(d_model, d_ff, 2051, -0.5, 0.5),
             random_matrix(1, d_ff, 2052, -0.1, 0.1), random_matrix(d_ff, d_model, 2053, -0.5, 0.5),
             random_matrix(1, d_model, 2054, -0.1, 0.1)},
            2055);
    }});

    entries.push_back({"transformer_block", [] { return check_transformer_block(); }});
    entries.push_back({"full_model", [] { return check_full_model(); }});

    return entries;
}

std::vector<OpCheck> run_gradcheck_entries(const std::vector<SuiteEntry>& entries) {
    std::vector<OpCheck> checks;
    checks.reserve(entries.size());
    for (const SuiteEntry& entry : entries) {
        OpCheck check;
        check.name = entry.name;
        check.result = entry.run();
        checks.push_back(std::move(check));
    }
    return checks;
}

int print_gradcheck_report(const std::vector<OpCheck>& checks, std::ostream& out) {
    bool all_pass = true;
    for (const OpCheck& check : checks) {
        const bool ok = check.passed();
        all_pass = all_pass && ok;
        out << std::left << std::setw(26) << check.name << " max_rel_err="
            << std::scientific << std::setprecision(3) << check.result.max_rel_err
            << std::defaultfloat << "  checked=" << check.result.checked
            << " skipped=" << check.result.skipped << "  " << (ok ? "pass" : "FAIL") << "\n";
    }
    out << (all_pass ? "gradcheck: all operations pass" : "gradcheck: FAILURES present") << "\n";
    return all_pass ? 0 : 1;
}

}  // namespace datf
