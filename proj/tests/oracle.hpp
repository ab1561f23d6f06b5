#pragma once

// Brute-force reference implementations used by tests and the acceptance
// suite. Everything here is written with plain scalar loops and stays
// independent of the library's kernels (no shared softmax/matmul/mapping
// code), so agreement is meaningful.

#include <cmath>
#include <vector>

#include "datf/attention.hpp"
#include "datf/matrix.hpp"

namespace datf::oracle {

// f(x; v) = (1 + e^v) / (1 + e^(v - x)), naive form (fine for moderate args).
inline double learnable_sigmoid(double x, double v) {
    return (1.0 + std::exp(v)) / (1.0 + std::exp(v - x));
}

inline Matrix coefficients(int n, double w, double v) {
    Matrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = learnable_sigmoid(w * std::abs(i - j), v);
    return out;
}

// One attention head under any adjustment strategy, scalar loops throughout.
inline Matrix head_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                             const Matrix& r_hat, AdjustmentStrategy strategy) {
    const int n = q.rows;
    const int d = q.cols;
    const int dv = v.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<std::vector<double>> scores(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += q(i, c) * k(j, c);
            scores[i][j] = s;
        }

    std::vector<std::vector<double>> pre(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            switch (strategy) {
                case AdjustmentStrategy::EarlyMultiply: {
                    const double gated = scores[i][j] > 0.0 ? scores[i][j] : 0.0;
                    pre[i][j] = gated * r_hat(i, j) * inv_sqrt_d;
                    break;
                }
                case AdjustmentStrategy::EarlyAdd:
                    pre[i][j] = scores[i][j] * inv_sqrt_d + r_hat(i, j);
                    break;
                default: pre[i][j] = scores[i][j] * inv_sqrt_d; break;
            }
        }

    std::vector<std::vector<double>> attn(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        double mx = pre[i][0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, pre[i][j]);
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            attn[i][j] = std::exp(pre[i][j] - mx);
            total += attn[i][j];
        }
        for (int j = 0; j < n; ++j) attn[i][j] /= total;
    }

    if (strategy == AdjustmentStrategy::LateAdd) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) attn[i][j] += r_hat(i, j);
    } else if (strategy == AdjustmentStrategy::LateMultiply) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) attn[i][j] *= r_hat(i, j);
    }

    Matrix out(n, dv);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < dv; ++c) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += attn[i][j] * v(j, c);
            out(i, c) = s;
        }
    return out;
}

}  // namespace datf::oracle
