#include "datf/matrix.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace datf {

Matrix::Matrix(int r, int c) : rows(r), cols(c) {
    if (r <= 0 || c <= 0) {
        throw std::invalid_argument("Matrix dimensions must be positive, got " +
                                    std::to_string(r) + "x" + std::to_string(c));
    }
    values.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
}

Matrix Matrix::ones(int r, int c) { return filled(r, c, 1.0); }

Matrix Matrix::filled(int r, int c, double value) {
    Matrix m(r, c);
    std::fill(m.values.begin(), m.values.end(), value);
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) {
            throw std::invalid_argument("from_rows: ragged initializer");
        }
        int j = 0;
        for (double x : row) m(i, j++) = x;
        ++i;
    }
    return m;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Matrix::all_finite() const {
    for (double x : values) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void throw_shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
}

Matrix transpose(const Matrix& x) {
    Matrix out(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape_error("add", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += b.values[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape_error("sub", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

Matrix scale(const Matrix& x, double s) {
    Matrix out = x;
    for (double& v : out.values) v *= s;
    return out;
}

void scale_inplace(Matrix& x, double s) {
    for (double& v : x.values) v *= s;
}

void add_inplace(Matrix& dst, const Matrix& src) {
    if (!dst.same_shape(src)) throw_shape_error("add_inplace", dst, src);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.values[i] += src.values[i];
}

void axpy_inplace(Matrix& dst, double alpha, const Matrix& src) {
    if (!dst.same_shape(src)) throw_shape_error("axpy_inplace", dst, src);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.values[i] += alpha * src.values[i];
}

double sum(const Matrix& x) {
    double s = 0.0;
    for (double v : x.values) s += v;
    return s;
}

double dot_all(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape_error("dot_all", a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape_error("max_abs_diff", a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.values[i] - b.values[i]));
    return m;
}

Matrix add_row_broadcast(const Matrix& x, const Matrix& row) {
    if (row.rows != 1 || row.cols != x.cols) throw_shape_error("add_row_broadcast", x, row);
    Matrix out = x;
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(i, j) += row(0, j);
    return out;
}

Matrix column_sums(const Matrix& x) {
    Matrix out(1, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(0, j) += x(i, j);
    return out;
}

namespace {

Matrix gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, const Matrix& a, const Matrix& b) {
    const int am = (ta == CblasNoTrans) ? a.rows : a.cols;
    const int ak = (ta == CblasNoTrans) ? a.cols : a.rows;
    const int bk = (tb == CblasNoTrans) ? b.rows : b.cols;
    const int bn = (tb == CblasNoTrans) ? b.cols : b.rows;
    if (ak != bk) throw_shape_error("matmul", a, b);
    Matrix out(am, bn);
    cblas_dgemm(CblasRowMajor, ta, tb, am, bn, ak, 1.0, a.data(), a.cols, b.data(), b.cols, 0.0,
                out.data(), out.cols);
    return out;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) { return gemm(CblasNoTrans, CblasNoTrans, a, b); }
Matrix matmul_nt(const Matrix& a, const Matrix& b) { return gemm(CblasNoTrans, CblasTrans, a, b); }
Matrix matmul_tn(const Matrix& a, const Matrix& b) { return gemm(CblasTrans, CblasNoTrans, a, b); }

std::pair<Matrix, Matrix> matmul_backward(const Matrix& a, const Matrix& b, const Matrix& g) {
    if (g.rows != a.rows || g.cols != b.cols) throw_shape_error("matmul_backward", a, g);
    return {matmul_nt(g, b), matmul_tn(a, g)};
}

Matrix row_softmax(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double mx = x(i, 0);
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x(i, j));
        double total = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double e = std::exp(x(i, j) - mx);
            out(i, j) = e;
            total += e;
        }
        const double inv = 1.0 / total;
        for (int j = 0; j < x.cols; ++j) out(i, j) *= inv;
    }
    return out;
}

Matrix row_softmax_backward(const Matrix& y, const Matrix& g) {
    if (!y.same_shape(g)) throw_shape_error("row_softmax_backward", y, g);
    Matrix out(y.rows, y.cols);
    for (int i = 0; i < y.rows; ++i) {
        double gy = 0.0;
        for (int j = 0; j < y.cols; ++j) gy += g(i, j) * y(i, j);
        for (int j = 0; j < y.cols; ++j) out(i, j) = y(i, j) * (g(i, j) - gy);
    }
    return out;
}

Matrix relu(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& g) {
    if (!x.same_shape(g)) throw_shape_error("relu_backward", x, g);
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i)
        out.values[i] = x.values[i] > 0.0 ? g.values[i] : 0.0;
    return out;
}

Matrix elementwise_mul(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw_shape_error("elementwise_mul", a, b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= b.values[i];
    return out;
}

std::pair<Matrix, Matrix> elementwise_mul_backward(const Matrix& a, const Matrix& b,
                                                   const Matrix& g) {
    if (!a.same_shape(b) || !a.same_shape(g)) throw_shape_error("elementwise_mul_backward", a, g);
    return {elementwise_mul(g, b), elementwise_mul(g, a)};
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache* cache) {
    if (gain.rows != 1 || gain.cols != x.cols) throw_shape_error("layer_norm gain", x, gain);
    if (bias.rows != 1 || bias.cols != x.cols) throw_shape_error("layer_norm bias", x, bias);
    Matrix normalized(x.rows, x.cols);
    std::vector<double> inv_std(x.rows);
    const double inv_cols = 1.0 / x.cols;
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += x(i, j);
        mean *= inv_cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double d = x(i, j) - mean;
            var += d * d;
        }
        var *= inv_cols;
        const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        inv_std[i] = is;
        for (int j = 0; j < x.cols; ++j) normalized(i, j) = (x(i, j) - mean) * is;
    }
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(i, j) = normalized(i, j) * gain(0, j) + bias(0, j);
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

void layer_norm_backward(const LayerNormCache& cache, const Matrix& gain, const Matrix& g,
                         Matrix* grad_x, Matrix* grad_gain, Matrix* grad_bias) {
    const Matrix& xhat = cache.normalized;
    if (!xhat.same_shape(g)) throw_shape_error("layer_norm_backward", xhat, g);
    const int rows = xhat.rows, cols = xhat.cols;
    if (grad_gain) {
        Matrix gg(1, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) gg(0, j) += g(i, j) * xhat(i, j);
        *grad_gain = std::move(gg);
    }
    if (grad_bias) *grad_bias = column_sums(g);
    if (grad_x) {
        Matrix gx(rows, cols);
        const double inv_cols = 1.0 / cols;
        for (int i = 0; i < rows; ++i) {
            // gy = dL/d xhat for this row
            double mean_gy = 0.0, mean_gy_xhat = 0.0;
            for (int j = 0; j < cols; ++j) {
                const double gy = g(i, j) * gain(0, j);
                mean_gy += gy;
                mean_gy_xhat += gy * xhat(i, j);
            }
            mean_gy *= inv_cols;
            mean_gy_xhat *= inv_cols;
            for (int j = 0; j < cols; ++j) {
                const double gy = g(i, j) * gain(0, j);
                gx(i, j) = cache.inv_std[i] * (gy - mean_gy - xhat(i, j) * mean_gy_xhat);
            }
        }
        *grad_x = std::move(gx);
    }
}

Matrix mean_pool_rows(const Matrix& x) {
    Matrix out(1, x.cols);
    const double inv = 1.0 / x.rows;
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out(0, j) += x(i, j) * inv;
    return out;
}

Matrix mean_pool_rows_backward(int rows, const Matrix& g) {
    if (g.rows != 1) throw std::invalid_argument("mean_pool_rows_backward: g must be 1 x cols");
    Matrix out(rows, g.cols);
    const double inv = 1.0 / rows;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < g.cols; ++j) out(i, j) = g(0, j) * inv;
    return out;
}

double softmax_cross_entropy(const Matrix& logits, int label, Matrix* probs) {
    if (logits.rows != 1) throw std::invalid_argument("softmax_cross_entropy: logits must be 1 x C");
    const int c = logits.cols;
    if (label < 0 || label >= c) {
        throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range [0, " + std::to_string(c) + ")");
    }
    double mx = logits(0, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits(0, j));
    double total = 0.0;
    for (int j = 0; j < c; ++j) total += std::exp(logits(0, j) - mx);
    const double log_z = std::log(total) + mx;
    if (probs) {
        Matrix p(1, c);
        for (int j = 0; j < c; ++j) p(0, j) = std::exp(logits(0, j) - log_z);
        *probs = std::move(p);
    }
    return log_z - logits(0, label);
}

Matrix softmax_cross_entropy_backward(const Matrix& probs, int label) {
    if (probs.rows != 1) throw std::invalid_argument("softmax_cross_entropy_backward: probs must be 1 x C");
    if (label < 0 || label >= probs.cols) {
        throw std::out_of_range("softmax_cross_entropy_backward: label out of range");
    }
    Matrix g = probs;
    g(0, label) -= 1.0;
    return g;
}

}  // namespace datf
