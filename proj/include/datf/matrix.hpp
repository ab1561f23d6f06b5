#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace datf {

// Dense row-major matrix of doubles. The single numeric carrier for
// activations, parameters, distance matrices and gradients.
//
// Values are immutable by convention once an operation has produced them;
// all operations below are pure functions of their inputs.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(int r, int c);

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix ones(int r, int c);
    static Matrix filled(int r, int c, double value);
    static Matrix identity(int n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    double& operator()(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }

    double* data() { return values.data(); }
    const double* data() const { return values.data(); }
    std::size_t size() const { return values.size(); }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
    std::string shape_str() const;
    bool all_finite() const;
};

// Thrown message includes both shapes so mismatches are diagnosable from logs.
[[noreturn]] void throw_shape_error(const char* op, const Matrix& a, const Matrix& b);

// ---- elementwise / structural helpers ----

Matrix transpose(const Matrix& x);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& x, double s);
void scale_inplace(Matrix& x, double s);
void add_inplace(Matrix& dst, const Matrix& src);
void axpy_inplace(Matrix& dst, double alpha, const Matrix& src);  // dst += alpha * src
double sum(const Matrix& x);
double dot_all(const Matrix& a, const Matrix& b);  // sum(a .* b)
double max_abs_diff(const Matrix& a, const Matrix& b);

// Broadcast-add a 1 x cols row vector to every row of x.
Matrix add_row_broadcast(const Matrix& x, const Matrix& row);
// Column sums as a 1 x cols row vector (backward of the broadcast above).
Matrix column_sums(const Matrix& x);

// ---- differentiable operations (forward + explicit backward) ----

// Standard matrix product, BLAS-backed.
Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T and a^T * b without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// Gradients w.r.t. (a, b) given upstream gradient g of a*b.
std::pair<Matrix, Matrix> matmul_backward(const Matrix& a, const Matrix& b, const Matrix& g);

// Row-wise softmax with per-row max subtraction.
Matrix row_softmax(const Matrix& x);
// Backward from the forward *output* y: dx = y .* (g - rowdot(g, y)).
Matrix row_softmax_backward(const Matrix& y, const Matrix& g);

// Elementwise max(0, x). Subgradient at 0 is 0.
Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& g);

Matrix elementwise_mul(const Matrix& a, const Matrix& b);
std::pair<Matrix, Matrix> elementwise_mul_backward(const Matrix& a, const Matrix& b, const Matrix& g);

inline constexpr double kLayerNormEpsilon = 1e-5;

struct LayerNormCache {
    Matrix normalized;            // (x - mean) / sqrt(var + eps), per row
    std::vector<double> inv_std;  // one per row
};

// Per-row standardization followed by affine gain/bias (both 1 x cols).
Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                  LayerNormCache* cache = nullptr);
void layer_norm_backward(const LayerNormCache& cache, const Matrix& gain, const Matrix& g,
                         Matrix* grad_x, Matrix* grad_gain, Matrix* grad_bias);

// 1 x cols row of column means; backward spreads g / rows.
Matrix mean_pool_rows(const Matrix& x);
Matrix mean_pool_rows_backward(int rows, const Matrix& g);

// -log softmax(logits)[label] for a 1 x C logits row. Writes the softmax
// probabilities when probs is non-null (needed for the backward).
double softmax_cross_entropy(const Matrix& logits, int label, Matrix* probs = nullptr);
Matrix softmax_cross_entropy_backward(const Matrix& probs, int label);

}  // namespace datf
