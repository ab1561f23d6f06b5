#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "datf/matrix.hpp"

namespace datf {

// N x N matrix of absolute token-index offsets |i - j|, stored as exact
// integer-valued doubles. Symmetric with zero diagonal by construction.
struct DistanceMatrix {
    int n = 0;
    Matrix entries;
};

DistanceMatrix build_distance_matrix(int n);

// Shared, mutex-guarded cache keyed by sequence length. The entries depend
// only on n, so each length is built once per process.
std::shared_ptr<const DistanceMatrix> cached_distance_matrix(int n);

// Per-head scalars controlling the distance mechanism. `w` weights the raw
// distances (positive -> the head prefers long range, negative -> local);
// `v` shapes the learnable sigmoid (upper bound 1 + e^v and steepness).
// `linear_k` / `linear_b` are the per-head trainables of the linear mapping
// and are ignored by the other mapping kinds.
struct HeadDistanceParams {
    double w = 0.0;
    double v = 0.0;
    double linear_k = 1.0;
    double linear_b = 0.0;
};

struct MappingKind {
    enum class Type { LearnableSigmoid, Clip, Linear, Exponent, StandardSigmoid };

    Type type = Type::LearnableSigmoid;
    double clip_threshold = 10.0;  // fixed, not trained
    double linear_k = 1.0;         // initial per-head values for the linear mapping
    double linear_b = 0.0;

    // Config strings: "learnable_sigmoid" | "clip" | "linear" | "exponent" | "sigmoid".
    static MappingKind parse(const std::string& name);
    std::string name() const;
};

// ---- scalar kernels ----
// The matrix ops below and the per-distance fast path both call these, so the
// two routes produce bitwise-identical values for identical scalar inputs.

// f(x; v) = (1 + e^v) / (1 + e^(v - x)), evaluated without intermediate
// overflow for |v - x| up to ~700 and exactly 1.0 at x = 0 for any v.
double learnable_sigmoid_scalar(double x, double v);
void learnable_sigmoid_scalar_grad(double x, double v, double* df_dx, double* df_dv);
double standard_sigmoid_scalar(double x);

// ---- mapping operations (elementwise over a matrix) ----

Matrix map_learnable_sigmoid(const Matrix& x, double v);
void map_learnable_sigmoid_backward(const Matrix& x, double v, const Matrix& g, Matrix* grad_x,
                                    double* grad_v);

Matrix map_clip(const Matrix& x, double threshold);
Matrix map_clip_backward(const Matrix& x, double threshold, const Matrix& g);

Matrix map_linear(const Matrix& x, double k, double b);
void map_linear_backward(const Matrix& x, double k, const Matrix& g, Matrix* grad_x,
                         double* grad_k, double* grad_b);

// exp(x) clamped at 1e300; clamp events are counted and reported on stderr
// once per call (exponent explosion is expected behaviour for this mapping).
Matrix map_exponent(const Matrix& x);
Matrix map_exponent_backward(const Matrix& x, const Matrix& g);
std::uint64_t map_exponent_clamp_count();

Matrix map_standard_sigmoid(const Matrix& x);
Matrix map_standard_sigmoid_backward(const Matrix& x, const Matrix& g);

// ---- weighted distances and re-scaled coefficients ----

// w * R. The distance matrix itself is constant; only w is trainable.
Matrix weight_distances(const DistanceMatrix& r, double w);
double weight_distances_backward_w(const DistanceMatrix& r, const Matrix& g);

struct DistanceParamGrads {
    double w = 0.0;
    double v = 0.0;
    double linear_k = 0.0;
    double linear_b = 0.0;
};

// f(w * R) under the chosen mapping. R takes only n distinct values, so the
// mapping is evaluated once per distance and filled by lookup; the result is
// bitwise identical to mapping weight_distances(r, w) elementwise.
Matrix rescaled_coefficients(const DistanceMatrix& r, const HeadDistanceParams& params,
                             const MappingKind& kind);
DistanceParamGrads rescaled_coefficients_backward(const DistanceMatrix& r,
                                                  const HeadDistanceParams& params,
                                                  const MappingKind& kind, const Matrix& g);

// Generic elementwise dispatch used by tests and the gradcheck suite.
Matrix apply_mapping(const Matrix& x, const HeadDistanceParams& params, const MappingKind& kind);

}  // namespace datf
