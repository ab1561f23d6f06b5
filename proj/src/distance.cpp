#include "datf/distance.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <map>
#include <mutex>
#include <stdexcept>

namespace datf {

DistanceMatrix build_distance_matrix(int n) {
    if (n < 1) throw std::invalid_argument("build_distance_matrix: n must be >= 1");
    DistanceMatrix r;
    r.n = n;
    r.entries = Matrix(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) r.entries(i, j) = static_cast<double>(i > j ? i - j : j - i);
    return r;
}

std::shared_ptr<const DistanceMatrix> cached_distance_matrix(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const DistanceMatrix>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) {
        it = cache.emplace(n, std::make_shared<const DistanceMatrix>(build_distance_matrix(n)))
                 .first;
    }
    return it->second;
}

MappingKind MappingKind::parse(const std::string& name) {
    MappingKind kind;
    if (name == "learnable_sigmoid") kind.type = Type::LearnableSigmoid;
    else if (name == "clip") kind.type = Type::Clip;
    else if (name == "linear") kind.type = Type::Linear;
    else if (name == "exponent") kind.type = Type::Exponent;
    else if (name == "sigmoid") kind.type = Type::StandardSigmoid;
    else
        throw std::invalid_argument(
            "unknown mapping '" + name +
            "' (expected learnable_sigmoid|clip|linear|exponent|sigmoid)");
    return kind;
}

std::string MappingKind::name() const {
    switch (type) {
        case Type::LearnableSigmoid: return "learnable_sigmoid";
        case Type::Clip: return "clip";
        case Type::Linear: return "linear";
        case Type::Exponent: return "exponent";
        case Type::StandardSigmoid: return "sigmoid";
    }
    return "?";
}

double learnable_sigmoid_scalar(double x, double v) {
    // Two branches so no exp argument is large and positive when |v - x| is
    // big, and so x = 0 yields numerator == denominator, hence exactly 1.
    const double t = v - x;
    if (t <= 0.0) {
        return (1.0 + std::exp(v)) / (1.0 + std::exp(t));
    }
    const double et = std::exp(-t);
    return (et + std::exp(x)) / (et + 1.0);
}

void learnable_sigmoid_scalar_grad(double x, double v, double* df_dx, double* df_dv) {
    // f = (1 + e^v) * s where s = sigmoid(x - v).
    // df/dx = (1 + e^v) * s * (1 - s);  df/dv = e^v * s - df/dx.
    const double t = x - v;
    double s;
    if (t >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-t));
    } else {
        const double e = std::exp(t);
        s = e / (1.0 + e);
    }
    const double ev = std::exp(v);
    const double dfdx = (1.0 + ev) * s * (1.0 - s);
    if (df_dx) *df_dx = dfdx;
    if (df_dv) *df_dv = ev * s - dfdx;
}

double standard_sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix map_learnable_sigmoid(const Matrix& x, double v) {
    Matrix out = x;
    for (double& e : out.values) e = learnable_sigmoid_scalar(e, v);
    return out;
}

void map_learnable_sigmoid_backward(const Matrix& x, double v, const Matrix& g, Matrix* grad_x,
                                    double* grad_v) {
    if (!x.same_shape(g)) throw_shape_error("map_learnable_sigmoid_backward", x, g);
    Matrix gx(x.rows, x.cols);
    double gv = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dfdx, dfdv;
        learnable_sigmoid_scalar_grad(x.values[i], v, &dfdx, &dfdv);
        gx.values[i] = g.values[i] * dfdx;
        gv += g.values[i] * dfdv;
    }
    if (grad_x) *grad_x = std::move(gx);
    if (grad_v) *grad_v = gv;
}

Matrix map_clip(const Matrix& x, double threshold) {
    if (threshold <= 0.0) throw std::invalid_argument("map_clip: threshold must be > 0");
    Matrix out = x;
    for (double& e : out.values) e = e < threshold ? e : threshold;
    return out;
}

Matrix map_clip_backward(const Matrix& x, double threshold, const Matrix& g) {
    if (threshold <= 0.0) throw std::invalid_argument("map_clip_backward: threshold must be > 0");
    if (!x.same_shape(g)) throw_shape_error("map_clip_backward", x, g);
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i)
        out.values[i] = x.values[i] < threshold ? g.values[i] : 0.0;
    return out;
}

Matrix map_linear(const Matrix& x, double k, double b) {
    Matrix out = x;
    for (double& e : out.values) e = k * e + b;
    return out;
}

void map_linear_backward(const Matrix& x, double k, const Matrix& g, Matrix* grad_x,
                         double* grad_k, double* grad_b) {
    if (!x.same_shape(g)) throw_shape_error("map_linear_backward", x, g);
    if (grad_k) *grad_k = dot_all(g, x);
    if (grad_b) *grad_b = sum(g);
    if (grad_x) *grad_x = scale(g, k);
}

namespace {
constexpr double kExpClampValue = 1e300;
// log(1e300)
constexpr double kExpClampArg = 690.77552789821370520539283;
std::atomic<std::uint64_t> g_exp_clamp_count{0};
}  // namespace

Matrix map_exponent(const Matrix& x) {
    Matrix out = x;
    std::uint64_t clamped = 0;
    for (double& e : out.values) {
        if (e > kExpClampArg) {
            e = kExpClampValue;
            ++clamped;
        } else {
            e = std::exp(e);
        }
    }
    if (clamped > 0) {
        g_exp_clamp_count.fetch_add(clamped, std::memory_order_relaxed);
        std::cerr << "map_exponent: clamped " << clamped << " entries at 1e300\n";
    }
    return out;
}

Matrix map_exponent_backward(const Matrix& x, const Matrix& g) {
    if (!x.same_shape(g)) throw_shape_error("map_exponent_backward", x, g);
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.values[i] = x.values[i] > kExpClampArg ? 0.0 : g.values[i] * std::exp(x.values[i]);
    }
    return out;
}

std::uint64_t map_exponent_clamp_count() {
    return g_exp_clamp_count.load(std::memory_order_relaxed);
}

Matrix map_standard_sigmoid(const Matrix& x) {
    Matrix out = x;
    for (double& e : out.values) e = standard_sigmoid_scalar(e);
    return out;
}

Matrix map_standard_sigmoid_backward(const Matrix& x, const Matrix& g) {
    if (!x.same_shape(g)) throw_shape_error("map_standard_sigmoid_backward", x, g);
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = standard_sigmoid_scalar(x.values[i]);
        out.values[i] = g.values[i] * s * (1.0 - s);
    }
    return out;
}

Matrix weight_distances(const DistanceMatrix& r, double w) { return scale(r.entries, w); }

double weight_distances_backward_w(const DistanceMatrix& r, const Matrix& g) {
    return dot_all(g, r.entries);
}

namespace {

double map_scalar(double x, const HeadDistanceParams& params, const MappingKind& kind) {
    switch (kind.type) {
        case MappingKind::Type::LearnableSigmoid: return learnable_sigmoid_scalar(x, params.v);
        case MappingKind::Type::Clip: return x < kind.clip_threshold ? x : kind.clip_threshold;
        case MappingKind::Type::Linear: return params.linear_k * x + params.linear_b;
        case MappingKind::Type::Exponent:
            if (x > kExpClampArg) {
                g_exp_clamp_count.fetch_add(1, std::memory_order_relaxed);
                return kExpClampValue;
            }
            return std::exp(x);
        case MappingKind::Type::StandardSigmoid: return standard_sigmoid_scalar(x);
    }
    return 0.0;
}

// df/dx plus gradients for whichever mapping parameters are trainable.
void map_scalar_grad(double x, const HeadDistanceParams& params, const MappingKind& kind,
                     double* df_dx, double* df_dv, double* df_dk, double* df_db) {
    *df_dx = 0.0;
    *df_dv = 0.0;
    *df_dk = 0.0;
    *df_db = 0.0;
    switch (kind.type) {
        case MappingKind::Type::LearnableSigmoid:
            learnable_sigmoid_scalar_grad(x, params.v, df_dx, df_dv);
            return;
        case MappingKind::Type::Clip:
            *df_dx = x < kind.clip_threshold ? 1.0 : 0.0;
            return;
        case MappingKind::Type::Linear:
            *df_dx = params.linear_k;
            *df_dk = x;
            *df_db = 1.0;
            return;
        case MappingKind::Type::Exponent:
            *df_dx = x > kExpClampArg ? 0.0 : std::exp(x);
            return;
        case MappingKind::Type::StandardSigmoid: {
            const double s = standard_sigmoid_scalar(x);
            *df_dx = s * (1.0 - s);
            return;
        }
    }
}

}  // namespace

Matrix apply_mapping(const Matrix& x, const HeadDistanceParams& params, const MappingKind& kind) {
    Matrix out = x;
    for (double& e : out.values) e = map_scalar(e, params, kind);
    return out;
}

Matrix rescaled_coefficients(const DistanceMatrix& r, const HeadDistanceParams& params,
                             const MappingKind& kind) {
    const int n = r.n;
    std::vector<double> by_distance(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) {
        by_distance[d] = map_scalar(params.w * static_cast<double>(d), params, kind);
    }
    Matrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = by_distance[static_cast<std::size_t>(i > j ? i - j : j - i)];
    return out;
}

DistanceParamGrads rescaled_coefficients_backward(const DistanceMatrix& r,
                                                  const HeadDistanceParams& params,
                                                  const MappingKind& kind, const Matrix& g) {
    const int n = r.n;
    if (g.rows != n || g.cols != n) throw_shape_error("rescaled_coefficients_backward", r.entries, g);
    // All entries at the same |i - j| share one scalar input, so bucket the
    // upstream gradient by distance before applying the chain rule.
    std::vector<double> bucket(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) bucket[static_cast<std::size_t>(i > j ? i - j : j - i)] += g(i, j);

    DistanceParamGrads grads;
    for (int d = 0; d < n; ++d) {
        const double s = bucket[d];
        if (s == 0.0) continue;
        const double x = params.w * static_cast<double>(d);
        double dfdx, dfdv, dfdk, dfdb;
        map_scalar_grad(x, params, kind, &dfdx, &dfdv, &dfdk, &dfdb);
        grads.w += s * dfdx * static_cast<double>(d);
        grads.v += s * dfdv;
        grads.linear_k += s * dfdk;
        grads.linear_b += s * dfdb;
    }
    return grads;
}

}  // namespace datf
