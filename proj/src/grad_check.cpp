#include "datf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "datf/rng.hpp"

namespace datf {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double lo, double hi) {
    rng::Engine eng = rng::derive(seed, 0x9a7f);
    Matrix m(rows, cols);
    for (double& v : m.values) v = rng::uniform(eng, lo, hi);
    return m;
}

GradCheckResult gradient_check(const MultiForward& forward, const MultiBackward& backward,
                               std::vector<Matrix> inputs, std::uint64_t seed,
                               const UnreliablePred& unreliable, double step) {
    const Matrix out = forward(inputs);
    const Matrix weights = random_matrix(out.rows, out.cols, seed);

    const std::vector<Matrix> analytic = backward(inputs, weights);
    if (analytic.size() != inputs.size()) {
        throw std::invalid_argument("gradient_check: backward returned " +
                                    std::to_string(analytic.size()) + " gradients for " +
                                    std::to_string(inputs.size()) + " inputs");
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!analytic[i].same_shape(inputs[i])) {
            throw_shape_error("gradient_check analytic gradient", analytic[i], inputs[i]);
        }
    }

    GradCheckResult result;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            if (unreliable && unreliable(i, j)) {
                ++result.skipped;
                continue;
            }
            const double saved = inputs[i].values[j];
            inputs[i].values[j] = saved + step;
            const double loss_plus = dot_all(weights, forward(inputs));
            inputs[i].values[j] = saved - step;
            const double loss_minus = dot_all(weights, forward(inputs));
            inputs[i].values[j] = saved;
            const double numeric = (loss_plus - loss_minus) / (2.0 * step);
            const double a = analytic[i].values[j];
            if (std::fabs(a) < kGradCheckZeroFloor && std::fabs(numeric) < kGradCheckZeroFloor) {
                ++result.skipped;
                continue;
            }
            result.max_rel_err = std::max(result.max_rel_err, relative_error(a, numeric));
            ++result.checked;
        }
    }
    return result;
}

void zero_param_refs(const std::vector<ParamRef>& refs) {
    for (const ParamRef& ref : refs) std::fill(ref.data, ref.data + ref.size, 0.0);
}

GradCheckResult gradient_check_refs(const std::function<Matrix()>& forward,
                                    const std::function<void(const Matrix&)>& run_backward,
                                    const std::vector<ParamRef>& values,
                                    const std::vector<ParamRef>& grads, std::uint64_t seed,
                                    double step) {
    if (values.size() != grads.size()) {
        throw std::invalid_argument("gradient_check_refs: value/gradient list size mismatch");
    }
    const Matrix out = forward();
    const Matrix weights = random_matrix(out.rows, out.cols, seed);
    run_backward(weights);

    GradCheckResult result;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size != grads[i].size) {
            throw std::invalid_argument("gradient_check_refs: size mismatch for " +
                                        values[i].name);
        }
        for (std::size_t j = 0; j < values[i].size; ++j) {
            const double saved = values[i].data[j];
            values[i].data[j] = saved + step;
            const double loss_plus = dot_all(weights, forward());
            values[i].data[j] = saved - step;
            const double loss_minus = dot_all(weights, forward());
            values[i].data[j] = saved;
            const double numeric = (loss_plus - loss_minus) / (2.0 * step);
            const double a = grads[i].data[j];
            if (std::fabs(a) < kGradCheckZeroFloor && std::fabs(numeric) < kGradCheckZeroFloor) {
                ++result.skipped;
                continue;
            }
            result.max_rel_err = std::max(result.max_rel_err, relative_error(a, numeric));
            ++result.checked;
        }
    }
    return result;
}

}  // namespace datf
