#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "datf/matrix.hpp"

namespace datf {

// Central finite-difference verification of an analytic backward pass.
//
// The operation under test maps a vector of input matrices to one output
// matrix; its backward maps (inputs, upstream gradient) to one gradient per
// input, each with the input's shape. The check projects the output onto a
// random weight matrix S, so the scalar loss sum(S .* f(inputs)) has analytic
// gradient backward(inputs, S) by linearity of the backward in the upstream
// gradient.

using MultiForward = std::function<Matrix(const std::vector<Matrix>&)>;
using MultiBackward =
    std::function<std::vector<Matrix>(const std::vector<Matrix>&, const Matrix&)>;

// Marks coordinates whose finite difference is unreliable (kinks such as
// relu at 0 or clip at the threshold); they are skipped and counted.
using UnreliablePred = std::function<bool(std::size_t input_idx, std::size_t elem_idx)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    bool pass(double tolerance) const { return checked > 0 && max_rel_err < tolerance; }
};

inline constexpr double kGradCheckStep = 1e-5;

// Central differences on an O(1) output carry rounding noise of about
// 1e-16 / (2 * step) ~ 1e-11 per evaluation chain. A relative comparison at
// 1e-4 is therefore meaningful only for gradients above ~1e-7; coordinates
// where analytic and numeric magnitudes both sit below this floor (unused
// embedding rows, fully gated attention entries, dead relu units) are
// excluded instead of being compared against noise.
inline constexpr double kGradCheckZeroFloor = 1e-6;

GradCheckResult gradient_check(const MultiForward& forward, const MultiBackward& backward,
                               std::vector<Matrix> inputs, std::uint64_t seed,
                               const UnreliablePred& unreliable = nullptr,
                               double step = kGradCheckStep);

// Named view over a flat run of trainable scalars (a matrix or one scalar).
// Parameter registries hand these out in a fixed, documented order.
struct ParamRef {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
    int rows = 0, cols = 0;
};

void zero_param_refs(const std::vector<ParamRef>& refs);

// Same check for code organized around parameter structs instead of input
// lists: `forward` evaluates with the current values, `run_backward` fills
// the gradient views for a given upstream gradient (after zeroing them).
// run_backward must write through the registered grad pointers, not replace
// the underlying storage.
GradCheckResult gradient_check_refs(const std::function<Matrix()>& forward,
                                    const std::function<void(const Matrix&)>& run_backward,
                                    const std::vector<ParamRef>& values,
                                    const std::vector<ParamRef>& grads, std::uint64_t seed,
                                    double step = kGradCheckStep);

// Relative error convention shared by every gradient check in the project.
double relative_error(double analytic, double numeric);

// Random matrix with entries uniform in [lo, hi] (deterministic per seed).
Matrix random_matrix(int rows, int cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace datf
