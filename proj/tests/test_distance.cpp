#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "datf/distance.hpp"
#include "datf/grad_check.hpp"
#include "datf/rng.hpp"

using namespace datf;

namespace {

const std::vector<MappingKind> kAllKinds = {
    MappingKind::parse("learnable_sigmoid"), MappingKind::parse("clip"),
    MappingKind::parse("linear"), MappingKind::parse("exponent"), MappingKind::parse("sigmoid")};

}  // namespace

TEST_CASE("build_distance_matrix definition") {
    CHECK(build_distance_matrix(1).entries(0, 0) == 0.0);

    const DistanceMatrix r3 = build_distance_matrix(3);
    const Matrix expected = Matrix::from_rows({{0, 1, 2}, {1, 0, 1}, {2, 1, 0}});
    CHECK(max_abs_diff(r3.entries, expected) == 0.0);

    const DistanceMatrix r64 = build_distance_matrix(64);
    double max_entry = 0.0;
    for (int i = 0; i < 64; ++i) {
        CHECK(r64.entries(i, i) == 0.0);
        for (int j = 0; j < 64; ++j) {
            CHECK(r64.entries(i, j) == r64.entries(j, i));
            max_entry = std::max(max_entry, r64.entries(i, j));
        }
    }
    CHECK(max_entry == 63.0);

    CHECK_THROWS_AS(build_distance_matrix(0), std::invalid_argument);
}

TEST_CASE("cached_distance_matrix returns the built matrix") {
    const auto cached = cached_distance_matrix(5);
    CHECK(max_abs_diff(cached->entries, build_distance_matrix(5).entries) == 0.0);
    CHECK(cached_distance_matrix(5).get() == cached.get());
}

TEST_CASE("weight_distances") {
    const DistanceMatrix r = build_distance_matrix(4);
    CHECK(sum(weight_distances(r, 0.0)) == 0.0);

    const Matrix w_neg = weight_distances(build_distance_matrix(2), -1.0);
    CHECK(max_abs_diff(w_neg, Matrix::from_rows({{0, -1}, {-1, 0}})) == 0.0);

    // d(output)/dw against finite differences
    const auto result = gradient_check(
        [&r](const std::vector<Matrix>& in) { return weight_distances(r, in[0](0, 0)); },
        [&r](const std::vector<Matrix>& in, const Matrix& g) {
            (void)in;
            Matrix dw(1, 1);
            dw(0, 0) = weight_distances_backward_w(r, g);
            return std::vector<Matrix>{dw};
        },
        {Matrix::filled(1, 1, 0.7)}, 101);
    CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("learnable sigmoid satisfies all five requirements") {
    // (1) f(0; v) = 1: zero distances leave attention untouched.
    for (double v : {-10.0, -5.0, -3.0, -1.0, 0.0, 1.0, 3.0, 5.0, 10.0}) {
        CHECK(learnable_sigmoid_scalar(0.0, v) == 1.0);  // exact by construction
    }
    // (2) limit 0 at -inf, (3) limit 1 + e^v at +inf.
    for (double v = -5.0; v <= 5.0; v += 1.0) {
        CHECK(std::fabs(learnable_sigmoid_scalar(-50.0, v)) < 1e-9);
        CHECK(std::fabs(learnable_sigmoid_scalar(50.0, v) - (1.0 + std::exp(v))) < 1e-9);
    }
    // (4) tunable scale: the upper bound grows strictly with v.
    double prev_bound = 0.0;
    for (double v = -6.0; v <= 6.0; v += 0.5) {
        const double bound = learnable_sigmoid_scalar(50.0, v);
        CHECK(bound > prev_bound);
        prev_bound = bound;
    }
    // (5) strict monotonicity in x.
    for (double v : {-2.0, 0.0, 3.0}) {
        double prev = learnable_sigmoid_scalar(-20.0, v);
        for (double x = -19.9; x <= 20.0; x += 0.1) {
            const double cur = learnable_sigmoid_scalar(x, v);
            CHECK(cur > prev);
            prev = cur;
        }
    }
}

TEST_CASE("learnable sigmoid reference values") {
    // v = 0 is the standard sigmoid scaled by 2.
    for (double x = -30.0; x <= 30.0; x += 0.377) {
        CHECK(std::fabs(learnable_sigmoid_scalar(x, 0.0) - 2.0 * standard_sigmoid_scalar(x)) <
              1e-12);
    }
    CHECK(learnable_sigmoid_scalar(0.0, 0.0) == 1.0);
    CHECK(learnable_sigmoid_scalar(1.0, 1.0) ==
          doctest::Approx(1.8591409142295226).epsilon(1e-14));
    CHECK(learnable_sigmoid_scalar(-30.0, 0.0) < 1e-12);
    CHECK(std::fabs(learnable_sigmoid_scalar(30.0, 1.0) - 3.718281828459045) < 1e-12);
    // No overflow when v - x is large; the stable branch still resolves the
    // subnormal-scale true value instead of rounding through infinity.
    const double tiny = learnable_sigmoid_scalar(-650.0, 0.0);
    CHECK(tiny > 0.0);
    CHECK(tiny < 1e-250);
    CHECK(std::isfinite(learnable_sigmoid_scalar(650.0, 2.0)));
}

TEST_CASE("map_learnable_sigmoid backward matches finite differences") {
    const Matrix x = random_matrix(4, 4, 111, -6.0, 6.0);
    for (double v : {-2.0, 0.0, 1.5}) {
        const auto result = gradient_check(
            [](const std::vector<Matrix>& in) {
                return map_learnable_sigmoid(in[0], in[1](0, 0));
            },
            [](const std::vector<Matrix>& in, const Matrix& g) {
                Matrix gx;
                double gv = 0.0;
                map_learnable_sigmoid_backward(in[0], in[1](0, 0), g, &gx, &gv);
                return std::vector<Matrix>{gx, Matrix::filled(1, 1, gv)};
            },
            {x, Matrix::filled(1, 1, v)}, 112);
        CHECK(result.max_rel_err < 1e-6);
    }
}

TEST_CASE("map_clip") {
    const Matrix clipped = map_clip(Matrix::from_rows({{0, 5}}), 3.0);
    CHECK(max_abs_diff(clipped, Matrix::from_rows({{0, 3}})) == 0.0);

    const Matrix below = random_matrix(3, 3, 121, -2.0, 2.0);
    CHECK(max_abs_diff(map_clip(below, 10.0), below) == 0.0);

    CHECK_THROWS_AS(map_clip(Matrix(1, 1), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(map_clip(Matrix(1, 1), -1.0), std::invalid_argument);

    const double t = 1.0;
    Matrix x = random_matrix(4, 4, 122, -3.0, 3.0);
    const auto result = gradient_check(
        [t](const std::vector<Matrix>& in) { return map_clip(in[0], t); },
        [t](const std::vector<Matrix>& in, const Matrix& g) {
            return std::vector<Matrix>{map_clip_backward(in[0], t, g)};
        },
        {x}, 123, [&x, t](std::size_t, std::size_t e) { return std::fabs(x.values[e] - t) < 1e-3; });
    CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("map_linear") {
    const Matrix x = random_matrix(3, 3, 131);
    CHECK(max_abs_diff(map_linear(x, 1.0, 0.0), x) == 0.0);
    CHECK(max_abs_diff(map_linear(x, 0.0, 1.0), Matrix::ones(3, 3)) == 0.0);

    const auto result = gradient_check(
        [](const std::vector<Matrix>& in) {
            return map_linear(in[0], in[1](0, 0), in[2](0, 0));
        },
        [](const std::vector<Matrix>& in, const Matrix& g) {
            Matrix gx;
            double gk = 0.0, gb = 0.0;
            map_linear_backward(in[0], in[1](0, 0), g, &gx, &gk, &gb);
            return std::vector<Matrix>{gx, Matrix::filled(1, 1, gk), Matrix::filled(1, 1, gb)};
        },
        {x, Matrix::filled(1, 1, 1.7), Matrix::filled(1, 1, -0.3)}, 132);
    CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("map_exponent") {
    CHECK(map_exponent(Matrix(1, 1))(0, 0) == 1.0);
    CHECK(map_exponent(Matrix::filled(1, 1, std::log(2.0)))(0, 0) == doctest::Approx(2.0));

    const std::uint64_t clamps_before = map_exponent_clamp_count();
    const Matrix huge = map_exponent(Matrix::filled(1, 2, 1000.0));
    CHECK(huge(0, 0) == 1e300);
    CHECK(huge.all_finite());
    CHECK(map_exponent_clamp_count() == clamps_before + 2);
    // Clamped region is constant, so its gradient is zero.
    CHECK(sum(map_exponent_backward(Matrix::filled(1, 2, 1000.0), Matrix::ones(1, 2))) == 0.0);

    const auto result = gradient_check(
        [](const std::vector<Matrix>& in) { return map_exponent(in[0]); },
        [](const std::vector<Matrix>& in, const Matrix& g) {
            return std::vector<Matrix>{map_exponent_backward(in[0], g)};
        },
        {random_matrix(3, 3, 141, -2.0, 2.0)}, 142);
    CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("map_standard_sigmoid") {
    CHECK(map_standard_sigmoid(Matrix(1, 1))(0, 0) == 0.5);
    CHECK(map_standard_sigmoid(Matrix::filled(1, 1, 40.0))(0, 0) == doctest::Approx(1.0));
    CHECK(map_standard_sigmoid(Matrix::filled(1, 1, -40.0))(0, 0) == doctest::Approx(0.0));

    const auto result = gradient_check(
        [](const std::vector<Matrix>& in) { return map_standard_sigmoid(in[0]); },
        [](const std::vector<Matrix>& in, const Matrix& g) {
            return std::vector<Matrix>{map_standard_sigmoid_backward(in[0], g)};
        },
        {random_matrix(3, 3, 151, -4.0, 4.0)}, 152);
    CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("rescaled_coefficients neutral at w = 0") {
    const DistanceMatrix r = build_distance_matrix(8);
    for (double v : {-3.0, 0.0, 5.0}) {
        HeadDistanceParams p;
        p.w = 0.0;
        p.v = v;
        const Matrix coeffs = rescaled_coefficients(r, p, MappingKind{});
        for (double e : coeffs.values) CHECK(e == 1.0);  // bitwise ones
    }
}

TEST_CASE("rescaled_coefficients matches the elementwise route bitwise") {
    const DistanceMatrix r = build_distance_matrix(7);
    for (const MappingKind& kind : kAllKinds) {
        for (double w : {-1.3, -0.2, 0.0, 0.4, 1.1}) {
            HeadDistanceParams p;
            p.w = w;
            p.v = 0.8;
            p.linear_k = 1.2;
            p.linear_b = -0.1;
            const Matrix fast = rescaled_coefficients(r, p, kind);
            const Matrix slow = apply_mapping(weight_distances(r, w), p, kind);
            CHECK(max_abs_diff(fast, slow) == 0.0);
        }
    }
}

TEST_CASE("rescaled_coefficients monotone toward its limits") {
    const int n = 64;
    const DistanceMatrix r = build_distance_matrix(n);
    HeadDistanceParams p;
    p.w = 1.0;
    p.v = 1.0;
    const Matrix up = rescaled_coefficients(r, p, MappingKind{});
    // Strict until the curve saturates at double precision, never decreasing.
    for (int d = 1; d < 32; ++d) CHECK(up(0, d) > up(0, d - 1));
    for (int d = 32; d < n; ++d) CHECK(up(0, d) >= up(0, d - 1));
    CHECK(std::fabs(up(0, n - 1) - (1.0 + std::exp(1.0))) < 1e-12);

    p.w = -1.0;
    const Matrix down = rescaled_coefficients(r, p, MappingKind{});
    for (int d = 1; d < n; ++d) CHECK(down(0, d) < down(0, d - 1));
    CHECK(down(0, n - 1) < 1e-9);
}

TEST_CASE("rescaled_coefficients symmetric with constant f(0) diagonal for every kind") {
    const DistanceMatrix r = build_distance_matrix(6);
    for (const MappingKind& kind : kAllKinds) {
        for (double w : {-0.8, 0.5}) {
            HeadDistanceParams p;
            p.w = w;
            p.v = -0.4;
            const Matrix coeffs = rescaled_coefficients(r, p, kind);
            const Matrix f0 = apply_mapping(Matrix(1, 1), p, kind);
            for (int i = 0; i < 6; ++i) {
                CHECK(coeffs(i, i) == f0(0, 0));
                for (int j = 0; j < 6; ++j) CHECK(coeffs(i, j) == coeffs(j, i));
            }
            // w > 0: non-decreasing in distance; w < 0: non-increasing.
            for (int d = 1; d < 6; ++d) {
                if (w > 0) CHECK(coeffs(0, d) >= coeffs(0, d - 1));
                else CHECK(coeffs(0, d) <= coeffs(0, d - 1));
            }
        }
    }
}

TEST_CASE("rescaled_coefficients gradients match finite differences, n = 6") {
    const DistanceMatrix r = build_distance_matrix(6);
    for (const MappingKind& kind : kAllKinds) {
        const auto result = gradient_check(
            [&](const std::vector<Matrix>& in) {
                HeadDistanceParams p;
                p.w = in[0](0, 0);
                p.v = in[1](0, 0);
                p.linear_k = in[2](0, 0);
                p.linear_b = in[3](0, 0);
                return rescaled_coefficients(r, p, kind);
            },
            [&](const std::vector<Matrix>& in, const Matrix& g) {
                HeadDistanceParams p;
                p.w = in[0](0, 0);
                p.v = in[1](0, 0);
                p.linear_k = in[2](0, 0);
                p.linear_b = in[3](0, 0);
                const DistanceParamGrads dg = rescaled_coefficients_backward(r, p, kind, g);
                return std::vector<Matrix>{
                    Matrix::filled(1, 1, dg.w), Matrix::filled(1, 1, dg.v),
                    Matrix::filled(1, 1, dg.linear_k), Matrix::filled(1, 1, dg.linear_b)};
            },
            {Matrix::filled(1, 1, 0.37), Matrix::filled(1, 1, 0.9), Matrix::filled(1, 1, 1.1),
             Matrix::filled(1, 1, -0.2)},
            161);
        INFO("mapping kind: ", kind.name());
        CHECK(result.max_rel_err < 1e-6);
    }
}

TEST_CASE("MappingKind parse round-trips and rejects unknowns") {
    for (const char* name :
         {"learnable_sigmoid", "clip", "linear", "exponent", "sigmoid"}) {
        CHECK(MappingKind::parse(name).name() == name);
    }
    CHECK_THROWS_AS(MappingKind::parse("softplus"), std::invalid_argument);
}
