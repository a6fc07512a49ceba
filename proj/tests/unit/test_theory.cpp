#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spft/theory.hpp"

namespace spft {
namespace {

QuadraticModel diag_model(std::vector<double> lambda, std::vector<double> w_star, std::vector<double> w0) {
    return QuadraticModel::make(Matrix::diagonal(lambda), std::move(w_star), std::move(w0));
}

// (H + alpha I) w = H w* + alpha w0, solved without any eigendecomposition.
std::vector<double> direct_solve(const QuadraticModel& m, double alpha, bool sp) {
    Matrix a = m.H;
    for (std::size_t i = 0; i < m.dim(); ++i) a(i, i) += alpha;
    std::vector<double> b = m.H.apply(m.w_star);
    if (sp)
        for (std::size_t i = 0; i < m.dim(); ++i) b[i] += alpha * m.w0[i];
    return solve_linear(a, b);
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

TEST(Theory, TwoDimensionalHandCase) {
    const QuadraticModel m = diag_model({1.0, 3.0}, {2.0, 2.0}, {0.0, 4.0});
    const std::vector<double> w = analytic_sp_minimizer(m, 1.0);
    EXPECT_NEAR(w[0], 1.0, 1e-12);
    EXPECT_NEAR(w[1], 2.5, 1e-12);
    const DescentResult gd = descent_minimizer(m, 1.0, PenaltyKind::L2SP, 3);
    EXPECT_LT(max_abs_diff(gd.w, {1.0, 2.5}), 1e-10);
}

TEST(Theory, MixingCoefficientsByHand) {
    const QuadraticModel m = diag_model({3.0, 1.0, 0.0}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
    const std::vector<Mixing> mix = mixing_coefficients(m, 1.0);
    // eigenvalues are sorted ascending: 0, 1, 3
    ASSERT_EQ(mix.size(), 3u);
    EXPECT_EQ(mix[0].a, 0.0);
    EXPECT_EQ(mix[0].b, 1.0);
    EXPECT_DOUBLE_EQ(mix[1].a, 0.5);
    EXPECT_DOUBLE_EQ(mix[1].b, 0.5);
    EXPECT_DOUBLE_EQ(mix[2].a, 0.75);
    EXPECT_DOUBLE_EQ(mix[2].b, 0.25);
    EXPECT_THROW((void)mixing_coefficients(m, 0.0), std::invalid_argument);
}

TEST(Theory, MixingMatchesMinimizerProjection) {
    // w* = e_i and w0 = 0 put the minimizer's i-th eigen coordinate at a_i
    const QuadraticModel m = random_quadratic_model(6, 11);
    const std::vector<Mixing> mix = mixing_coefficients(m, 0.7);
    for (std::size_t i = 0; i < 6; ++i) {
        std::vector<double> w_star(6);
        for (std::size_t r = 0; r < 6; ++r) w_star[r] = m.Q(r, i);
        const QuadraticModel unit = QuadraticModel::make(m.H, w_star, std::vector<double>(6, 0.0));
        const std::vector<double> proj = m.Q.apply_transpose(direct_solve(unit, 0.7, true));
        EXPECT_NEAR(proj[i], mix[i].a, 1e-9);
    }
}

TEST(Theory, L2RescalingByHand) {
    const QuadraticModel m = diag_model({1.0}, {2.0}, {5.0});
    const RescalingCheck r = l2_rescaling_check(m, 1.0);
    EXPECT_NEAR(std::abs(r.projected[0]), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(r.scales[0], 0.5);
    EXPECT_LT(r.max_residual, 1e-12);

    const QuadraticModel flat = diag_model({0.0, 2.0}, {3.0, 1.0}, {0.0, 0.0});
    const RescalingCheck f = l2_rescaling_check(flat, 0.5);
    EXPECT_EQ(f.scales[0], 0.0);
    EXPECT_NEAR(f.projected[0], 0.0, 1e-12);
    const RescalingCheck small = l2_rescaling_check(m, 1e-12);
    EXPECT_NEAR(small.scales[0], 1.0, 1e-11);
}

TEST(Theory, Limits) {
    const QuadraticModel m = random_quadratic_model(8, 5);
    Matrix h = m.H;
    for (std::size_t i = 0; i < 8; ++i) h(i, i) += 0.5;  // nonsingular
    const QuadraticModel reg = QuadraticModel::make(h, m.w_star, m.w0);
    EXPECT_LT(max_abs_diff(analytic_sp_minimizer(reg, 1e-12), reg.w_star), 1e-8);
    EXPECT_LT(max_abs_diff(analytic_sp_minimizer(reg, 0.0), reg.w_star), 1e-10);
    const std::vector<double> pinned = analytic_sp_minimizer(m, 1e12);
    EXPECT_LT(distance(pinned, m.w0), 1e-8 * std::max(1.0, distance(m.w0, std::vector<double>(8, 0.0))));

    const QuadraticModel singular = diag_model({0.0, 1.0}, {1.0, 1.0}, {0.0, 0.0});
    EXPECT_THROW((void)analytic_sp_minimizer(singular, 0.0), std::domain_error);
    EXPECT_THROW((void)analytic_sp_minimizer(m, -1.0), std::invalid_argument);
}

TEST(Theory, ReferenceAtOptimum) {
    QuadraticModel m = random_quadratic_model(10, 8);
    m = QuadraticModel::make(m.H, m.w_star, m.w_star);
    EXPECT_LT(max_abs_diff(analytic_sp_minimizer(m, 2.0), m.w_star), 1e-10);
    EXPECT_LT(empirical_descent_check(m, 2.0, PenaltyKind::L2SP, 1), 1e-8);
}

TEST(Theory, RandomModelsAgreeWithDirectSolve) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<std::size_t> dim(1, 50);
    std::uniform_real_distribution<double> log_alpha(-1.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const QuadraticModel m = random_quadratic_model(dim(rng), 1000 + static_cast<std::uint64_t>(t));
        const double alpha = std::pow(10.0, log_alpha(rng));
        EXPECT_LT(max_abs_diff(m.Q * Matrix::diagonal(m.lambda) * m.Q.transpose(), m.H), 1e-10);
        EXPECT_LT(max_abs_diff(m.Q.transpose() * m.Q, Matrix::identity(m.dim())), 1e-10);
        const std::vector<double> w = analytic_sp_minimizer(m, alpha);
        EXPECT_LT(stationarity_residual(m, alpha, w, m.w0), 1e-10);
        EXPECT_LT(max_abs_diff(w, direct_solve(m, alpha, true)), 1e-9);
        EXPECT_LT(max_abs_diff(analytic_l2_minimizer(m, alpha), direct_solve(m, alpha, false)), 1e-9);
        for (const Mixing& c : mixing_coefficients(m, alpha)) {
            EXPECT_GE(c.a, 0.0);
            EXPECT_LE(c.b, 1.0);
            EXPECT_NEAR(c.a + c.b, 1.0, 1e-15);
        }
        double previous = INFINITY;
        for (int k = 0; k < 10; ++k) {
            const double d = distance(analytic_sp_minimizer(m, std::pow(10.0, -2.0 + 0.5 * k)), m.w0);
            EXPECT_LE(d, previous + 1e-12);
            previous = d;
        }
    }
}

TEST(Theory, DescentMatchesAnalyticForBothKinds) {
    const QuadraticModel m = random_quadratic_model(20, 3);
    EXPECT_LT(empirical_descent_check(m, 0.5, PenaltyKind::L2SP, 1), 1e-8);
    EXPECT_LT(empirical_descent_check(m, 0.5, PenaltyKind::L2, 2), 1e-8);
    EXPECT_THROW((void)empirical_descent_check(m, 0.5, PenaltyKind::L1SP, 1), std::invalid_argument);
}

TEST(Theory, JacobiOnKnownMatrix) {
    Matrix a(2, 2);
    a(0, 0) = 2.0;
    a(0, 1) = a(1, 0) = 1.0;
    a(1, 1) = 2.0;
    const SymmetricEigen e = jacobi_eigen(a);
    EXPECT_NEAR(e.values[0], 1.0, 1e-14);
    EXPECT_NEAR(e.values[1], 3.0, 1e-14);
    EXPECT_NEAR(std::abs(e.vectors(0, 1)), std::sqrt(0.5), 1e-14);
    Matrix bad(2, 3);
    EXPECT_THROW((void)jacobi_eigen(bad), std::invalid_argument);
    a(0, 1) = 5.0;
    EXPECT_THROW((void)jacobi_eigen(a), std::invalid_argument);
}

TEST(Theory, ModelRejectsIndefiniteHessian) {
    EXPECT_THROW((void)diag_model({1.0, -0.1}, {0.0, 0.0}, {0.0, 0.0}), std::invalid_argument);
    const QuadraticModel clamped = diag_model({1.0, -1e-13}, {0.0, 0.0}, {0.0, 0.0});
    EXPECT_EQ(clamped.lambda[0], 0.0);
    EXPECT_THROW((void)diag_model({1.0}, {0.0, 0.0}, {0.0}), std::invalid_argument);
}

TEST(Theory, TrialsAreDeterministicAndPass) {
    const std::vector<TheoryTrial> a = run_theory_trials(100, 50, 7, 1);
    const std::vector<TheoryTrial> b = run_theory_trials(100, 50, 7, 3);
    ASSERT_EQ(a.size(), 100u);
    EXPECT_EQ(theory_csv(a), theory_csv(b));
    for (const TheoryTrial& t : a) {
        EXPECT_LT(t.residual, 1e-8);
        EXPECT_GE(t.min_coeff, 0.0);
        EXPECT_LE(t.max_coeff, 1.0);
        EXPECT_TRUE(t.monotone);
        EXPECT_GE(t.d, 1u);
        EXPECT_LE(t.d, 50u);
    }
    EXPECT_EQ(theory_csv(a).substr(0, 39), "trial,d,alpha,residual,min_coeff,max_co");
}

}  // namespace
}  // namespace spft
