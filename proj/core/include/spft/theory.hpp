#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spft/penalties.hpp"

namespace spft {

/// Small dense row-major matrix for the quadratic-model checks.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);
    static Matrix diagonal(const std::vector<double>& d);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    [[nodiscard]] Matrix transpose() const;
    [[nodiscard]] std::vector<double> apply(const std::vector<double>& v) const;            // M v
    [[nodiscard]] std::vector<double> apply_transpose(const std::vector<double>& v) const;  // M^T v
    friend Matrix operator*(const Matrix& a, const Matrix& b);

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

[[nodiscard]] double max_abs_diff(const Matrix& a, const Matrix& b);
[[nodiscard]] double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

struct SymmetricEigen {
    Matrix vectors;              // columns are eigenvectors
    std::vector<double> values;  // ascending
    int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below `tol`.
[[nodiscard]] SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol = 1e-12, int max_sweeps = 100);

/// Solves A x = b by Gaussian elimination with partial pivoting.
[[nodiscard]] std::vector<double> solve_linear(Matrix a, std::vector<double> b);

/// J(w) = 1/2 (w - w*)^T H (w - w*) with its eigendecomposition H = Q diag(lambda) Q^T.
struct QuadraticModel {
    Matrix H;
    std::vector<double> w_star;
    std::vector<double> w0;
    Matrix Q;
    std::vector<double> lambda;

    [[nodiscard]] std::size_t dim() const noexcept { return w_star.size(); }
    /// Eigenvalues in [-1e-12, 0) are clamped to 0; anything below is rejected.
    static QuadraticModel make(Matrix H, std::vector<double> w_star, std::vector<double> w0);
};

/// H = A^T A / d with standard normal A; w* and w0 standard normal.
[[nodiscard]] QuadraticModel random_quadratic_model(std::size_t d, std::uint64_t seed);

/// Minimizer of J(w) + alpha/2 ||w - w0||^2:
/// Q^T w~ = (Lambda + alpha I)^-1 (Lambda Q^T w* + alpha Q^T w0).
[[nodiscard]] std::vector<double> analytic_sp_minimizer(const QuadraticModel& m, double alpha);
/// Minimizer of J(w) + alpha/2 ||w||^2: Q^T w~ = Lambda (Lambda + alpha I)^-1 Q^T w*.
[[nodiscard]] std::vector<double> analytic_l2_minimizer(const QuadraticModel& m, double alpha);

/// ||H (w - w*) + alpha (w - reference)||_inf.
[[nodiscard]] double stationarity_residual(const QuadraticModel& m, double alpha, const std::vector<double>& w,
                                           const std::vector<double>& reference);

struct Mixing {
    double a = 0.0;  // weight on w* along the eigendirection
    double b = 0.0;  // weight on w0
};

/// a_i = lambda_i / (lambda_i + alpha), b_i = alpha / (lambda_i + alpha).
[[nodiscard]] std::vector<Mixing> mixing_coefficients(const QuadraticModel& m, double alpha);

struct RescalingCheck {
    std::vector<double> scales;     // lambda_i / (lambda_i + alpha)
    std::vector<double> projected;  // (Q^T w~_L2)_i, w~_L2 solved without the eigendecomposition
    std::vector<double> predicted;  // scales_i * (Q^T w*)_i
    double max_residual = 0.0;
};

[[nodiscard]] RescalingCheck l2_rescaling_check(const QuadraticModel& m, double alpha);

struct DescentResult {
    std::vector<double> w;
    std::size_t iterations = 0;
    double step = 0.0;
    int halvings = 0;
};

/// Full-batch gradient descent on the regularized quadratic (kind L2 or L2SP)
/// from a seeded random start until the gradient norm is below `grad_tol`.
/// The step starts at 1 and is halved on divergence, at most 60 times.
[[nodiscard]] DescentResult descent_minimizer(const QuadraticModel& m, double alpha, PenaltyKind kind,
                                              std::uint64_t seed, double grad_tol = 1e-12,
                                              std::size_t max_iters = 2'000'000);

/// ||numeric - analytic||_inf for the chosen penalty kind.
[[nodiscard]] double empirical_descent_check(const QuadraticModel& m, double alpha, PenaltyKind kind,
                                             std::uint64_t seed);

struct TheoryTrial {
    std::size_t trial = 0;
    std::size_t d = 0;
    double alpha = 0.0;
    double residual = 0.0;   // analytic vs descent, inf norm
    double stationarity = 0.0;
    double min_coeff = 0.0;
    double max_coeff = 0.0;
    double max_coeff_sum_error = 0.0;
    bool monotone = false;   // ||w~(alpha) - w0|| non-increasing over an alpha grid
};

/// Random models with d uniform in [1, max_dim] and alpha log-uniform in [0.1, 10].
[[nodiscard]] std::vector<TheoryTrial> run_theory_trials(std::size_t trials, std::size_t max_dim, std::uint64_t seed,
                                                         std::size_t jobs = 1);

/// trial,d,alpha,residual,min_coeff,max_coeff
[[nodiscard]] std::string theory_csv(const std::vector<TheoryTrial>& trials);

}  // namespace spft
