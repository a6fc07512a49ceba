#include "spft/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "spft/csv.hpp"
#include "spft/parallel.hpp"

namespace spft {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(const std::vector<double>& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

std::vector<double> Matrix::apply(const std::vector<double>& v) const {
    if (v.size() != cols_) throw std::invalid_argument("matrix: dimension mismatch");
    std::vector<double> out(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

std::vector<double> Matrix::apply_transpose(const std::vector<double>& v) const {
    if (v.size() != rows_) throw std::invalid_argument("matrix: dimension mismatch");
    std::vector<double> out(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) out[j] += (*this)(i, j) * v[i];
    return out;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matrix: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("matrix: dimension mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vector: dimension mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol, int max_sweeps) {
    const std::size_t n = symmetric.rows();
    if (symmetric.cols() != n) throw std::invalid_argument("jacobi: matrix must be square");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(symmetric(i, j) - symmetric(j, i)) > 1e-12 * (1.0 + std::abs(symmetric(i, j))))
                throw std::invalid_argument("jacobi: matrix must be symmetric");
    Matrix a = symmetric;
    Matrix v = Matrix::identity(n);
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };
    SymmetricEigen out;
    while (off_norm() >= tol) {
        if (out.sweeps++ >= max_sweeps) throw std::runtime_error("jacobi: no convergence");
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
    out.vectors = Matrix(n, n);
    out.values.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        out.values[c] = a(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
    }
    return out;
}

std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n) throw std::invalid_argument("solve: dimension mismatch");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (a(piv, col) == 0.0) throw std::domain_error("solve: singular matrix");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return x;
}

QuadraticModel QuadraticModel::make(Matrix H, std::vector<double> w_star, std::vector<double> w0) {
    const std::size_t d = H.rows();
    if (H.cols() != d || w_star.size() != d || w0.size() != d) {
        throw std::invalid_argument("quadratic model: dimension mismatch");
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (H(i, j) != H(j, i)) throw std::invalid_argument("quadratic model: H must be symmetric");
    SymmetricEigen eig = jacobi_eigen(H);
    for (double& l : eig.values) {
        if (l < -1e-12) throw std::invalid_argument("quadratic model: H is not positive semidefinite");
        if (l < 0.0) l = 0.0;
    }
    return {std::move(H), std::move(w_star), std::move(w0), std::move(eig.vectors), std::move(eig.values)};
}

QuadraticModel random_quadratic_model(std::size_t d, std::uint64_t seed) {
    if (d == 0) throw std::invalid_argument("quadratic model: d must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix a(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) a(i, j) = normal(rng);
    Matrix h(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += a(k, i) * a(k, j);
            h(i, j) = h(j, i) = s / static_cast<double>(d);
        }
    std::vector<double> ws(d), w0(d);
    for (double& x : ws) x = normal(rng);
    for (double& x : w0) x = normal(rng);
    return QuadraticModel::make(std::move(h), std::move(ws), std::move(w0));
}

namespace {

bool singular_at_zero(const QuadraticModel& m) {
    const double top = m.lambda.empty() ? 0.0 : *std::max_element(m.lambda.begin(), m.lambda.end());
    return std::any_of(m.lambda.begin(), m.lambda.end(), [&](double l) { return l <= 1e-14 * std::max(top, 1.0); });
}

void check_alpha(const QuadraticModel& m, double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and nonnegative");
    if (alpha == 0.0 && singular_at_zero(m)) throw std::domain_error("alpha = 0 with singular H has no unique minimizer");
}

}  // namespace

std::vector<double> analytic_sp_minimizer(const QuadraticModel& m, double alpha) {
    check_alpha(m, alpha);
    const std::vector<double> ps = m.Q.apply_transpose(m.w_star);
    const std::vector<double> p0 = m.Q.apply_transpose(m.w0);
    std::vector<double> z(m.dim());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double l = m.lambda[i];
        z[i] = (l * ps[i] + alpha * p0[i]) / (l + alpha);
    }
    return m.Q.apply(z);
}

std::vector<double> analytic_l2_minimizer(const QuadraticModel& m, double alpha) {
    check_alpha(m, alpha);
    const std::vector<double> ps = m.Q.apply_transpose(m.w_star);
    std::vector<double> z(m.dim());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = m.lambda[i] / (m.lambda[i] + alpha) * ps[i];
    return m.Q.apply(z);
}

double stationarity_residual(const QuadraticModel& m, double alpha, const std::vector<double>& w,
                             const std::vector<double>& reference) {
    std::vector<double> diff(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) diff[i] = w[i] - m.w_star[i];
    const std::vector<double> hd = m.H.apply(diff);
    double r = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) r = std::max(r, std::abs(hd[i] + alpha * (w[i] - reference[i])));
    return r;
}

std::vector<Mixing> mixing_coefficients(const QuadraticModel& m, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("mixing coefficients need alpha > 0");
    std::vector<Mixing> out;
    out.reserve(m.dim());
    for (double l : m.lambda) out.push_back({l / (l + alpha), alpha / (l + alpha)});
    return out;
}

RescalingCheck l2_rescaling_check(const QuadraticModel& m, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("rescaling check needs alpha > 0");
    const std::size_t d = m.dim();
    Matrix a = m.H;
    for (std::size_t i = 0; i < d; ++i) a(i, i) += alpha;
    const std::vector<double> w_l2 = solve_linear(a, m.H.apply(m.w_star));
    RescalingCheck out;
    out.projected = m.Q.apply_transpose(w_l2);
    const std::vector<double> ps = m.Q.apply_transpose(m.w_star);
    for (std::size_t i = 0; i < d; ++i) {
        out.scales.push_back(m.lambda[i] / (m.lambda[i] + alpha));
        out.predicted.push_back(out.scales.back() * ps[i]);
        out.max_residual = std::max(out.max_residual, std::abs(out.projected[i] - out.predicted[i]));
    }
    return out;
}

DescentResult descent_minimizer(const QuadraticModel& m, double alpha, PenaltyKind kind, std::uint64_t seed,
                                double grad_tol, std::size_t max_iters) {
    if (kind != PenaltyKind::L2 && kind != PenaltyKind::L2SP) {
        throw std::invalid_argument("descent check supports L2 and L2SP only");
    }
    const std::size_t d = m.dim();
    const std::vector<double> ref = kind == PenaltyKind::L2SP ? m.w0 : std::vector<double>(d, 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> start(d);
    for (double& x : start) x = normal(rng);

    auto gradient = [&](const std::vector<double>& w, std::vector<double>& g) {
        std::vector<double> diff(d);
        for (std::size_t i = 0; i < d; ++i) diff[i] = w[i] - m.w_star[i];
        g = m.H.apply(diff);
        double norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            g[i] += alpha * (w[i] - ref[i]);
            norm += g[i] * g[i];
        }
        return std::sqrt(norm);
    };

    DescentResult out;
    double step = 1.0;
    std::vector<double> g;
    for (int halvings = 0; halvings <= 60; ++halvings, step *= 0.5) {
        std::vector<double> w = start;
        const double g0 = gradient(w, g);
        bool diverged = false;
        double previous = INFINITY;
        for (std::size_t it = 0; it < max_iters; ++it) {
            const double norm = gradient(w, g);
            if (norm < grad_tol) {
                out.w = std::move(w);
                out.iterations = it;
                out.step = step;
                out.halvings = halvings;
                return out;
            }
            // a stable step contracts the gradient of a quadratic; stalling above rounding level means oscillation
            if (!std::isfinite(norm) || norm > 1e6 * (g0 + 1.0) || (norm >= previous && norm > 1e-9)) {
                diverged = true;
                break;
            }
            previous = norm;
            for (std::size_t i = 0; i < d; ++i) w[i] -= step * g[i];
        }
        if (!diverged) throw std::runtime_error("descent: no convergence within the iteration budget");
    }
    throw std::runtime_error("descent: diverged after 60 step halvings");
}

double empirical_descent_check(const QuadraticModel& m, double alpha, PenaltyKind kind, std::uint64_t seed) {
    const DescentResult num = descent_minimizer(m, alpha, kind, seed);
    const std::vector<double> ana =
        kind == PenaltyKind::L2SP ? analytic_sp_minimizer(m, alpha) : analytic_l2_minimizer(m, alpha);
    return max_abs_diff(num.w, ana);
}

std::vector<TheoryTrial> run_theory_trials(std::size_t trials, std::size_t max_dim, std::uint64_t seed,
                                           std::size_t jobs) {
    if (max_dim == 0) throw std::invalid_argument("theory: max_dim must be positive");
    std::vector<TheoryTrial> out(trials);
    parallel_for(trials, jobs, [&](std::size_t t) {
        std::mt19937_64 rng(seed + 7919 * (t + 1));
        std::uniform_int_distribution<std::size_t> dim(1, max_dim);
        std::uniform_real_distribution<double> log_alpha(std::log(0.1), std::log(10.0));
        TheoryTrial tr;
        tr.trial = t;
        tr.d = dim(rng);
        tr.alpha = std::exp(log_alpha(rng));
        const QuadraticModel m = random_quadratic_model(tr.d, rng());
        const std::vector<double> ana = analytic_sp_minimizer(m, tr.alpha);
        const DescentResult num = descent_minimizer(m, tr.alpha, PenaltyKind::L2SP, rng());
        tr.residual = max_abs_diff(num.w, ana);
        tr.stationarity = stationarity_residual(m, tr.alpha, ana, m.w0);
        tr.min_coeff = 1.0;
        tr.max_coeff = 0.0;
        for (const Mixing& c : mixing_coefficients(m, tr.alpha)) {
            tr.min_coeff = std::min({tr.min_coeff, c.a, c.b});
            tr.max_coeff = std::max({tr.max_coeff, c.a, c.b});
            tr.max_coeff_sum_error = std::max(tr.max_coeff_sum_error, std::abs(c.a + c.b - 1.0));
        }
        tr.monotone = true;
        double prev = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 10; ++k) {
            const double a = std::pow(10.0, -3.0 + 6.0 * k / 9.0);
            const std::vector<double> w = analytic_sp_minimizer(m, a);
            double dist = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) dist += (w[i] - m.w0[i]) * (w[i] - m.w0[i]);
            dist = std::sqrt(dist);
            if (dist > prev + 1e-12) tr.monotone = false;
            prev = dist;
        }
        out[t] = tr;
    });
    return out;
}

std::string theory_csv(const std::vector<TheoryTrial>& trials) {
    CsvTable t({"trial", "d", "alpha", "residual", "min_coeff", "max_coeff"});
    for (const TheoryTrial& tr : trials) {
        t.row().add(tr.trial).add(tr.d).add(tr.alpha).add(tr.residual).add(tr.min_coeff).add(tr.max_coeff);
    }
    return t.str();
}

}  // namespace spft
