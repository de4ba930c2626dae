#pragma once

// Quasi-Newton ascent with backtracking line search, and finite-difference
// Hessians of analytic gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace intercens::optim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Objective returning its value and writing the gradient.
using ValueGrad = std::function<double(const Vector&, Vector&)>;

struct AscentOptions {
    double grad_tol = 1e-6;
    int max_iter = 500;
    /// Optional replacement for the max-norm gradient test.
    std::function<bool(const Vector&, const Vector&)> stop;
};

struct AscentResult {
    Vector x;
    double value = -std::numeric_limits<double>::infinity();
    Vector grad;
    int iterations = 0;
    bool converged = false;
};

/// Maximizes f with BFGS. Non-finite trial values are treated as failed
/// steps and backtracked, so f may return -infinity outside its support.
inline AscentResult maximize(const ValueGrad& f, Vector x0, const AscentOptions& opts = {}) {
    const auto n = x0.size();
    AscentResult r;
    r.x = std::move(x0);
    r.grad = Vector::Zero(n);
    r.value = f(r.x, r.grad);
    if (!std::isfinite(r.value)) return r;

    auto done = [&](const Vector& x, const Vector& g) {
        return opts.stop ? opts.stop(x, g) : g.cwiseAbs().maxCoeff() < opts.grad_tol;
    };

    // Inverse Hessian of the negated objective.
    Matrix h = Matrix::Identity(n, n);
    bool fresh = true;
    Vector g_new(n);
    for (int it = 0; it < opts.max_iter; ++it) {
        if (done(r.x, r.grad)) {
            r.converged = true;
            break;
        }
        r.iterations = it + 1;
        Vector dir = h * r.grad;
        double slope = r.grad.dot(dir);
        if (!(slope > 0.0)) {
            h.setIdentity();
            fresh = true;
            dir = r.grad;
            slope = r.grad.squaredNorm();
        }
        double step = 1.0;
        if (fresh) step = std::min(1.0, 1.0 / std::max(1e-12, dir.cwiseAbs().maxCoeff()));
        bool accepted = false;
        Vector x_new;
        double v_new = 0.0;
        // Sufficient increase, or a flat value (within roundoff) with a smaller gradient.
        const double noise = 1e-12 * std::max(1.0, std::abs(r.value));
        const double gnorm = r.grad.cwiseAbs().maxCoeff();
        for (int bt = 0; bt < 60; ++bt) {
            x_new = r.x + step * dir;
            v_new = f(x_new, g_new);
            if (std::isfinite(v_new) && (v_new >= r.value + 1e-4 * step * slope ||
                                         (v_new >= r.value - noise && g_new.cwiseAbs().maxCoeff() < gnorm))) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (fresh) break;
            h.setIdentity();
            fresh = true;
            continue;
        }
        const Vector s = x_new - r.x;
        const Vector y = r.grad - g_new;  // gradient change of the negated objective
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (fresh) h *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Matrix I = Matrix::Identity(n, n);
            h = (I - rho * s * y.transpose()) * h * (I - rho * y * s.transpose()) + rho * s * s.transpose();
            fresh = false;
        }
        r.x = std::move(x_new);
        r.value = v_new;
        r.grad = g_new;
    }
    if (!r.converged && done(r.x, r.grad)) r.converged = true;
    return r;
}

/// Symmetrized central differences of an analytic gradient, step
/// rel_step * (1 + |x_j|) in coordinate j.
inline Matrix numeric_hessian(const ValueGrad& f, const Vector& x, double rel_step = 1e-5) {
    const auto n = x.size();
    Matrix hess(n, n);
    Vector gp(n), gm(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = rel_step * (1.0 + std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        f(xp, gp);
        f(xm, gm);
        hess.col(j) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (hess + hess.transpose());
}

}  // namespace intercens::optim
