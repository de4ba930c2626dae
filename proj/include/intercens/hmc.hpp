#pragma once

// Static-path Hamiltonian Monte Carlo with a dense metric. The sampler moves
// in whitened coordinates theta = L y, where L L' is the current metric
// (covariance estimate), so the kinetic energy is |p|^2 / 2. Warmup adapts the
// step size by dual averaging and re-estimates the metric in doubling
// windows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "intercens/errors.hpp"
#include "intercens/parallel.hpp"
#include "intercens/random.hpp"

namespace intercens::hmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Log density with gradient; returns -infinity outside the support.
using LogDensity = std::function<double(const Vector&, Vector&)>;

/// Energy error beyond which a transition counts as divergent.
inline constexpr double kDivergenceThreshold = 1000.0;
inline constexpr int kMaxLeapfrogSteps = 256;

struct Options {
    int warmup = 1000;
    int iters = 1000;
    double target_accept = 0.8;
    /// Nominal integration time in whitened units, jittered by U(0.5, 1.5).
    double path_length = std::numbers::pi / 2.0;
    int max_steps = kMaxLeapfrogSteps;
    bool adapt_metric = true;
};

struct ChainOutput {
    Matrix draws;  // iters x dim
    double step_size = 0.0;
    double mean_accept = 0.0;
    int divergent = 0;         // during sampling
    int warmup_divergent = 0;  // during warmup
    long leapfrog_steps = 0;
    Matrix metric;  // final covariance estimate
};

/// Dual averaging of log step size toward a target acceptance rate.
class DualAveraging {
public:
    DualAveraging(double step, double target) : target_(target) { restart(step); }

    void restart(double step) {
        mu_ = std::log(10.0 * step);
        hbar_ = 0.0;
        log_bar_ = 0.0;
        count_ = 0;
        log_step_ = std::log(step);
    }

    double update(double accept) {
        ++count_;
        const double m = static_cast<double>(count_);
        const double eta = 1.0 / (m + kT0);
        hbar_ = (1.0 - eta) * hbar_ + eta * (target_ - accept);
        log_step_ = mu_ - std::sqrt(m) / kGamma * hbar_;
        const double w = std::pow(m, -kKappa);
        log_bar_ = w * log_step_ + (1.0 - w) * log_bar_;
        return std::exp(log_step_);
    }

    double final_step() const { return std::exp(log_bar_); }

private:
    static constexpr double kGamma = 0.05;
    static constexpr double kT0 = 10.0;
    static constexpr double kKappa = 0.75;
    double target_;
    double mu_ = 0.0, hbar_ = 0.0, log_bar_ = 0.0, log_step_ = 0.0;
    long count_ = 0;
};

/// Warmup schedule: an initial fast phase (15%), slow metric windows that
/// double from 25 iterations, and a terminal fast phase (10%). Returns the
/// iteration index at which each slow window ends.
inline std::vector<int> metric_window_ends(int warmup) {
    std::vector<int> ends;
    if (warmup < 20) return ends;
    const int init = static_cast<int>(0.15 * warmup);
    const int term = static_cast<int>(0.1 * warmup);
    const int base = std::min(25, warmup - init - term);
    const int slow_end = warmup - term;
    int start = init;
    int size = base;
    while (start < slow_end) {
        int end = start + size;
        // Stretch the last window rather than leave a short one.
        if (end + 2 * size > slow_end) end = slow_end;
        ends.push_back(end);
        start = end;
        size *= 2;
    }
    return ends;
}

class Sampler {
public:
    Sampler(LogDensity target, Matrix metric, Options opts)
        : target_(std::move(target)), opts_(opts) {
        set_metric(metric);
    }

    ChainOutput run(const Vector& theta0, Rng& rng) {
        const auto d = theta0.size();
        Vector theta = theta0;
        Vector grad(d);
        double lp = target_(theta, grad);
        if (!std::isfinite(lp)) throw DomainError("sampler started outside the support of the target");

        double step = initial_step(theta, lp, grad, rng);
        DualAveraging da(step, opts_.target_accept);
        const auto windows = opts_.adapt_metric ? metric_window_ends(opts_.warmup) : std::vector<int>{};
        std::size_t next_window = 0;
        int window_start = windows.empty() ? 0 : static_cast<int>(0.15 * opts_.warmup);
        std::vector<Vector> window_draws;

        ChainOutput out;
        out.draws.resize(opts_.iters, d);
        double accept_sum = 0.0;
        const int total = opts_.warmup + opts_.iters;
        for (int it = 0; it < total; ++it) {
            const bool warm = it < opts_.warmup;
            const auto tr = transition(theta, lp, grad, step, rng);
            out.leapfrog_steps += tr.steps;
            if (warm) {
                if (tr.divergent) ++out.warmup_divergent;
                step = da.update(tr.accept);
                if (next_window < windows.size() && it >= window_start) {
                    window_draws.push_back(theta);
                    if (it + 1 == windows[next_window]) {
                        update_metric(window_draws);
                        window_draws.clear();
                        window_start = windows[next_window];
                        ++next_window;
                        step = initial_step(theta, lp, grad, rng);
                        da.restart(step);
                    }
                }
                if (it + 1 == opts_.warmup) step = da.final_step();
            } else {
                if (tr.divergent) ++out.divergent;
                accept_sum += tr.accept;
                out.draws.row(it - opts_.warmup) = theta.transpose();
            }
        }
        out.step_size = step;
        out.mean_accept = opts_.iters > 0 ? accept_sum / opts_.iters : 0.0;
        out.metric = chol_ * chol_.transpose();
        return out;
    }

private:
    struct Transition {
        double accept = 0.0;
        bool divergent = false;
        int steps = 0;
    };

    void set_metric(const Matrix& cov) {
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() != Eigen::Success) throw DomainError("metric is not positive definite");
        chol_ = llt.matrixL();
    }

    void update_metric(const std::vector<Vector>& xs) {
        const auto n = static_cast<double>(xs.size());
        if (xs.size() < 10) return;
        const auto d = xs.front().size();
        Vector mean = Vector::Zero(d);
        for (const auto& x : xs) mean += x;
        mean /= n;
        Matrix cov = Matrix::Zero(d, d);
        for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
        cov /= (n - 1.0);
        // Shrink toward the diagonal; small windows give noisy correlations.
        const double w = n / (n + 5.0);
        Matrix reg = w * cov;
        reg.diagonal() += (1.0 - w) * cov.diagonal();
        reg.diagonal().array() += 1e-10 * (1.0 + reg.diagonal().array().abs());
        Eigen::LLT<Matrix> llt(reg);
        if (llt.info() == Eigen::Success && reg.allFinite()) chol_ = llt.matrixL();
    }

    double whitened(const Vector& theta, Vector& grad_theta, Vector& grad_y, double& lp) const {
        lp = target_(theta, grad_theta);
        grad_y = chol_.transpose() * grad_theta;
        return lp;
    }

    /// Doubles or halves the step until one leapfrog step crosses 50% acceptance.
    double initial_step(const Vector& theta, double lp, const Vector& grad, Rng& rng) {
        double step = 1.0;
        const auto d = theta.size();
        Vector p(d);
        for (Eigen::Index i = 0; i < d; ++i) p[i] = standard_normal(rng);
        auto log_accept = [&](double eps) {
            Vector g = chol_.transpose() * grad;
            Vector q = Vector::Zero(d);
            Vector mom = p + 0.5 * eps * g;
            q += eps * mom;
            Vector th = theta + chol_ * q;
            Vector gt(d);
            const double lp1 = target_(th, gt);
            if (!std::isfinite(lp1)) return -kDivergenceThreshold;
            mom += 0.5 * eps * (chol_.transpose() * gt);
            const double h0 = -lp + 0.5 * p.squaredNorm();
            const double h1 = -lp1 + 0.5 * mom.squaredNorm();
            return h0 - h1;
        };
        double la = log_accept(step);
        const int dir = la > std::log(0.5) ? 1 : -1;
        for (int k = 0; k < 50; ++k) {
            const double next = dir > 0 ? step * 2.0 : step * 0.5;
            la = log_accept(next);
            if ((dir > 0 && !(la > std::log(0.5))) || (dir < 0 && la > std::log(0.5))) {
                if (dir < 0) step = next;
                break;
            }
            step = next;
        }
        return step;
    }

    Transition transition(Vector& theta, double& lp, Vector& grad, double step, Rng& rng) {
        const auto d = theta.size();
        Transition tr;
        Vector p(d);
        for (Eigen::Index i = 0; i < d; ++i) p[i] = standard_normal(rng);
        const double jitter = 0.5 + uniform_open(rng);
        tr.steps = std::clamp(static_cast<int>(std::ceil(jitter * opts_.path_length / step)), 1, opts_.max_steps);

        const double h0 = -lp + 0.5 * p.squaredNorm();
        Vector y = Vector::Zero(d);  // displacement in whitened coordinates
        Vector g_theta = grad;
        Vector g_y = chol_.transpose() * g_theta;
        Vector th = theta;
        double lp1 = lp;
        for (int s = 0; s < tr.steps; ++s) {
            p += 0.5 * step * g_y;
            y += step * p;
            th = theta + chol_ * y;
            whitened(th, g_theta, g_y, lp1);
            if (!std::isfinite(lp1)) break;
            p += 0.5 * step * g_y;
        }
        if (!std::isfinite(lp1)) {
            tr.divergent = true;
            tr.accept = 0.0;
            return tr;
        }
        const double h1 = -lp1 + 0.5 * p.squaredNorm();
        const double dh = h1 - h0;
        if (std::isnan(dh) || dh > kDivergenceThreshold) {
            tr.divergent = true;
            tr.accept = 0.0;
            return tr;
        }
        tr.accept = std::min(1.0, std::exp(-dh));
        if (uniform_open(rng) < tr.accept) {
            theta = th;
            lp = lp1;
            grad = g_theta;
        }
        return tr;
    }

    LogDensity target_;
    Options opts_;
    Matrix chol_;
};

struct MultiChainOutput {
    std::vector<ChainOutput> chains;
    int divergent = 0;
    long total_draws = 0;
    bool divergence_warning = false;
};

/// Runs one chain per initial point, chain c drawing from make_rng(seed, {c}).
/// Results do not depend on the worker count.
inline MultiChainOutput sample(const LogDensity& target, const Matrix& metric, const std::vector<Vector>& inits,
                               const Options& opts, std::uint64_t seed, unsigned workers = 1) {
    MultiChainOutput out;
    out.chains.resize(inits.size());
    parallel_for(inits.size(), workers, [&](std::size_t c) {
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c)});
        Sampler s(target, metric, opts);
        out.chains[c] = s.run(inits[c], rng);
    });
    for (const auto& c : out.chains) {
        out.divergent += c.divergent;
        out.total_draws += c.draws.rows();
    }
    out.divergence_warning = out.total_draws > 0 && out.divergent > 0.1 * static_cast<double>(out.total_draws);
    return out;
}

}  // namespace intercens::hmc
