#pragma once

// Test-local oracles, written independently of the library code paths they
// check: a clean-room classical trinomial BSDE solver, dense-grid suprema,
// a grid-refinement quadratic-program minimizer and random field generators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mrgbsde/lattice.hpp"

namespace testutil {

inline std::mt19937_64 rng(unsigned seed) { return std::mt19937_64{seed}; }

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen);
}

// Random terminal field on a slice, values in [lo, hi].
inline mrgbsde::LatticeField random_field(int slice, std::mt19937_64& gen,
                                          double lo = -2.0, double hi = 2.0) {
    mrgbsde::LatticeField field(slice);
    for (double& v : field.values) v = uniform(gen, lo, hi);
    return field;
}

// Supremum of expr over sigma^2 on a dense grid spanning the band.
inline double grid_sup_sigma_sq(const std::function<double(double)>& expr,
                                double sig_lo, double sig_hi, int points = 1000) {
    const double a = sig_lo * sig_lo;
    const double b = sig_hi * sig_hi;
    double best = expr(a);
    for (int i = 1; i <= points; ++i) {
        const double s = a + (b - a) * i / points;
        best = std::max(best, expr(s));
    }
    return best;
}

// Clean-room single-measure trinomial solver for one backward equation
//   y_k = E_sigma[y_{k+1}] + f(t_k, x, y_k, z_k) dt
// on the same recombining grid (slice k holds 2k+1 nodes at j*dx). Plain
// vectors, implicit y resolved by damped iteration, z by central difference.
struct ClassicalSlice {
    std::vector<double> y;  // index j + k
    std::vector<double> z;
};

using ClassicalDriver = std::function<double(double t, double x, double y, double z)>;

inline std::vector<ClassicalSlice> classical_bsde_oracle(
    const std::vector<double>& terminal, int n_steps, double dt, double dx,
    double sigma, const ClassicalDriver& f) {
    const double q = sigma * sigma * dt / (2.0 * dx * dx);
    std::vector<ClassicalSlice> out(static_cast<std::size_t>(n_steps) + 1);
    auto& last = out[static_cast<std::size_t>(n_steps)];
    last.y = terminal;
    last.z.assign(terminal.size(), 0.0);
    for (std::size_t idx = 0; idx < terminal.size(); ++idx) {
        const std::size_t up = std::min(idx + 1, terminal.size() - 1);
        const std::size_t dn = idx == 0 ? 0 : idx - 1;
        last.z[idx] = up == dn ? 0.0
                               : (terminal[up] - terminal[dn]) /
                                     (static_cast<double>(up - dn) * dx);
    }
    for (int k = n_steps - 1; k >= 0; --k) {
        const auto& next = out[static_cast<std::size_t>(k + 1)].y;
        auto& cur = out[static_cast<std::size_t>(k)];
        const int m = 2 * k + 1;
        cur.y.assign(static_cast<std::size_t>(m), 0.0);
        cur.z.assign(static_cast<std::size_t>(m), 0.0);
        for (int j = -k; j <= k; ++j) {
            const std::size_t i = static_cast<std::size_t>(j + k);
            const double vu = next[i + 2];
            const double vm = next[i + 1];
            const double vd = next[i];
            const double ex = vm + q * (vu + vd - 2.0 * vm);
            const double z = (vu - vd) / (2.0 * dx);
            double y = ex;
            for (int it = 0; it < 200; ++it) {
                const double y_new = ex + f(k * dt, j * dx, y, z) * dt;
                if (std::abs(y_new - y) <= 1e-15 * (1.0 + std::abs(y_new))) {
                    y = y_new;
                    break;
                }
                y = y_new;
            }
            cur.y[i] = y;
            cur.z[i] = z;
        }
    }
    return out;
}

// Classical expectation of a terminal payoff phi(x) at fixed sigma: the
// zero-driver case of the oracle above.
inline double classical_expectation_oracle(const std::function<double(double)>& phi,
                                           int n_steps, double dt, double dx,
                                           double sigma) {
    std::vector<double> terminal(static_cast<std::size_t>(2 * n_steps + 1));
    for (int j = -n_steps; j <= n_steps; ++j) {
        terminal[static_cast<std::size_t>(j + n_steps)] = phi(j * dx);
    }
    auto path = classical_bsde_oracle(terminal, n_steps, dt, dx, sigma,
                                      [](double, double, double, double) { return 0.0; });
    return path.front().y.front();
}

// Minimum of a scalar function over [lo, hi] by iterated grid refinement;
// independent of any closed-form argmin.
inline double refine_grid_min(const std::function<double(double)>& fn, double lo,
                              double hi, int points = 81, int rounds = 9) {
    double best_x = lo;
    double best = fn(lo);
    for (int r = 0; r < rounds; ++r) {
        const double step = (hi - lo) / points;
        for (int i = 0; i <= points; ++i) {
            const double x = lo + step * i;
            const double v = fn(x);
            if (v < best) {
                best = v;
                best_x = x;
            }
        }
        lo = best_x - step;
        hi = best_x + step;
    }
    return best;
}

// Minimal Euclidean norm over the feasible half-space
// {x : sum theta_l x_l >= target} in dimension 2, solved as a grid-refined
// one-dimensional quadratic program along the active constraint.
inline double qp_min_norm_2d(double theta1, double theta2, double target,
                             double span = 8.0) {
    if (target <= 0.0) return 0.0;
    const auto norm_on_constraint = [&](double x1) {
        const double x2 = (target - theta1 * x1) / theta2;
        return std::sqrt(x1 * x1 + x2 * x2);
    };
    return refine_grid_min(norm_on_constraint, -span, span);
}

inline double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

}  // namespace testutil
