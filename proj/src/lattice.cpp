#include "mrgbsde/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace mrgbsde {

VolatilityBand::VolatilityBand(double low, double high)
    : sigma_low(low), sigma_high(high) {
    if (!(low > 0.0) || !(high >= low) || !std::isfinite(high)) {
        throw InvalidConfig("volatility band requires 0 < sigma_low <= sigma_high");
    }
}

double g_function(double a, const VolatilityBand& band) {
    // Affine in sigma^2, so the supremum sits at a band endpoint.
    return 0.5 * std::max(band.high_sq() * a, band.low_sq() * a);
}

TreeGrid::TreeGrid(double horizon_t, int steps, const VolatilityBand& band)
    : horizon(horizon_t), n_steps(steps) {
    if (!(horizon_t > 0.0) || steps < 1) {
        throw InvalidConfig("grid requires horizon > 0 and n_steps >= 1");
    }
    dt = horizon / n_steps;
    dx = band.sigma_high * std::sqrt(dt) * std::sqrt(1.5);
}

TreeGrid::TreeGrid(double horizon_t, int steps, double dx_explicit)
    : horizon(horizon_t), n_steps(steps), dx(dx_explicit) {
    if (!(horizon_t > 0.0) || steps < 1) {
        throw InvalidConfig("grid requires horizon > 0 and n_steps >= 1");
    }
    if (!(dx_explicit > 0.0)) {
        throw InvalidConfig("grid requires dx > 0");
    }
    dt = horizon / n_steps;
}

void TreeGrid::require_cfl(const VolatilityBand& band) const {
    require_cfl(band.sigma_high);
}

void TreeGrid::require_cfl(double sigma) const {
    // Middle-branch weight 1 - sigma^2 dt / dx^2 must stay nonnegative; allow
    // equality up to rounding.
    if (dx < sigma * std::sqrt(dt) * (1.0 - 1e-12)) {
        throw CflViolation("dx < sigma_high * sqrt(dt): increase dx or n_steps");
    }
}

LatticeField::LatticeField(int slice_index)
    : slice(slice_index),
      values(static_cast<std::size_t>(2 * slice_index + 1), 0.0) {
    if (slice_index < 0) throw DimensionMismatch("field slice must be >= 0");
}

LatticeField::LatticeField(int slice_index, std::vector<double> node_values)
    : slice(slice_index), values(std::move(node_values)) {
    if (slice_index < 0 ||
        values.size() != static_cast<std::size_t>(2 * slice_index + 1)) {
        throw DimensionMismatch("field on slice k needs exactly 2k+1 values");
    }
}

LatticeField LatticeField::constant(int slice_index, double c) {
    LatticeField f(slice_index);
    std::fill(f.values.begin(), f.values.end(), c);
    return f;
}

LatticeField negate(const LatticeField& field) {
    LatticeField out(field.slice);
    for (std::size_t i = 0; i < field.values.size(); ++i) out.values[i] = -field.values[i];
    return out;
}

double one_step(double next_up, double next_mid, double next_down,
                const DriftEvaluator& f_eff, double t, double y_guess, double z,
                const TreeGrid& grid, const VolatilityBand& band) {
    grid.require_cfl(band);
    const double c = grid.dt / (2.0 * grid.dx * grid.dx);
    const double d2 = next_up + next_down - 2.0 * next_mid;
    const double lo = band.low_sq();
    const double hi = band.high_sq();
    const double at_lo = next_mid + lo * c * d2 + f_eff(t, y_guess, z, lo) * grid.dt;
    const double at_hi = next_mid + hi * c * d2 + f_eff(t, y_guess, z, hi) * grid.dt;
    return std::max(at_lo, at_hi);
}

LatticeField step_expectation(const LatticeField& next, const TreeGrid& grid,
                              const VolatilityBand& band) {
    if (next.slice < 1) throw DimensionMismatch("cannot step below the root slice");
    grid.require_cfl(band);
    const int k = next.slice - 1;
    const double c = grid.dt / (2.0 * grid.dx * grid.dx);
    const double p_lo = band.low_sq() * c;
    const double p_hi = band.high_sq() * c;
    LatticeField out(k);
    for (int j = -k; j <= k; ++j) {
        const double mid = next.value(j);
        const double d2 = next.value(j + 1) + next.value(j - 1) - 2.0 * mid;
        out.value(j) = std::max(mid + p_lo * d2, mid + p_hi * d2);
    }
    return out;
}

LatticeField step_classical(const LatticeField& next, const TreeGrid& grid,
                            double sigma) {
    if (next.slice < 1) throw DimensionMismatch("cannot step below the root slice");
    grid.require_cfl(sigma);
    const int k = next.slice - 1;
    const double p = sigma * sigma * grid.dt / (2.0 * grid.dx * grid.dx);
    LatticeField out(k);
    for (int j = -k; j <= k; ++j) {
        const double mid = next.value(j);
        const double d2 = next.value(j + 1) + next.value(j - 1) - 2.0 * mid;
        out.value(j) = mid + p * d2;
    }
    return out;
}

double expectation(const LatticeField& terminal, const TreeGrid& grid,
                   const VolatilityBand& band) {
    if (terminal.slice > grid.n_steps) {
        throw DimensionMismatch("terminal slice beyond the grid");
    }
    LatticeField cur = terminal;
    while (cur.slice > 0) cur = step_expectation(cur, grid, band);
    return cur.value(0);
}

std::vector<LatticeField> conditional_path(const LatticeField& terminal,
                                           const TreeGrid& grid,
                                           const VolatilityBand& band) {
    if (terminal.slice > grid.n_steps) {
        throw DimensionMismatch("terminal slice beyond the grid");
    }
    std::vector<LatticeField> path;
    path.reserve(static_cast<std::size_t>(terminal.slice) + 1);
    path.push_back(terminal);
    while (path.back().slice > 0) {
        path.push_back(step_expectation(path.back(), grid, band));
    }
    std::reverse(path.begin(), path.end());
    return path;
}

double classical_expectation(const LatticeField& terminal, const TreeGrid& grid,
                             double sigma) {
    if (terminal.slice > grid.n_steps) {
        throw DimensionMismatch("terminal slice beyond the grid");
    }
    LatticeField cur = terminal;
    while (cur.slice > 0) cur = step_classical(cur, grid, sigma);
    return cur.value(0);
}

double GExpectationBackend::expect(const LatticeField& terminal, const TreeGrid& grid,
                                   const VolatilityBand& band) const {
    return expectation(terminal, grid, band);
}

}  // namespace mrgbsde
