#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mrgbsde/lattice.hpp"

namespace mrgbsde {

// Drivers of an N-component system. f[l] and g[l] see the time, the spatial
// node, the full y vector and the component's own z. lipschitz_L is the
// declared joint Lipschitz bound in (y, z); it is validated by sampling, not
// proven.
struct GeneratorSpec {
    using Driver =
        std::function<double(double t, double x, std::span<const double> y, double z)>;

    std::vector<Driver> f;
    std::vector<Driver> g;  // empty means identically zero
    double lipschitz_L = 0.0;

    int dimension() const { return static_cast<int>(f.size()); }
    double f_at(int l, double t, double x, std::span<const double> y, double z) const;
    double g_at(int l, double t, double x, std::span<const double> y, double z) const;
};

// Largest observed excess of |f(p1)-f(p2)| + |g(p1)-g(p2)| over
// lipschitz_L * (|y1-y2| + |z1-z2|), sampled on random point pairs with
// t in [0, horizon] and coordinates in [-box, box]. <= 0 means no violation
// was observed.
double probe_lipschitz(const GeneratorSpec& gen, double horizon, double box,
                       int probes, unsigned seed);

// Per-slice y vectors used to freeze the y argument of the drivers.
// q[l][s - start_slice] is component l on slice s.
struct FrozenY {
    int start_slice = 0;
    std::vector<std::vector<LatticeField>> q;

    int end_slice() const;
    void require_cover(int dimension, int start, int end) const;
    // y vector at (slice, node j), written into out.
    void at(int slice, int j, std::span<double> out) const;
};

struct SolverOptions {
    double inner_tol = 1e-13;  // fixed point stopping threshold per node
    int max_inner_iter = 50;
};

// One component's backward solution on slices [start_slice, terminal.slice].
// y: value fields. z: central-difference gradient fields (one-sided dividend
// of the terminal on the last slice). k: accumulated compensator fields,
// zero on the first slice, extended forward by clamped parent inheritance.
struct BsdeSolution {
    int start_slice = 0;
    std::vector<LatticeField> y;
    std::vector<LatticeField> z;
    std::vector<LatticeField> k;

    int end_slice() const {
        return start_slice + static_cast<int>(y.size()) - 1;
    }
};

// Backward solve of one component. Each node solves the implicit fixed point
//   y = sup over band endpoints of [E_sigma(next) + (f + sigma^2 g) dt]
// with the component's own y live when frozen == nullptr, and all y components
// frozen to the supplied paths otherwise. z is explicit from the next slice.
// Throws NoContraction if lipschitz_L * dt >= 1, CflViolation on a bad grid,
// DimensionMismatch on arity or coverage errors.
BsdeSolution solve_unreflected(const LatticeField& terminal, const GeneratorSpec& gen,
                               int component, const FrozenY* frozen, int start_slice,
                               const TreeGrid& grid, const VolatilityBand& band,
                               const SolverOptions& opts = {});

struct KDiagnostics {
    // Largest k increment along clamped parent edges; the compensator is
    // non-increasing, so anything above rounding noise is a defect.
    double max_positive_increment = 0.0;
    // Largest one-step residual of the compensated dynamics under the
    // worst-case volatility choice; zero for an exact scheme.
    double max_martingale_residual = 0.0;
};

// Re-derives both k diagnostics of a solution from its stored fields. The
// frozen paths must be the ones the solve used (nullptr for the live-y mode).
KDiagnostics k_consistency_report(const BsdeSolution& sol, const GeneratorSpec& gen,
                                  int component, const FrozenY* frozen,
                                  const TreeGrid& grid, const VolatilityBand& band);

// Largest k increment along clamped parent edges of an arbitrary k field
// sequence (consecutive slices).
double max_positive_k_increment(const std::vector<LatticeField>& k_fields);

}  // namespace mrgbsde
