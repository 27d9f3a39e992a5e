#include "mrgbsde/gbsde.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mrgbsde {

double GeneratorSpec::f_at(int l, double t, double x, std::span<const double> y,
                           double z) const {
    return f[static_cast<std::size_t>(l)](t, x, y, z);
}

double GeneratorSpec::g_at(int l, double t, double x, std::span<const double> y,
                           double z) const {
    if (g.empty()) return 0.0;
    return g[static_cast<std::size_t>(l)](t, x, y, z);
}

double probe_lipschitz(const GeneratorSpec& gen, double horizon, double box,
                       int probes, unsigned seed) {
    const int n = gen.dimension();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> coord(-box, box);

    std::vector<double> y1(static_cast<std::size_t>(n));
    std::vector<double> y2(static_cast<std::size_t>(n));
    double worst = -1e300;
    for (int p = 0; p < probes; ++p) {
        const double t = unit(rng) * horizon;
        const double x = coord(rng);
        double dist_sq = 0.0;
        for (int i = 0; i < n; ++i) {
            y1[static_cast<std::size_t>(i)] = coord(rng);
            y2[static_cast<std::size_t>(i)] = coord(rng);
            const double d = y1[static_cast<std::size_t>(i)] - y2[static_cast<std::size_t>(i)];
            dist_sq += d * d;
        }
        const double z1 = coord(rng);
        const double z2 = coord(rng);
        const double dist = std::sqrt(dist_sq) + std::abs(z1 - z2);
        for (int l = 0; l < n; ++l) {
            const double df = std::abs(gen.f_at(l, t, x, y1, z1) - gen.f_at(l, t, x, y2, z2));
            const double dg = std::abs(gen.g_at(l, t, x, y1, z1) - gen.g_at(l, t, x, y2, z2));
            worst = std::max(worst, df + dg - gen.lipschitz_L * dist);
        }
    }
    return worst;
}

int FrozenY::end_slice() const {
    if (q.empty() || q.front().empty()) return start_slice - 1;
    return start_slice + static_cast<int>(q.front().size()) - 1;
}

void FrozenY::require_cover(int dimension, int start, int end) const {
    if (static_cast<int>(q.size()) != dimension) {
        throw DimensionMismatch("frozen path component count mismatch");
    }
    for (const auto& comp : q) {
        if (static_cast<int>(comp.size()) != static_cast<int>(q.front().size())) {
            throw DimensionMismatch("frozen path ragged slice coverage");
        }
    }
    if (start_slice > start || end_slice() < end) {
        throw DimensionMismatch("frozen path does not cover the solve range");
    }
    for (const auto& comp : q) {
        for (std::size_t i = 0; i < comp.size(); ++i) {
            if (comp[i].slice != start_slice + static_cast<int>(i)) {
                throw DimensionMismatch("frozen path slice indices out of order");
            }
        }
    }
}

void FrozenY::at(int slice, int j, std::span<double> out) const {
    const std::size_t idx = static_cast<std::size_t>(slice - start_slice);
    for (std::size_t l = 0; l < q.size(); ++l) out[l] = q[l][idx].value(j);
}

namespace {

// z on slice k from the next slice's field; interior nodes always exist on
// the larger next slice.
LatticeField gradient_from_next(const LatticeField& next, double dx) {
    const int k = next.slice - 1;
    LatticeField out(k);
    for (int j = -k; j <= k; ++j) {
        out.value(j) = (next.value(j + 1) - next.value(j - 1)) / (2.0 * dx);
    }
    return out;
}

// z on the terminal slice itself: central differences inside, one-sided at
// the two boundary nodes; a single root node has zero gradient.
LatticeField gradient_same_slice(const LatticeField& field, double dx) {
    const int k = field.slice;
    LatticeField out(k);
    if (k == 0) return out;
    for (int j = -k + 1; j <= k - 1; ++j) {
        out.value(j) = (field.value(j + 1) - field.value(j - 1)) / (2.0 * dx);
    }
    out.value(-k) = (field.value(-k + 1) - field.value(-k)) / dx;
    out.value(k) = (field.value(k) - field.value(k - 1)) / dx;
    return out;
}

inline int clamp_node(int j, int slice) { return std::clamp(j, -slice, slice); }

}  // namespace

BsdeSolution solve_unreflected(const LatticeField& terminal, const GeneratorSpec& gen,
                               int component, const FrozenY* frozen, int start_slice,
                               const TreeGrid& grid, const VolatilityBand& band,
                               const SolverOptions& opts) {
    const int n_comp = gen.dimension();
    if (component < 0 || component >= n_comp) {
        throw DimensionMismatch("component index outside the generator arity");
    }
    if (!gen.g.empty() && static_cast<int>(gen.g.size()) != n_comp) {
        throw DimensionMismatch("g arity differs from f arity");
    }
    if (start_slice < 0 || start_slice > terminal.slice || terminal.slice > grid.n_steps) {
        throw DimensionMismatch("solve range outside the grid");
    }
    grid.require_cfl(band);
    if (gen.lipschitz_L * grid.dt >= 1.0) {
        throw NoContraction("lipschitz_L * dt >= 1: refine the grid");
    }
    if (frozen) frozen->require_cover(n_comp, start_slice, terminal.slice);

    const int b = terminal.slice;
    const int count = b - start_slice + 1;
    BsdeSolution sol;
    sol.start_slice = start_slice;
    sol.y.assign(static_cast<std::size_t>(count), LatticeField(0));
    sol.z.assign(static_cast<std::size_t>(count), LatticeField(0));
    sol.k.assign(static_cast<std::size_t>(count), LatticeField(0));

    auto idx = [start_slice](int slice) {
        return static_cast<std::size_t>(slice - start_slice);
    };
    sol.y[idx(b)] = terminal;
    sol.z[idx(b)] = gradient_same_slice(terminal, grid.dx);

    const double c = grid.dt / (2.0 * grid.dx * grid.dx);
    const double lo = band.low_sq();
    const double hi = band.high_sq();
    std::vector<double> yvec(static_cast<std::size_t>(n_comp), 0.0);

    for (int k = b - 1; k >= start_slice; --k) {
        const LatticeField& next = sol.y[idx(k + 1)];
        LatticeField yk(k);
        LatticeField zk = gradient_from_next(next, grid.dx);
        const double t = grid.time(k);
        for (int j = -k; j <= k; ++j) {
            const double x = grid.position(j);
            const double mid = next.value(j);
            const double d2 = next.value(j + 1) + next.value(j - 1) - 2.0 * mid;
            const double zval = zk.value(j);
            if (frozen) frozen->at(k, j, yvec);
            double ycur = mid;
            for (int it = 0; it < opts.max_inner_iter; ++it) {
                if (!frozen) {
                    std::fill(yvec.begin(), yvec.end(), 0.0);
                    yvec[static_cast<std::size_t>(component)] = ycur;
                }
                const double fv = gen.f_at(component, t, x, yvec, zval);
                const double gv = gen.g_at(component, t, x, yvec, zval);
                const double at_lo = mid + lo * c * d2 + (fv + lo * gv) * grid.dt;
                const double at_hi = mid + hi * c * d2 + (fv + hi * gv) * grid.dt;
                const double ynext = std::max(at_lo, at_hi);
                const bool done = std::abs(ynext - ycur) <= opts.inner_tol;
                ycur = ynext;
                if (done) break;
            }
            yk.value(j) = ycur;
        }
        sol.y[idx(k)] = std::move(yk);
        sol.z[idx(k)] = std::move(zk);
    }

    // Compensator, forward from zero. The increment on slice k compares the
    // upper-volatility expectation of the next slice against the computed
    // value; it is <= 0 because the value takes the supremum. Children
    // inherit from the clamped parent node.
    sol.k[0] = LatticeField(start_slice);
    for (int k = start_slice; k < b; ++k) {
        const LatticeField& next = sol.y[idx(k + 1)];
        const LatticeField& ykf = sol.y[idx(k)];
        const LatticeField& zkf = sol.z[idx(k)];
        const LatticeField& kk = sol.k[idx(k)];
        const double t = grid.time(k);
        LatticeField inc(k);
        for (int j = -k; j <= k; ++j) {
            const double x = grid.position(j);
            const double mid = next.value(j);
            const double d2 = next.value(j + 1) + next.value(j - 1) - 2.0 * mid;
            if (frozen) {
                frozen->at(k, j, yvec);
            } else {
                std::fill(yvec.begin(), yvec.end(), 0.0);
                yvec[static_cast<std::size_t>(component)] = ykf.value(j);
            }
            const double fv = gen.f_at(component, t, x, yvec, zkf.value(j));
            const double gv = gen.g_at(component, t, x, yvec, zkf.value(j));
            const double e_hi = mid + hi * c * d2;
            inc.value(j) = e_hi - ykf.value(j) + (fv + hi * gv) * grid.dt;
        }
        LatticeField knext(k + 1);
        for (int j = -(k + 1); j <= k + 1; ++j) {
            const int p = clamp_node(j, k);
            knext.value(j) = kk.value(p) + inc.value(p);
        }
        sol.k[idx(k + 1)] = std::move(knext);
    }
    return sol;
}

KDiagnostics k_consistency_report(const BsdeSolution& sol, const GeneratorSpec& gen,
                                  int component, const FrozenY* frozen,
                                  const TreeGrid& grid, const VolatilityBand& band) {
    KDiagnostics diag;
    diag.max_positive_increment = max_positive_k_increment(sol.k);

    const int n_comp = gen.dimension();
    const double c = grid.dt / (2.0 * grid.dx * grid.dx);
    const double lo = band.low_sq();
    const double hi = band.high_sq();
    std::vector<double> yvec(static_cast<std::size_t>(n_comp), 0.0);
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < sol.y.size(); ++i) {
        const int k = sol.start_slice + static_cast<int>(i);
        const LatticeField& next = sol.y[i + 1];
        const double t = grid.time(k);
        for (int j = -k; j <= k; ++j) {
            const double x = grid.position(j);
            const double mid = next.value(j);
            const double d2 = next.value(j + 1) + next.value(j - 1) - 2.0 * mid;
            if (frozen) {
                frozen->at(k, j, yvec);
            } else {
                std::fill(yvec.begin(), yvec.end(), 0.0);
                yvec[static_cast<std::size_t>(component)] = sol.y[i].value(j);
            }
            const double fv = gen.f_at(component, t, x, yvec, sol.z[i].value(j));
            const double gv = gen.g_at(component, t, x, yvec, sol.z[i].value(j));
            const double at_lo = mid + lo * c * d2 + (fv + lo * gv) * grid.dt;
            const double at_hi = mid + hi * c * d2 + (fv + hi * gv) * grid.dt;
            const double residual = std::max(at_lo, at_hi) - sol.y[i].value(j);
            worst = std::max(worst, std::abs(residual));
        }
    }
    diag.max_martingale_residual = worst;
    return diag;
}

double max_positive_k_increment(const std::vector<LatticeField>& k_fields) {
    double worst = -1e300;
    for (std::size_t i = 0; i + 1 < k_fields.size(); ++i) {
        const int k = k_fields[i].slice;
        const LatticeField& cur = k_fields[i];
        const LatticeField& next = k_fields[i + 1];
        for (int j = -next.slice; j <= next.slice; ++j) {
            worst = std::max(worst, next.value(j) - cur.value(clamp_node(j, k)));
        }
    }
    return worst == -1e300 ? 0.0 : worst;
}

}  // namespace mrgbsde
