#pragma once

#include <functional>
#include <vector>

#include "mrgbsde/errors.hpp"

namespace mrgbsde {

// Volatility uncertainty interval [sigma_low, sigma_high], 0 < low <= high.
// low == high degenerates to a single classical measure.
struct VolatilityBand {
    double sigma_low = 0.0;
    double sigma_high = 0.0;

    VolatilityBand(double low, double high);

    double low_sq() const { return sigma_low * sigma_low; }
    double high_sq() const { return sigma_high * sigma_high; }
    bool degenerate() const { return sigma_low == sigma_high; }
    bool contains(double sigma) const {
        return sigma >= sigma_low && sigma <= sigma_high;
    }
};

// G(a) = (1/2) * sup over sigma^2 in the band of sigma^2 * a.
double g_function(double a, const VolatilityBand& band);

// Recombining trinomial lattice over [0, horizon]: n_steps slices of length dt,
// slice k holds 2k+1 nodes at positions j*dx for j in [-k, k].
struct TreeGrid {
    double horizon = 0.0;
    int n_steps = 0;
    double dt = 0.0;
    double dx = 0.0;

    // Default spacing dx = sigma_high * sqrt(dt) * sqrt(3/2), which puts the
    // middle-branch weight at 1/3 under the upper volatility.
    TreeGrid(double horizon, int n_steps, const VolatilityBand& band);
    TreeGrid(double horizon, int n_steps, double dx_explicit);

    double time(int k) const { return k * dt; }
    double position(int j) const { return j * dx; }

    // Throws CflViolation unless dx >= sigma_high * sqrt(dt).
    void require_cfl(const VolatilityBand& band) const;
    void require_cfl(double sigma) const;
};

// Values on one slice, indexed by the signed node offset j in [-slice, slice].
struct LatticeField {
    int slice = 0;
    std::vector<double> values;

    explicit LatticeField(int slice_index);
    LatticeField(int slice_index, std::vector<double> node_values);

    static LatticeField constant(int slice_index, double c);

    int node_count() const { return 2 * slice + 1; }
    double value(int j) const { return values[static_cast<std::size_t>(j + slice)]; }
    double& value(int j) { return values[static_cast<std::size_t>(j + slice)]; }
};

LatticeField negate(const LatticeField& field);

// Effective drift at a fixed volatility: (t, y, z, sigma_sq) -> f + sigma_sq * g.
using DriftEvaluator = std::function<double(double t, double y, double z, double sigma_sq)>;

// One backward node update: supremum over the two band endpoints of the
// trinomial expectation of (next_up, next_mid, next_down) plus drift * dt.
// The supremum of an affine function of sigma^2 is attained at an endpoint.
double one_step(double next_up, double next_mid, double next_down,
                const DriftEvaluator& f_eff, double t, double y_guess, double z,
                const TreeGrid& grid, const VolatilityBand& band);

// One zero-drift backward slice: field at slice k+1 -> field at slice k.
LatticeField step_expectation(const LatticeField& next, const TreeGrid& grid,
                              const VolatilityBand& band);
LatticeField step_classical(const LatticeField& next, const TreeGrid& grid,
                            double sigma);

// Sublinear expectation of a terminal field: zero-drift backward recursion to
// the root. The terminal may live on any slice <= n_steps.
double expectation(const LatticeField& terminal, const TreeGrid& grid,
                   const VolatilityBand& band);

// All intermediate fields of the recursion; entry k is the slice-k field,
// entry terminal.slice is the terminal itself.
std::vector<LatticeField> conditional_path(const LatticeField& terminal,
                                           const TreeGrid& grid,
                                           const VolatilityBand& band);

// Single-measure trinomial expectation at a fixed volatility.
double classical_expectation(const LatticeField& terminal, const TreeGrid& grid,
                             double sigma);

// Injected expectation capability: the reflection and window solvers only see
// this interface, so sublinear and dominated variants are interchangeable.
class ExpectationBackend {
public:
    virtual ~ExpectationBackend() = default;
    virtual double expect(const LatticeField& terminal, const TreeGrid& grid,
                          const VolatilityBand& band) const = 0;
    virtual std::string name() const = 0;
};

class GExpectationBackend final : public ExpectationBackend {
public:
    double expect(const LatticeField& terminal, const TreeGrid& grid,
                  const VolatilityBand& band) const override;
    std::string name() const override { return "g_expectation"; }
};

}  // namespace mrgbsde
