#pragma once

#include <utility>
#include <vector>

#include "mrgbsde/dominated.hpp"
#include "mrgbsde/gbsde.hpp"
#include "mrgbsde/reflection.hpp"

namespace mrgbsde {

struct PicardConfig {
    // Explicit window length in time units; 0 selects the contraction bound.
    double window_h = 0.0;
    // When true, the full solve may halve the window length and restart if a
    // window fails to converge or contracts too slowly.
    bool adaptive = true;
    double tol = 1e-8;
    int max_iter = 40;
    // Moment order and constant of the contraction estimate; beta must be > 2.
    double beta = 3.0;
    double c_beta = 1.0;
    // Constant initial guess for the frozen paths.
    double start_value = 0.0;
    // Largest acceptable asymptotic ratio of successive iterate differences.
    double ratio_bound = 0.6;
    int max_halvings = 6;
    double constraint_tol = 1e-8;
    double flatness_tol = 1e-6;
    int constraint_stride = 1;
    SolverOptions inner;
};

struct IterationTrace {
    std::vector<double> diffs;    // d_i = sup |Y_{i+1} - Y_i| over slices/nodes/components
    std::vector<double> ratios;   // d_{i+1} / d_i
    std::vector<double> wall_ms;  // per-iteration wall time
    bool converged = false;

    int iterations() const { return static_cast<int>(diffs.size()); }
    // Largest ratio observed once the differences dropped below a tenth of
    // the starting one; conservative contraction estimate.
    double asymptotic_ratio() const;
};

struct MaxIterExceeded : Error {
    MaxIterExceeded(const std::string& message, IterationTrace t)
        : Error(message), trace(std::move(t)) {}
    IterationTrace trace;
};

// Reflected solution on a slice range; y/z/k indexed [component][slice - start].
struct MrSolution {
    int start_slice = 0;
    std::vector<std::vector<LatticeField>> y;
    std::vector<std::vector<LatticeField>> z;
    std::vector<std::vector<LatticeField>> k;
    ReflectionPath r;
    std::vector<double> constraint_path;
    double flatness_residual = 0.0;

    int dimension() const { return static_cast<int>(y.size()); }
    int slice_count() const {
        return y.empty() ? 0 : static_cast<int>(y.front().size());
    }
    int end_slice() const { return start_slice + slice_count() - 1; }
};

// Window contraction bound
//   delta = 2^(1/beta - 2) N^(-1/2) c_beta^(-1/beta) L^(-1)
//           (1 + N^(beta-2) (sum theta^beta)^2 / (sum theta^2)^beta)^(-1/beta),
// clamped to the horizon; L == 0 yields the horizon (any window contracts).
// Throws InvalidConfig when beta <= 2 or c_beta <= 0.
double compute_delta_bound(const PicardConfig& config, const Weights& weights,
                           const GeneratorSpec& gen, double horizon);

// One window of the lattice with its per-component terminal fields.
struct WindowProblem {
    int start_slice = 0;
    int end_slice = 0;
    std::vector<LatticeField> terminal;
};

// One application of the frozen-coefficient map: solve every component with
// y frozen to q, project the means, reflect. Throws
// TerminalConstraintViolated when the window terminal violates the aggregate
// constraint beyond constraint_tol.
MrSolution gamma_map(const FrozenY& q, const WindowProblem& window,
                     const GeneratorSpec& gen, const Weights& weights,
                     const TreeGrid& grid, const VolatilityBand& band,
                     const ExpectationBackend& backend, const PicardConfig& config);

// Iterates gamma_map from the constant start path until the sup-norm
// difference drops to tol (at least two applications). Throws
// MaxIterExceeded with the trace attached.
std::pair<MrSolution, IterationTrace> solve_window(const WindowProblem& window,
                                                   const GeneratorSpec& gen,
                                                   const Weights& weights,
                                                   const TreeGrid& grid,
                                                   const VolatilityBand& band,
                                                   const ExpectationBackend& backend,
                                                   const PicardConfig& config);

// Re-derives the k diagnostics of a reflected solution from its own fields:
// clamped-edge increments of k plus the one-step residual of the compensated
// dynamics (reflection increments included) under worst-case volatility.
KDiagnostics mr_k_consistency(const MrSolution& sol, const GeneratorSpec& gen,
                              const TreeGrid& grid, const VolatilityBand& band);

struct FullSolveReport {
    MrSolution solution;
    std::vector<IterationTrace> traces;  // one per window, rightmost first
    double accepted_window_h = 0.0;
    int window_count = 0;
    int halvings = 0;
    KDiagnostics k_diag;
    double max_constraint_residual = 0.0;
    double mean_modulus = 0.0;
};

// Full-horizon solve: split [0, horizon] into contraction windows, solve them
// right to left with terminal handoff, then stitch fields, reflection and
// compensator offsets into one global solution. The returned constraint path
// is recomputed from the stitched fields through the backend.
FullSolveReport solve_full(const std::vector<LatticeField>& terminal,
                           const GeneratorSpec& gen, const Weights& weights,
                           const TreeGrid& grid, const VolatilityBand& band,
                           const PicardConfig& config,
                           const ExpectationBackend& backend);

}  // namespace mrgbsde
