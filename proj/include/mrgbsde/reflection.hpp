#pragma once

#include <vector>

#include "mrgbsde/gbsde.hpp"
#include "mrgbsde/lattice.hpp"

namespace mrgbsde {

// Nonnegative aggregation weights summing to one.
struct Weights {
    std::vector<double> theta;

    explicit Weights(std::vector<double> theta_values);

    int dimension() const { return static_cast<int>(theta.size()); }
    double sum_sq() const;
};

// Aggregate slack of a candidate vector x against the component means:
// h = -sum_l theta_l x_l + sum_l theta_l means_l. Feasibility is h <= 0.
double h_value(const std::vector<double>& x, const std::vector<double>& means,
               const Weights& weights);

// Minimal-Euclidean-norm vector x with h_value(x, means) <= 0:
// x_l = theta_l * (sum theta means)^+ / sum theta^2.
std::vector<double> project_l(const std::vector<double>& means, const Weights& weights);

// Euclidean norm of project_l: (sum theta means)^+ / sqrt(sum theta^2).
double projection_norm(const std::vector<double>& means, const Weights& weights);

// Deterministic per-slice means, m[i][l] for slice start_slice + i.
struct MeanPath {
    int start_slice = 0;
    std::vector<std::vector<double>> m;

    int slice_count() const { return static_cast<int>(m.size()); }
};

// Expected means of the negated fields: m[i][l] = backend(-y[l][i]).
MeanPath negated_mean_path(const std::vector<std::vector<LatticeField>>& y,
                           int start_slice, const TreeGrid& grid,
                           const VolatilityBand& band,
                           const ExpectationBackend& backend);

// Largest jump of the aggregated mean between adjacent slices; a continuity
// diagnostic, not a guarantee.
double mean_path_modulus(const MeanPath& means, const Weights& weights);

// Deterministic reflection data on a slice range.
// shift[i][l] = running future sup of the projection, r = its accumulated
// left-to-right increments: r[i][l] = shift[0][l] - shift[i][l].
struct ReflectionPath {
    int start_slice = 0;
    std::vector<std::vector<double>> r;
    std::vector<std::vector<double>> shift;
    std::vector<double> r_norm;

    int slice_count() const { return static_cast<int>(r.size()); }
};

// Builds the minimal deterministic reflection: project each slice's means,
// then take the right-to-left running supremum per component. r starts at
// zero and is componentwise non-decreasing.
ReflectionPath build_reflection(const MeanPath& means, const Weights& weights);

// Adds the per-slice deterministic shift to each component's y fields;
// z and k are unchanged. Throws DimensionMismatch on misaligned inputs.
std::vector<BsdeSolution> shift_solution(std::vector<BsdeSolution> base,
                                         const ReflectionPath& reflection);

// Aggregate constraint path s(t) = sum_l theta_l E[-y_l(t)] evaluated through
// the injected backend on every stride-th slice (plus the last one).
// Feasibility of the reflected solution is s(t) <= 0 up to tolerance.
std::vector<double> check_constraint(const std::vector<std::vector<LatticeField>>& y,
                                     int start_slice, const Weights& weights,
                                     const TreeGrid& grid, const VolatilityBand& band,
                                     const ExpectationBackend& backend, int stride = 1);

// Left-endpoint Stieltjes sum of the constraint path against the reflection
// norm increments: sum_k s(t_k) (|r|_{k+1} - |r|_k). Zero means the
// reflection acts only while the constraint is tight.
double check_flatness(const std::vector<double>& constraint_path,
                      const ReflectionPath& reflection);

}  // namespace mrgbsde
