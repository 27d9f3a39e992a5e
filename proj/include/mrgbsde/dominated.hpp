#pragma once

#include <memory>
#include <vector>

#include "mrgbsde/lattice.hpp"
#include "mrgbsde/reflection.hpp"

namespace mrgbsde {

// Sublinear expectation dominated by the band supremum. Two variants:
//   g_expectation     the band supremum itself,
//   epsilon_mixture   (1 - eps) * classical(sigma_ref) + eps * band supremum.
// Dominance requires sigma_ref inside the band; that is a property checked by
// check_dominance, not a constructible precondition.
struct DominatedExpectationSpec {
    enum class Variant { g_expectation, epsilon_mixture };

    Variant variant = Variant::g_expectation;
    double epsilon = 1.0;
    double sigma_ref = 0.0;

    static DominatedExpectationSpec g();
    static DominatedExpectationSpec mixture(double epsilon, double sigma_ref);

    // Throws InvalidSpec when epsilon is outside [0, 1] or sigma_ref <= 0 for
    // the mixture variant.
    void validate() const;
};

// Evaluates the dominated expectation of a terminal field.
double tilde_expectation(const LatticeField& terminal,
                         const DominatedExpectationSpec& spec, const TreeGrid& grid,
                         const VolatilityBand& band);

class EpsilonMixtureBackend final : public ExpectationBackend {
public:
    EpsilonMixtureBackend(double epsilon, double sigma_ref);
    double expect(const LatticeField& terminal, const TreeGrid& grid,
                  const VolatilityBand& band) const override;
    std::string name() const override { return "epsilon_mixture"; }

    double epsilon() const { return epsilon_; }
    double sigma_ref() const { return sigma_ref_; }

private:
    double epsilon_ = 1.0;
    double sigma_ref_ = 0.0;
};

std::unique_ptr<ExpectationBackend> make_backend(const DominatedExpectationSpec& spec);

struct DominanceReport {
    // max over probes of E~[X] - E~[Y] - E^[X - Y]; <= 0 means dominated.
    double max_dominance_violation = 0.0;
    // max violation of the sandwich -E^[-X] <= -E~[-X] <= E~[X] <= E^[X].
    double max_sandwich_violation = 0.0;
};

// Samples random field pairs on the grid's terminal slice and measures both
// dominance inequalities against the band supremum.
DominanceReport check_dominance(const DominatedExpectationSpec& spec,
                                const TreeGrid& grid, const VolatilityBand& band,
                                int probes, unsigned seed);

// Projection of dominated means; same minimal-norm closed form, applied to
// means produced by the dominated expectation.
std::vector<double> project_l_tilde(const std::vector<double>& tilde_means,
                                    const Weights& weights);

}  // namespace mrgbsde
