#include "mrgbsde/dominated.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mrgbsde {

DominatedExpectationSpec DominatedExpectationSpec::g() {
    return DominatedExpectationSpec{};
}

DominatedExpectationSpec DominatedExpectationSpec::mixture(double epsilon,
                                                           double sigma_ref) {
    DominatedExpectationSpec s;
    s.variant = Variant::epsilon_mixture;
    s.epsilon = epsilon;
    s.sigma_ref = sigma_ref;
    s.validate();
    return s;
}

void DominatedExpectationSpec::validate() const {
    if (variant == Variant::g_expectation) return;
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
        throw InvalidSpec("mixture epsilon must lie in [0, 1]");
    }
    if (!(sigma_ref > 0.0) || !std::isfinite(sigma_ref)) {
        throw InvalidSpec("mixture sigma_ref must be positive");
    }
}

double tilde_expectation(const LatticeField& terminal,
                         const DominatedExpectationSpec& spec, const TreeGrid& grid,
                         const VolatilityBand& band) {
    spec.validate();
    if (spec.variant == DominatedExpectationSpec::Variant::g_expectation) {
        return expectation(terminal, grid, band);
    }
    const double classical = classical_expectation(terminal, grid, spec.sigma_ref);
    const double upper = expectation(terminal, grid, band);
    return (1.0 - spec.epsilon) * classical + spec.epsilon * upper;
}

EpsilonMixtureBackend::EpsilonMixtureBackend(double epsilon, double sigma_ref)
    : epsilon_(epsilon), sigma_ref_(sigma_ref) {
    DominatedExpectationSpec::mixture(epsilon, sigma_ref);
}

double EpsilonMixtureBackend::expect(const LatticeField& terminal, const TreeGrid& grid,
                                     const VolatilityBand& band) const {
    return tilde_expectation(
        terminal, DominatedExpectationSpec::mixture(epsilon_, sigma_ref_), grid, band);
}

std::unique_ptr<ExpectationBackend> make_backend(const DominatedExpectationSpec& spec) {
    spec.validate();
    if (spec.variant == DominatedExpectationSpec::Variant::g_expectation) {
        return std::make_unique<GExpectationBackend>();
    }
    return std::make_unique<EpsilonMixtureBackend>(spec.epsilon, spec.sigma_ref);
}

DominanceReport check_dominance(const DominatedExpectationSpec& spec,
                                const TreeGrid& grid, const VolatilityBand& band,
                                int probes, unsigned seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> val(-1.0, 1.0);

    const int slice = grid.n_steps;
    DominanceReport report;
    report.max_dominance_violation = -1e300;
    report.max_sandwich_violation = -1e300;
    for (int p = 0; p < probes; ++p) {
        LatticeField xf(slice);
        LatticeField yf(slice);
        LatticeField diff(slice);
        for (int j = -slice; j <= slice; ++j) {
            xf.value(j) = val(rng);
            yf.value(j) = val(rng);
            diff.value(j) = xf.value(j) - yf.value(j);
        }
        const double tx = tilde_expectation(xf, spec, grid, band);
        const double ty = tilde_expectation(yf, spec, grid, band);
        const double tnx = tilde_expectation(negate(xf), spec, grid, band);
        const double upper_diff = expectation(diff, grid, band);
        const double upper_x = expectation(xf, grid, band);
        const double lower_x = -expectation(negate(xf), grid, band);

        report.max_dominance_violation =
            std::max(report.max_dominance_violation, tx - ty - upper_diff);
        // -E^[-X] <= -E~[-X] <= E~[X] <= E^[X]
        const double s1 = lower_x - (-tnx);
        const double s2 = (-tnx) - tx;
        const double s3 = tx - upper_x;
        report.max_sandwich_violation =
            std::max({report.max_sandwich_violation, s1, s2, s3});
    }
    return report;
}

std::vector<double> project_l_tilde(const std::vector<double>& tilde_means,
                                    const Weights& weights) {
    return project_l(tilde_means, weights);
}

}  // namespace mrgbsde
