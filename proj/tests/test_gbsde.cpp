#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mrgbsde/gbsde.hpp"

using namespace mrgbsde;

namespace {

GeneratorSpec scalar_gen(GeneratorSpec::Driver f, double L,
                         GeneratorSpec::Driver g = nullptr) {
    GeneratorSpec gen;
    gen.f.push_back(std::move(f));
    if (g) gen.g.push_back(std::move(g));
    gen.lipschitz_L = L;
    return gen;
}

LatticeField payoff_field(const TreeGrid& grid, double (*phi)(double)) {
    LatticeField field(grid.n_steps);
    for (int j = -grid.n_steps; j <= grid.n_steps; ++j) {
        field.value(j) = phi(grid.position(j));
    }
    return field;
}

}  // namespace

TEST_CASE("constant terminal with zero drivers solves trivially") {
    const VolatilityBand band(0.5, 1.0);
    const TreeGrid grid(1.0, 40, band);
    const auto gen = scalar_gen([](double, double, std::span<const double>, double) {
        return 0.0;
    }, 0.0);

    const auto sol = solve_unreflected(LatticeField::constant(grid.n_steps, 2.0), gen,
                                       0, nullptr, 0, grid, band);
    for (const auto& field : sol.y) {
        for (double v : field.values) CHECK(v == 2.0);
    }
    for (const auto& field : sol.z) {
        for (double v : field.values) CHECK(v == 0.0);
    }
    for (const auto& field : sol.k) {
        for (double v : field.values) CHECK(v == 0.0);
    }

    const auto diag = k_consistency_report(sol, gen, 0, nullptr, grid, band);
    CHECK(diag.max_positive_increment == 0.0);
    CHECK(diag.max_martingale_residual == 0.0);
}

TEST_CASE("linear y drift matches the implicit product closed form") {
    const VolatilityBand band(0.5, 1.0);
    const TreeGrid grid(1.0, 400, band);
    const double a = 0.5;
    const auto gen = scalar_gen(
        [a](double, double, std::span<const double> y, double) { return a * y[0]; }, a);

    const auto terminal = payoff_field(grid, [](double x) { return x * x; });
    const auto sol = solve_unreflected(terminal, gen, 0, nullptr, 0, grid, band);
    const double y00 = sol.y.front().value(0);

    // The implicit node update pulls the positive factor 1/(1 - a dt) through
    // the zero-driver expectation, so the root value is an exact product.
    const double base = expectation(terminal, grid, band);
    const double product = base * std::pow(1.0 - a * grid.dt, -grid.n_steps);
    CHECK_LE(std::abs(y00 - product), 1e-10);
    // And the product approximates the exponential growth factor.
    CHECK_LE(std::abs(y00 - std::exp(0.5)), 0.03);
}

TEST_CASE("degenerate band agrees with an independent classical solver") {
    const VolatilityBand band(0.7, 0.7);
    const TreeGrid grid(1.0, 100, band);
    const auto gen = scalar_gen(
        [](double t, double, std::span<const double> y, double z) {
            return 0.4 * y[0] - 0.3 * z + t;
        },
        0.7);

    const auto terminal = payoff_field(grid, [](double x) { return std::abs(x); });
    const auto sol = solve_unreflected(terminal, gen, 0, nullptr, 0, grid, band);

    const auto oracle = testutil::classical_bsde_oracle(
        terminal.values, grid.n_steps, grid.dt, grid.dx, 0.7,
        [](double t, double, double y, double z) { return 0.4 * y - 0.3 * z + t; });

    for (int k = 0; k <= grid.n_steps; ++k) {
        const auto& ours = sol.y[static_cast<std::size_t>(k)].values;
        const auto& theirs = oracle[static_cast<std::size_t>(k)].y;
        CHECK_LE(testutil::sup_abs_diff(ours, theirs), 1e-10);
    }
}

TEST_CASE("comparison: larger terminal gives larger solution") {
    const VolatilityBand band(0.5, 1.0);
    const TreeGrid grid(1.0, 60, band);
    const auto gen = scalar_gen(
        [](double, double, std::span<const double> y, double z) {
            return 0.3 * y[0] - 0.2 * z;
        },
        0.5);

    auto rng = testutil::rng(71);
    const LatticeField hi = testutil::random_field(grid.n_steps, rng);
    LatticeField lo = hi;
    for (double& v : lo.values) v -= std::abs(testutil::uniform(rng, 0.0, 1.5));

    const auto sol_hi = solve_unreflected(hi, gen, 0, nullptr, 0, grid, band);
    const auto sol_lo = solve_unreflected(lo, gen, 0, nullptr, 0, grid, band);
    for (int k = 0; k <= grid.n_steps; ++k) {
        const auto& a = sol_hi.y[static_cast<std::size_t>(k)].values;
        const auto& b = sol_lo.y[static_cast<std::size_t>(k)].values;
        for (std::size_t i = 0; i < a.size(); ++i) CHECK_GE(a[i], b[i] - 1e-10);
    }
}

TEST_CASE("a priori bound and constant-perturbation stability") {
    const VolatilityBand band(0.5, 1.0);
    const TreeGrid grid(1.0, 80, band);
    const double L = 0.5;
    const auto gen = scalar_gen(
        [](double, double, std::span<const double> y, double z) {
            return 0.3 * y[0] - 0.2 * z + 0.7;
        },
        L);

    const auto terminal = payoff_field(grid, [](double x) { return std::abs(x) - 0.5; });
    const auto sol = solve_unreflected(terminal, gen, 0, nullptr, 0, grid, band);

    double max_xi = 0.0;
    for (double v : terminal.values) max_xi = std::max(max_xi, std::abs(v));
    const double f0 = 0.7;  // |f(., 0, 0)|
    const double bound = std::exp(2.0 * L * grid.horizon) *
                         (max_xi + grid.horizon * f0);
    for (const auto& field : sol.y) {
        for (double v : field.values) CHECK_LE(std::abs(v), bound);
    }

    // Shifting f by eps moves y by at most eps * T * e^(2 L T).
    const double eps = 0.25;
    const auto gen_eps = scalar_gen(
        [eps](double, double, std::span<const double> y, double z) {
            return 0.3 * y[0] - 0.2 * z + 0.7 + eps;
        },
        L);
    const auto sol_eps = solve_unreflected(terminal, gen_eps, 0, nullptr, 0, grid, band);
    const double allowance = eps * grid.horizon * std::exp(2.0 * L * grid.horizon);
    for (int k = 0; k <= grid.n_steps; ++k) {
        CHECK_LE(testutil::sup_abs_diff(sol.y[static_cast<std::size_t>(k)].values,
                                        sol_eps.y[static_cast<std::size_t>(k)].values),
                 allowance);
    }
}

TEST_CASE("compensator diagnostics distinguish convex and concave terminals") {
    const VolatilityBand band(0.5, 1.0);
    const TreeGrid grid(1.0, 100, band);
    const auto gen = scalar_gen([](double, double, std::span<const double>, double) {
        return 0.0;
    }, 0.0);

    // Convex terminal: the upper endpoint always wins, k stays identically 0.
    const auto convex = solve_unreflected(payoff_field(grid, [](double x) { return x * x; }),
                                          gen, 0, nullptr, 0, grid, band);
    for (const auto& field : convex.k) {
        for (double v : field.values) CHECK_LE(std::abs(v), 1e-10);
    }
    const auto convex_diag = k_consistency_report(convex, gen, 0, nullptr, grid, band);
    CHECK_LE(convex_diag.max_positive_increment, 1e-12);
    CHECK_LE(convex_diag.max_martingale_residual, 1e-12);

    // Concave terminal: k must strictly decrease somewhere while staying a
    // martingale under the worst-case measure.
    const auto concave = solve_unreflected(
        payoff_field(grid, [](double x) { return -x * x; }), gen, 0, nullptr, 0, grid,
        band);
    double min_k = 0.0;
    for (double v : concave.k.back().values) min_k = std::min(min_k, v);
    CHECK_LT(min_k, -0.1);
    const auto concave_diag = k_consistency_report(concave, gen, 0, nullptr, grid, band);
    CHECK_LE(concave_diag.max_positive_increment, 1e-12);
    CHECK_LE(concave_diag.max_martingale_residual, 1e-8);
    CHECK(concave.k.front().values == std::vector<double>{0.0});
    CHECK_LE(max_positive_k_increment(concave.k), 1e-12);
}

TEST_CASE("frozen paths supply the off-component y arguments") {
    const VolatilityBand band(0.5, 1.0);
    const TreeGrid grid(1.0, 50, band);

    GeneratorSpec gen;
    gen.f.push_back([](double, double, std::span<const double> y, double) {
        return y[1];  // component 0 drifts by the other component's value
    });
    gen.f.push_back([](double, double, std::span<const double>, double) { return 0.0; });
    gen.lipschitz_L = 1.0;

    FrozenY frozen;
    frozen.start_slice = 0;
    frozen.q.resize(2);
    for (int s = 0; s <= grid.n_steps; ++s) {
        frozen.q[0].push_back(LatticeField::constant(s, 0.0));
        frozen.q[1].push_back(LatticeField::constant(s, 3.0));
    }

    const auto sol = solve_unreflected(LatticeField::constant(grid.n_steps, 0.0), gen, 0,
                                       &frozen, 0, grid, band);
    // y_t = 3 (T - t) exactly: constant drift integrates slice by slice.
    for (int k = 0; k <= grid.n_steps; ++k) {
        const double want = 3.0 * (grid.horizon - grid.time(k));
        for (double v : sol.y[static_cast<std::size_t>(k)].values) {
            CHECK_LE(std::abs(v - want), 1e-12);
        }
    }

    // Wrong arity is rejected.
    FrozenY narrow;
    narrow.start_slice = 0;
    narrow.q.resize(1);
    for (int s = 0; s <= grid.n_steps; ++s) {
        narrow.q[0].push_back(LatticeField::constant(s, 0.0));
    }
    CHECK_THROWS_AS(solve_unreflected(LatticeField::constant(grid.n_steps, 0.0), gen, 0,
                                      &narrow, 0, grid, band),
                    DimensionMismatch);
}

TEST_CASE("stiff drivers without contraction are rejected") {
    const VolatilityBand band(0.5, 1.0);
    const TreeGrid grid(1.0, 10, band);  // dt = 0.1
    const auto gen = scalar_gen(
        [](double, double, std::span<const double> y, double) { return 12.0 * y[0]; },
        12.0);  // L dt = 1.2 >= 1
    CHECK_THROWS_AS(solve_unreflected(LatticeField::constant(grid.n_steps, 1.0), gen, 0,
                                      nullptr, 0, grid, band),
                    NoContraction);
}

TEST_CASE("lipschitz probe flags understated bounds") {
    GeneratorSpec honest;
    honest.f.push_back([](double, double, std::span<const double> y, double z) {
        return 0.4 * y[0] - 0.3 * z;
    });
    honest.lipschitz_L = 0.7;
    CHECK_LE(probe_lipschitz(honest, 1.0, 5.0, 1000, 99), 1e-12);

    GeneratorSpec dishonest = honest;
    dishonest.lipschitz_L = 0.1;
    CHECK_GT(probe_lipschitz(dishonest, 1.0, 5.0, 1000, 99), 0.1);
}
