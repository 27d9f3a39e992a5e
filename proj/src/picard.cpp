#include "mrgbsde/picard.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

#include "mrgbsde/log.hpp"

namespace mrgbsde {

double IterationTrace::asymptotic_ratio() const {
    double worst = 0.0;
    bool found = false;
    for (std::size_t i = 0; i + 1 < diffs.size(); ++i) {
        if (diffs[i] <= 0.1 * diffs.front() && diffs[i] > 1e-13) {
            worst = std::max(worst, diffs[i + 1] / diffs[i]);
            found = true;
        }
    }
    if (!found) return ratios.empty() ? 0.0 : ratios.back();
    return worst;
}

double compute_delta_bound(const PicardConfig& config, const Weights& weights,
                           const GeneratorSpec& gen, double horizon) {
    if (!(config.beta > 2.0)) throw InvalidConfig("beta must exceed 2");
    if (!(config.c_beta > 0.0)) throw InvalidConfig("c_beta must be positive");
    const double big_l = gen.lipschitz_L;
    if (big_l <= 0.0) return horizon;

    const double beta = config.beta;
    const double n = static_cast<double>(weights.dimension());
    double sum_beta = 0.0;
    for (double w : weights.theta) sum_beta += std::pow(w, beta);
    const double sum_sq = weights.sum_sq();
    const double bracket =
        1.0 + std::pow(n, beta - 2.0) * sum_beta * sum_beta / std::pow(sum_sq, beta);
    const double delta = std::pow(2.0, 1.0 / beta - 2.0) / std::sqrt(n) *
                         std::pow(config.c_beta, -1.0 / beta) / big_l *
                         std::pow(bracket, -1.0 / beta);
    return std::min(delta, horizon);
}

namespace {

void validate_window(const WindowProblem& window, const GeneratorSpec& gen,
                     const Weights& weights, const TreeGrid& grid) {
    const int n_comp = gen.dimension();
    if (weights.dimension() != n_comp) {
        throw DimensionMismatch("weights arity differs from generator arity");
    }
    if (static_cast<int>(window.terminal.size()) != n_comp) {
        throw DimensionMismatch("window terminal arity differs from generator arity");
    }
    if (window.start_slice < 0 || window.start_slice >= window.end_slice ||
        window.end_slice > grid.n_steps) {
        throw WindowMisaligned("window slice range is empty or outside the grid");
    }
    for (const auto& field : window.terminal) {
        if (field.slice != window.end_slice) {
            throw DimensionMismatch("window terminal fields must sit on the end slice");
        }
    }
}

double sup_diff(const std::vector<std::vector<LatticeField>>& a,
                const std::vector<std::vector<LatticeField>>& b) {
    double worst = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        for (std::size_t i = 0; i < a[l].size(); ++i) {
            for (std::size_t v = 0; v < a[l][i].values.size(); ++v) {
                worst = std::max(worst, std::abs(a[l][i].values[v] - b[l][i].values[v]));
            }
        }
    }
    return worst;
}

}  // namespace

MrSolution gamma_map(const FrozenY& q, const WindowProblem& window,
                     const GeneratorSpec& gen, const Weights& weights,
                     const TreeGrid& grid, const VolatilityBand& band,
                     const ExpectationBackend& backend, const PicardConfig& config) {
    validate_window(window, gen, weights, grid);
    const int n_comp = gen.dimension();

    double terminal_slack = 0.0;
    for (int l = 0; l < n_comp; ++l) {
        terminal_slack += weights.theta[static_cast<std::size_t>(l)] *
                          backend.expect(negate(window.terminal[static_cast<std::size_t>(l)]),
                                         grid, band);
    }
    if (terminal_slack > config.constraint_tol) {
        throw TerminalConstraintViolated(
            "window terminal violates the aggregate constraint, slack " +
            std::to_string(terminal_slack));
    }

    std::vector<BsdeSolution> base;
    base.reserve(static_cast<std::size_t>(n_comp));
    for (int l = 0; l < n_comp; ++l) {
        base.push_back(solve_unreflected(window.terminal[static_cast<std::size_t>(l)], gen,
                                         l, &q, window.start_slice, grid, band,
                                         config.inner));
    }

    std::vector<std::vector<LatticeField>> raw_y;
    raw_y.reserve(base.size());
    for (auto& sol : base) raw_y.push_back(sol.y);
    const MeanPath means =
        negated_mean_path(raw_y, window.start_slice, grid, band, backend);
    const ReflectionPath reflection = build_reflection(means, weights);
    std::vector<BsdeSolution> shifted = shift_solution(std::move(base), reflection);

    MrSolution out;
    out.start_slice = window.start_slice;
    out.y.resize(static_cast<std::size_t>(n_comp));
    out.z.resize(static_cast<std::size_t>(n_comp));
    out.k.resize(static_cast<std::size_t>(n_comp));
    for (int l = 0; l < n_comp; ++l) {
        out.y[static_cast<std::size_t>(l)] = std::move(shifted[static_cast<std::size_t>(l)].y);
        out.z[static_cast<std::size_t>(l)] = std::move(shifted[static_cast<std::size_t>(l)].z);
        out.k[static_cast<std::size_t>(l)] = std::move(shifted[static_cast<std::size_t>(l)].k);
    }
    out.r = reflection;

    // Constraint path of the reflected solution via the shift identity:
    // E[-(ybar + shift)] = E[-ybar] - shift, so no extra backward passes.
    const std::size_t count = means.m.size();
    out.constraint_path.assign(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        double s = 0.0;
        for (int l = 0; l < n_comp; ++l) {
            s += weights.theta[static_cast<std::size_t>(l)] *
                 (means.m[i][static_cast<std::size_t>(l)] -
                  reflection.shift[i][static_cast<std::size_t>(l)]);
        }
        out.constraint_path[i] = s;
    }
    out.flatness_residual = check_flatness(out.constraint_path, reflection);
    return out;
}

std::pair<MrSolution, IterationTrace> solve_window(const WindowProblem& window,
                                                   const GeneratorSpec& gen,
                                                   const Weights& weights,
                                                   const TreeGrid& grid,
                                                   const VolatilityBand& band,
                                                   const ExpectationBackend& backend,
                                                   const PicardConfig& config) {
    validate_window(window, gen, weights, grid);
    if (config.tol <= 0.0 || config.max_iter < 1) {
        throw InvalidConfig("picard needs tol > 0 and max_iter >= 1");
    }
    const int n_comp = gen.dimension();
    const int count = window.end_slice - window.start_slice + 1;

    FrozenY q;
    q.start_slice = window.start_slice;
    q.q.assign(static_cast<std::size_t>(n_comp), {});
    for (auto& comp : q.q) {
        comp.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            comp.push_back(
                LatticeField::constant(window.start_slice + i, config.start_value));
        }
    }

    IterationTrace trace;
    MrSolution current;
    for (int it = 0; it < config.max_iter; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        current = gamma_map(q, window, gen, weights, grid, band, backend, config);
        const auto t1 = std::chrono::steady_clock::now();
        const double d = sup_diff(current.y, q.q);
        if (!trace.diffs.empty() && trace.diffs.back() > 0.0) {
            trace.ratios.push_back(d / trace.diffs.back());
        }
        trace.diffs.push_back(d);
        trace.wall_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
        q.q = current.y;
        if (trace.iterations() >= 2 && d <= config.tol) {
            trace.converged = true;
            return {std::move(current), std::move(trace)};
        }
    }
    throw MaxIterExceeded("picard iteration did not reach tol within max_iter",
                          std::move(trace));
}

KDiagnostics mr_k_consistency(const MrSolution& sol, const GeneratorSpec& gen,
                              const TreeGrid& grid, const VolatilityBand& band) {
    KDiagnostics diag;
    const int n_comp = sol.dimension();
    const double c = grid.dt / (2.0 * grid.dx * grid.dx);
    const double lo = band.low_sq();
    const double hi = band.high_sq();
    std::vector<double> yvec(static_cast<std::size_t>(n_comp), 0.0);

    double worst_inc = -1e300;
    double worst_res = 0.0;
    for (int l = 0; l < n_comp; ++l) {
        worst_inc =
            std::max(worst_inc, max_positive_k_increment(sol.k[static_cast<std::size_t>(l)]));
        const auto& yl = sol.y[static_cast<std::size_t>(l)];
        const auto& zl = sol.z[static_cast<std::size_t>(l)];
        for (std::size_t i = 0; i + 1 < yl.size(); ++i) {
            const int k = sol.start_slice + static_cast<int>(i);
            const double t = grid.time(k);
            const double dr = sol.r.r[i + 1][static_cast<std::size_t>(l)] -
                              sol.r.r[i][static_cast<std::size_t>(l)];
            for (int j = -k; j <= k; ++j) {
                const double x = grid.position(j);
                const double mid = yl[i + 1].value(j);
                const double d2 = yl[i + 1].value(j + 1) + yl[i + 1].value(j - 1) - 2.0 * mid;
                for (int l2 = 0; l2 < n_comp; ++l2) {
                    yvec[static_cast<std::size_t>(l2)] =
                        sol.y[static_cast<std::size_t>(l2)][i].value(j);
                }
                const double fv = gen.f_at(l, t, x, yvec, zl[i].value(j));
                const double gv = gen.g_at(l, t, x, yvec, zl[i].value(j));
                const double at_lo = mid + lo * c * d2 + (fv + lo * gv) * grid.dt;
                const double at_hi = mid + hi * c * d2 + (fv + hi * gv) * grid.dt;
                const double residual = std::max(at_lo, at_hi) + dr - yl[i].value(j);
                worst_res = std::max(worst_res, std::abs(residual));
            }
        }
    }
    diag.max_positive_increment = worst_inc == -1e300 ? 0.0 : worst_inc;
    diag.max_martingale_residual = worst_res;
    return diag;
}

namespace {

struct WindowSplit {
    std::vector<std::pair<int, int>> ranges;  // right to left: [(a, b), ...]
};

WindowSplit split_windows(int n_steps, int window_slices) {
    WindowSplit split;
    int b = n_steps;
    while (b > 0) {
        const int a = std::max(0, b - window_slices);
        split.ranges.emplace_back(a, b);
        b = a;
    }
    return split;
}

int window_slices_from_config(const PicardConfig& config, const Weights& weights,
                              const GeneratorSpec& gen, const TreeGrid& grid) {
    if (config.window_h > 0.0) {
        const double ratio = config.window_h / grid.dt;
        const int m = static_cast<int>(std::lround(ratio));
        if (m < 1 ||
            std::abs(m * grid.dt - config.window_h) > 1e-9 * std::max(1.0, grid.horizon)) {
            throw WindowMisaligned("window_h is not an integer number of slices");
        }
        return std::min(m, grid.n_steps);
    }
    const double delta = compute_delta_bound(config, weights, gen, grid.horizon);
    const int m = static_cast<int>(std::floor(delta / grid.dt + 1e-12));
    return std::clamp(m, 1, grid.n_steps);
}

struct StitchResult {
    MrSolution solution;
    double mean_modulus = 0.0;
};

// Solutions arrive right to left; the global fields are window fields plus
// offsets accumulated from every earlier (left-in-time) window: scalar
// offsets for r, clamped-parent field extension for k.
StitchResult stitch(std::vector<MrSolution>&& wins, const Weights& weights,
                    const TreeGrid& grid, const VolatilityBand& band,
                    const ExpectationBackend& backend, const PicardConfig& config) {
    std::reverse(wins.begin(), wins.end());  // now left to right
    const int n_comp = wins.front().dimension();
    const int n = grid.n_steps;

    MrSolution global;
    global.start_slice = 0;
    global.y.assign(static_cast<std::size_t>(n_comp), {});
    global.z.assign(static_cast<std::size_t>(n_comp), {});
    global.k.assign(static_cast<std::size_t>(n_comp), {});
    for (int l = 0; l < n_comp; ++l) {
        global.y[static_cast<std::size_t>(l)].reserve(static_cast<std::size_t>(n) + 1);
        global.z[static_cast<std::size_t>(l)].reserve(static_cast<std::size_t>(n) + 1);
        global.k[static_cast<std::size_t>(l)].reserve(static_cast<std::size_t>(n) + 1);
    }
    global.r.start_slice = 0;
    global.r.r.assign(static_cast<std::size_t>(n) + 1, std::vector<double>(n_comp, 0.0));
    global.r.shift.assign(static_cast<std::size_t>(n) + 1,
                          std::vector<double>(n_comp, 0.0));
    global.r.r_norm.assign(static_cast<std::size_t>(n) + 1, 0.0);

    std::vector<double> r_offset(static_cast<std::size_t>(n_comp), 0.0);
    double r_norm_offset = 0.0;
    std::vector<LatticeField> k_offset(static_cast<std::size_t>(n_comp), LatticeField(0));

    for (std::size_t w = 0; w < wins.size(); ++w) {
        MrSolution& win = wins[w];
        const int a = win.start_slice;
        const int count = win.slice_count();
        const bool last = w + 1 == wins.size();
        const int upto = last ? count : count - 1;  // boundary slice owned by the right window
        for (int i = 0; i < upto; ++i) {
            const int s = a + i;
            for (int l = 0; l < n_comp; ++l) {
                LatticeField kf = win.k[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
                const LatticeField& off = k_offset[static_cast<std::size_t>(l)];
                for (int j = -s; j <= s; ++j) {
                    kf.value(j) += off.value(std::clamp(j, -off.slice, off.slice));
                }
                global.k[static_cast<std::size_t>(l)].push_back(std::move(kf));
                global.y[static_cast<std::size_t>(l)].push_back(
                    win.y[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)]);
                global.z[static_cast<std::size_t>(l)].push_back(
                    win.z[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)]);
            }
            for (int l = 0; l < n_comp; ++l) {
                global.r.r[static_cast<std::size_t>(s)][static_cast<std::size_t>(l)] =
                    r_offset[static_cast<std::size_t>(l)] +
                    win.r.r[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)];
                global.r.shift[static_cast<std::size_t>(s)][static_cast<std::size_t>(l)] =
                    win.r.shift[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)];
            }
            global.r.r_norm[static_cast<std::size_t>(s)] =
                r_norm_offset + win.r.r_norm[static_cast<std::size_t>(i)];
        }
        if (!last) {
            // carry the window's terminal reflection and compensator forward
            const std::size_t tail = static_cast<std::size_t>(count - 1);
            for (int l = 0; l < n_comp; ++l) {
                r_offset[static_cast<std::size_t>(l)] +=
                    win.r.r[tail][static_cast<std::size_t>(l)];
                LatticeField ext = win.k[static_cast<std::size_t>(l)][tail];
                const LatticeField& off = k_offset[static_cast<std::size_t>(l)];
                for (int j = -ext.slice; j <= ext.slice; ++j) {
                    ext.value(j) += off.value(std::clamp(j, -off.slice, off.slice));
                }
                k_offset[static_cast<std::size_t>(l)] = std::move(ext);
            }
            r_norm_offset += win.r.r_norm[tail];
        }
    }

    // Independent verification pass over the stitched fields.
    global.constraint_path = check_constraint(global.y, 0, weights, grid, band, backend,
                                              config.constraint_stride);
    StitchResult result;
    if (config.constraint_stride == 1) {
        global.flatness_residual = check_flatness(global.constraint_path, global.r);
    } else {
        double acc = 0.0;
        std::size_t prev = 0;
        std::size_t si = 1;
        for (std::size_t i = static_cast<std::size_t>(config.constraint_stride);
             i < global.r.r_norm.size();
             i += static_cast<std::size_t>(config.constraint_stride), ++si) {
            acc += global.constraint_path[si - 1] *
                   (global.r.r_norm[i] - global.r.r_norm[prev]);
            prev = i;
        }
        if (prev != global.r.r_norm.size() - 1) {
            acc += global.constraint_path[si - 1] *
                   (global.r.r_norm.back() - global.r.r_norm[prev]);
        }
        global.flatness_residual = acc;
    }
    for (std::size_t i = 1; i < global.constraint_path.size(); ++i) {
        result.mean_modulus =
            std::max(result.mean_modulus,
                     std::abs(global.constraint_path[i] - global.constraint_path[i - 1]));
    }
    result.solution = std::move(global);
    return result;
}

}  // namespace

FullSolveReport solve_full(const std::vector<LatticeField>& terminal,
                           const GeneratorSpec& gen, const Weights& weights,
                           const TreeGrid& grid, const VolatilityBand& band,
                           const PicardConfig& config,
                           const ExpectationBackend& backend) {
    const int n_comp = gen.dimension();
    if (static_cast<int>(terminal.size()) != n_comp || weights.dimension() != n_comp) {
        throw DimensionMismatch("terminal/weights arity differs from generator arity");
    }
    for (const auto& field : terminal) {
        if (field.slice != grid.n_steps) {
            throw DimensionMismatch("terminal fields must sit on the last slice");
        }
    }

    int window_slices = window_slices_from_config(config, weights, gen, grid);
    int halvings = 0;

    for (;;) {
        std::vector<MrSolution> wins;
        std::vector<IterationTrace> traces;
        bool retry = false;
        try {
            const WindowSplit split = split_windows(grid.n_steps, window_slices);
            std::vector<LatticeField> handoff = terminal;
            for (const auto& [a, b] : split.ranges) {
                WindowProblem problem{a, b, handoff};
                auto [sol, trace] =
                    solve_window(problem, gen, weights, grid, band, backend, config);
                handoff.clear();
                for (int l = 0; l < n_comp; ++l) {
                    handoff.push_back(sol.y[static_cast<std::size_t>(l)].front());
                }
                wins.push_back(std::move(sol));
                traces.push_back(std::move(trace));
            }
        } catch (const MaxIterExceeded&) {
            if (!config.adaptive || window_slices == 1 || halvings >= config.max_halvings) {
                throw;
            }
            retry = true;
        }
        if (!retry && config.adaptive) {
            double worst_ratio = 0.0;
            for (const auto& trace : traces) {
                worst_ratio = std::max(worst_ratio, trace.asymptotic_ratio());
            }
            if (worst_ratio > config.ratio_bound && window_slices > 1 &&
                halvings < config.max_halvings) {
                log::info("window ratio " + std::to_string(worst_ratio) +
                          " above bound, halving the window");
                retry = true;
            }
        }
        if (retry) {
            window_slices = std::max(1, window_slices / 2);
            ++halvings;
            continue;
        }

        FullSolveReport report;
        report.window_count = static_cast<int>(wins.size());
        report.halvings = halvings;
        report.accepted_window_h = window_slices * grid.dt;
        report.traces = std::move(traces);
        StitchResult stitched =
            stitch(std::move(wins), weights, grid, band, backend, config);
        report.solution = std::move(stitched.solution);
        report.mean_modulus = stitched.mean_modulus;
        report.k_diag = mr_k_consistency(report.solution, gen, grid, band);
        double worst = -1e300;
        for (double s : report.solution.constraint_path) worst = std::max(worst, s);
        report.max_constraint_residual = worst;
        return report;
    }
}

}  // namespace mrgbsde
