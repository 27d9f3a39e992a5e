#include "mrgbsde/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mrgbsde/log.hpp"

namespace mrgbsde {

namespace {

using nlohmann::json;

// Residual-contract tolerances shared by the summary and the exit code.
constexpr double kKIncrementTol = 1e-8;
constexpr double kKMartingaleDtFactor = 5.0;

const json* find(const json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double require_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw SchemaError(path + " must be a number");
    return j.get<double>();
}

int require_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw SchemaError(path + " must be an integer");
    return j.get<int>();
}

std::string require_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw SchemaError(path + " must be a string");
    return j.get<std::string>();
}

std::vector<expr::Expression> parse_expressions(const json& j, const std::string& path,
                                                int n_components) {
    if (!j.is_array() || j.empty()) {
        throw SchemaError(path + " must be a non-empty array of expression strings");
    }
    std::vector<expr::Expression> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string item = path + "[" + std::to_string(i) + "]";
        const std::string source = require_string(j[i], item);
        try {
            out.push_back(expr::Expression::parse(source, n_components));
        } catch (const ParseError& pe) {
            throw ParseError(item + ": " + pe.base, pe.offset);
        }
    }
    return out;
}

std::string error_name(const Error& e) {
    if (dynamic_cast<const CflViolation*>(&e)) return "CflViolation";
    if (dynamic_cast<const NoContraction*>(&e)) return "NoContraction";
    if (dynamic_cast<const DimensionMismatch*>(&e)) return "DimensionMismatch";
    if (dynamic_cast<const TerminalConstraintViolated*>(&e)) return "TerminalConstraintViolated";
    if (dynamic_cast<const MaxIterExceeded*>(&e)) return "MaxIterExceeded";
    if (dynamic_cast<const InvalidConfig*>(&e)) return "InvalidConfig";
    if (dynamic_cast<const InvalidSpec*>(&e)) return "InvalidSpec";
    if (dynamic_cast<const SchemaError*>(&e)) return "SchemaError";
    if (dynamic_cast<const AssumptionViolated*>(&e)) return "AssumptionViolated";
    if (dynamic_cast<const WindowMisaligned*>(&e)) return "WindowMisaligned";
    if (dynamic_cast<const InputError*>(&e)) return "InputError";
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    return "Error";
}

}  // namespace

TreeGrid make_grid(const Scenario& s) {
    if (s.dx) return TreeGrid(s.horizon, s.n_steps, *s.dx);
    return TreeGrid(s.horizon, s.n_steps, s.band);
}

Weights make_weights(const Scenario& s) { return Weights(s.theta); }

GeneratorSpec make_generators(const Scenario& s) {
    GeneratorSpec gen;
    gen.lipschitz_L = s.lipschitz_L;
    for (const auto& ex : s.f) {
        gen.f.push_back([ex](double t, double x, std::span<const double> y, double z) {
            return ex.eval(expr::Env{t, x, z, y});
        });
    }
    for (const auto& ex : s.g) {
        gen.g.push_back([ex](double t, double x, std::span<const double> y, double z) {
            return ex.eval(expr::Env{t, x, z, y});
        });
    }
    return gen;
}

std::vector<LatticeField> make_terminal_fields(const Scenario& s, const TreeGrid& grid) {
    std::vector<LatticeField> fields;
    fields.reserve(s.terminal.size());
    const int n = grid.n_steps;
    for (const auto& ex : s.terminal) {
        LatticeField field(n);
        for (int j = -n; j <= n; ++j) {
            expr::Env env;
            env.t = grid.horizon;
            env.x = grid.position(j);
            field.value(j) = ex.eval(env);
        }
        fields.push_back(std::move(field));
    }
    return fields;
}

Scenario parse_scenario(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("scenario must be a JSON object");

    Scenario s;
    const json* version = find(j, "version");
    if (!version) throw SchemaError("missing field: version");
    s.version = require_int(*version, "version");
    if (s.version != 1) throw SchemaError("unsupported scenario version");

    const json* horizon = find(j, "horizon");
    if (!horizon) throw SchemaError("missing field: horizon");
    s.horizon = require_number(*horizon, "horizon");
    if (!(s.horizon > 0.0)) throw SchemaError("horizon must be positive");

    const json* steps = find(j, "n_steps");
    if (!steps) throw SchemaError("missing field: n_steps");
    s.n_steps = require_int(*steps, "n_steps");
    if (s.n_steps < 1) throw SchemaError("n_steps must be >= 1");

    const json* band = find(j, "band");
    if (!band || !band->is_object()) throw SchemaError("missing object field: band");
    const json* lo = find(*band, "sigma_low");
    const json* hi = find(*band, "sigma_high");
    if (!lo || !hi) throw SchemaError("band needs sigma_low and sigma_high");
    s.band = VolatilityBand(require_number(*lo, "band.sigma_low"),
                            require_number(*hi, "band.sigma_high"));

    const json* theta = find(j, "theta");
    if (!theta || !theta->is_array() || theta->empty()) {
        throw SchemaError("missing array field: theta");
    }
    s.theta.clear();
    for (std::size_t i = 0; i < theta->size(); ++i) {
        s.theta.push_back(
            require_number((*theta)[i], "theta[" + std::to_string(i) + "]"));
    }
    s.dimension = static_cast<int>(s.theta.size());
    if (const json* dim = find(j, "dimension")) {
        if (require_int(*dim, "dimension") != s.dimension) {
            throw SchemaError("dimension does not match theta length");
        }
    }

    const json* terminal = find(j, "terminal");
    if (!terminal) throw SchemaError("missing field: terminal");
    s.terminal = parse_expressions(*terminal, "terminal", s.dimension);
    if (static_cast<int>(s.terminal.size()) != s.dimension) {
        throw SchemaError("terminal length does not match theta length");
    }
    for (std::size_t l = 0; l < s.terminal.size(); ++l) {
        const auto& ex = s.terminal[l];
        bool bad = ex.uses("t") || ex.uses("z");
        for (int i = 1; i <= s.dimension && !bad; ++i) {
            bad = ex.uses("y" + std::to_string(i));
        }
        if (bad) {
            throw ParseError("terminal[" + std::to_string(l) +
                                 "] may reference x only",
                             0);
        }
    }

    const json* f = find(j, "f");
    if (!f) throw SchemaError("missing field: f");
    s.f = parse_expressions(*f, "f", s.dimension);
    if (static_cast<int>(s.f.size()) != s.dimension) {
        throw SchemaError("f length does not match theta length");
    }
    if (const json* g = find(j, "g")) {
        s.g = parse_expressions(*g, "g", s.dimension);
        if (static_cast<int>(s.g.size()) != s.dimension) {
            throw SchemaError("g length does not match theta length");
        }
    }

    if (const json* lip = find(j, "lipschitz_L")) {
        s.lipschitz_L = require_number(*lip, "lipschitz_L");
        if (s.lipschitz_L < 0.0) throw SchemaError("lipschitz_L must be >= 0");
    }
    if (const json* dx = find(j, "dx")) {
        s.dx = require_number(*dx, "dx");
        if (!(*s.dx > 0.0)) throw SchemaError("dx must be positive");
    }
    if (const json* seed = find(j, "seed")) {
        const int v = require_int(*seed, "seed");
        if (v < 0) throw SchemaError("seed must be nonnegative");
        s.seed = static_cast<unsigned>(v);
    }

    if (const json* exp_block = find(j, "expectation")) {
        if (!exp_block->is_object()) throw SchemaError("expectation must be an object");
        const json* variant = find(*exp_block, "variant");
        if (!variant) throw SchemaError("expectation needs a variant");
        const std::string name = require_string(*variant, "expectation.variant");
        if (name == "g_expectation") {
            s.expectation = DominatedExpectationSpec::g();
        } else if (name == "epsilon_mixture") {
            const json* eps = find(*exp_block, "epsilon");
            const json* ref = find(*exp_block, "sigma_ref");
            if (!eps || !ref) {
                throw SchemaError("epsilon_mixture needs epsilon and sigma_ref");
            }
            s.expectation = DominatedExpectationSpec::mixture(
                require_number(*eps, "expectation.epsilon"),
                require_number(*ref, "expectation.sigma_ref"));
            if (!s.band.contains(s.expectation.sigma_ref)) {
                throw InvalidSpec("expectation.sigma_ref must lie inside the band");
            }
        } else {
            throw SchemaError("unknown expectation variant: " + name);
        }
    }

    if (const json* picard = find(j, "picard")) {
        if (!picard->is_object()) throw SchemaError("picard must be an object");
        if (const json* v = find(*picard, "tol")) {
            s.picard.tol = require_number(*v, "picard.tol");
        }
        if (const json* v = find(*picard, "max_iter")) {
            s.picard.max_iter = require_int(*v, "picard.max_iter");
        }
        if (const json* v = find(*picard, "window_h")) {
            if (v->is_string()) {
                if (v->get<std::string>() != "adaptive") {
                    throw SchemaError("picard.window_h must be a number or \"adaptive\"");
                }
                s.picard.window_h = 0.0;
            } else {
                s.picard.window_h = require_number(*v, "picard.window_h");
                if (!(s.picard.window_h > 0.0)) {
                    throw SchemaError("picard.window_h must be positive");
                }
            }
        }
        if (const json* v = find(*picard, "adaptive")) {
            if (!v->is_boolean()) throw SchemaError("picard.adaptive must be a boolean");
            s.picard.adaptive = v->get<bool>();
        }
        if (const json* v = find(*picard, "beta")) {
            s.picard.beta = require_number(*v, "picard.beta");
        }
        if (const json* v = find(*picard, "c_beta")) {
            s.picard.c_beta = require_number(*v, "picard.c_beta");
        }
        if (const json* v = find(*picard, "start_value")) {
            s.picard.start_value = require_number(*v, "picard.start_value");
        }
        if (const json* v = find(*picard, "ratio_bound")) {
            s.picard.ratio_bound = require_number(*v, "picard.ratio_bound");
        }
        if (const json* v = find(*picard, "max_halvings")) {
            s.picard.max_halvings = require_int(*v, "picard.max_halvings");
        }
        if (const json* v = find(*picard, "constraint_tol")) {
            s.picard.constraint_tol = require_number(*v, "picard.constraint_tol");
        }
        if (const json* v = find(*picard, "flatness_tol")) {
            s.picard.flatness_tol = require_number(*v, "picard.flatness_tol");
        }
        if (const json* v = find(*picard, "constraint_stride")) {
            s.picard.constraint_stride = require_int(*v, "picard.constraint_stride");
            if (s.picard.constraint_stride < 1) {
                throw SchemaError("picard.constraint_stride must be >= 1");
            }
        }
    }
    if (!(s.picard.tol > 0.0)) throw InvalidConfig("picard.tol must be positive");
    if (s.picard.max_iter < 1) throw InvalidConfig("picard.max_iter must be >= 1");
    if (!(s.picard.beta > 2.0)) throw InvalidConfig("picard.beta must exceed 2");
    if (!(s.picard.c_beta > 0.0)) throw InvalidConfig("picard.c_beta must be positive");

    if (const json* output = find(j, "output")) {
        if (!output->is_object()) throw SchemaError("output must be an object");
        if (const json* dir = find(*output, "dir")) {
            s.output_dir = require_string(*dir, "output.dir");
        }
    }

    // Standing assumptions: weights, grid condition, terminal constraint.
    const Weights weights = make_weights(s);
    TreeGrid grid = make_grid(s);
    try {
        grid.require_cfl(s.band);
    } catch (const CflViolation& e) {
        throw AssumptionViolated(std::string("CFL: ") + e.what());
    }
    if (s.picard.window_h > 0.0) {
        const double ratio = s.picard.window_h / grid.dt;
        const int m = static_cast<int>(std::lround(ratio));
        if (m < 1 || std::abs(m * grid.dt - s.picard.window_h) >
                         1e-9 * std::max(1.0, grid.horizon)) {
            throw WindowMisaligned("picard.window_h is not an integer number of slices");
        }
    }

    const auto backend = make_backend(s.expectation);
    const std::vector<LatticeField> xi = make_terminal_fields(s, grid);
    double slack = 0.0;
    for (int l = 0; l < s.dimension; ++l) {
        slack += weights.theta[static_cast<std::size_t>(l)] *
                 backend->expect(negate(xi[static_cast<std::size_t>(l)]), grid, s.band);
    }
    if (slack > s.picard.constraint_tol) {
        throw AssumptionViolated(
            "terminal constraint violated at the last slice, slack " +
            std::to_string(slack));
    }

    const GeneratorSpec gen = make_generators(s);
    const double excess = probe_lipschitz(gen, s.horizon, 5.0, 1000, s.seed);
    if (excess > 1e-9) {
        log::warn("declared lipschitz_L " + std::to_string(s.lipschitz_L) +
                  " violated by sampled probes, excess " + std::to_string(excess));
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open scenario file: " + file.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str());
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["version"] = s.version;
    j["horizon"] = s.horizon;
    j["n_steps"] = s.n_steps;
    j["band"] = {{"sigma_low", s.band.sigma_low}, {"sigma_high", s.band.sigma_high}};
    j["theta"] = s.theta;
    json terminal = json::array();
    for (const auto& ex : s.terminal) terminal.push_back(ex.source());
    j["terminal"] = std::move(terminal);
    json f = json::array();
    for (const auto& ex : s.f) f.push_back(ex.source());
    j["f"] = std::move(f);
    if (!s.g.empty()) {
        json g = json::array();
        for (const auto& ex : s.g) g.push_back(ex.source());
        j["g"] = std::move(g);
    }
    j["lipschitz_L"] = s.lipschitz_L;
    if (s.dx) j["dx"] = *s.dx;
    j["seed"] = s.seed;
    if (s.expectation.variant == DominatedExpectationSpec::Variant::g_expectation) {
        j["expectation"] = {{"variant", "g_expectation"}};
    } else {
        j["expectation"] = {{"variant", "epsilon_mixture"},
                            {"epsilon", s.expectation.epsilon},
                            {"sigma_ref", s.expectation.sigma_ref}};
    }
    json picard;
    if (s.picard.window_h > 0.0) {
        picard["window_h"] = s.picard.window_h;
    } else {
        picard["window_h"] = "adaptive";
    }
    picard["adaptive"] = s.picard.adaptive;
    picard["tol"] = s.picard.tol;
    picard["max_iter"] = s.picard.max_iter;
    picard["beta"] = s.picard.beta;
    picard["c_beta"] = s.picard.c_beta;
    picard["start_value"] = s.picard.start_value;
    picard["ratio_bound"] = s.picard.ratio_bound;
    picard["max_halvings"] = s.picard.max_halvings;
    picard["constraint_tol"] = s.picard.constraint_tol;
    picard["flatness_tol"] = s.picard.flatness_tol;
    picard["constraint_stride"] = s.picard.constraint_stride;
    j["picard"] = std::move(picard);
    j["output"] = {{"dir", s.output_dir}};
    return j;
}

bool scenario_equal(const Scenario& a, const Scenario& b) {
    return scenario_to_json(a) == scenario_to_json(b);
}

namespace {

struct Solved {
    TreeGrid grid;
    Weights weights;
    FullSolveReport report;
    double solve_ms = 0.0;
};

json contracts_json(const Scenario& s, const TreeGrid& grid, const FullSolveReport& rep,
                    bool* all_ok_out) {
    const double flat_limit =
        s.picard.flatness_tol * (1.0 + std::abs(rep.solution.r.r_norm.back()));
    const bool constraint_ok = rep.max_constraint_residual <= s.picard.constraint_tol;
    const bool flatness_ok = std::abs(rep.solution.flatness_residual) <= flat_limit;
    const bool k_increment_ok = rep.k_diag.max_positive_increment <= kKIncrementTol;
    const bool k_martingale_ok =
        rep.k_diag.max_martingale_residual <= kKMartingaleDtFactor * grid.dt;
    const bool all_ok = constraint_ok && flatness_ok && k_increment_ok && k_martingale_ok;
    if (all_ok_out) *all_ok_out = all_ok;
    return json{{"constraint_ok", constraint_ok},
                {"flatness_ok", flatness_ok},
                {"k_increment_ok", k_increment_ok},
                {"k_martingale_ok", k_martingale_ok},
                {"all_ok", all_ok}};
}

json build_summary(const Scenario& s, const Solved& solved, bool* all_ok_out) {
    const FullSolveReport& rep = solved.report;
    json summary;
    summary["grid"] = {{"n_steps", solved.grid.n_steps},
                       {"dt", solved.grid.dt},
                       {"dx", solved.grid.dx}};
    json y0 = json::array();
    for (const auto& comp : rep.solution.y) y0.push_back(comp.front().value(0));
    summary["y0"] = std::move(y0);
    summary["r_terminal"] = rep.solution.r.r.back();
    summary["r_norm_terminal"] = rep.solution.r.r_norm.back();
    summary["max_constraint_residual"] = rep.max_constraint_residual;
    summary["flatness_residual"] = rep.solution.flatness_residual;
    summary["mean_modulus"] = rep.mean_modulus;
    summary["k"] = {{"max_positive_increment", rep.k_diag.max_positive_increment},
                    {"max_martingale_residual", rep.k_diag.max_martingale_residual}};
    json windows = json::array();
    for (const auto& trace : rep.traces) {
        windows.push_back({{"iterations", trace.iterations()},
                           {"final_diff", trace.diffs.empty() ? 0.0 : trace.diffs.back()},
                           {"asymptotic_ratio", trace.asymptotic_ratio()},
                           {"diffs", trace.diffs},
                           {"ratios", trace.ratios},
                           {"converged", trace.converged}});
    }
    double worst_ratio = 0.0;
    for (const auto& trace : rep.traces) {
        worst_ratio = std::max(worst_ratio, trace.asymptotic_ratio());
    }
    summary["picard"] = {{"window_count", rep.window_count},
                         {"accepted_window_h", rep.accepted_window_h},
                         {"halvings", rep.halvings},
                         {"max_asymptotic_ratio", worst_ratio},
                         {"windows", std::move(windows)}};
    summary["contracts"] = contracts_json(s, solved.grid, rep, all_ok_out);
    summary["timings_ms"] = {{"solve", solved.solve_ms}};
    summary["backend"] = s.expectation.variant ==
                                 DominatedExpectationSpec::Variant::g_expectation
                             ? "g_expectation"
                             : "epsilon_mixture";
    return summary;
}

Solved solve_impl(const Scenario& s) {
    const TreeGrid grid = make_grid(s);
    Weights weights = make_weights(s);
    const GeneratorSpec gen = make_generators(s);
    const std::vector<LatticeField> xi = make_terminal_fields(s, grid);
    const auto backend = make_backend(s.expectation);
    const auto t0 = std::chrono::steady_clock::now();
    FullSolveReport report =
        solve_full(xi, gen, weights, grid, s.band, s.picard, *backend);
    const auto t1 = std::chrono::steady_clock::now();
    return Solved{grid, std::move(weights), std::move(report),
                  std::chrono::duration<double, std::milli>(t1 - t0).count()};
}

void format_double(std::string& line, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    line += buf;
}

void write_solution_csv(const std::filesystem::path& file, const TreeGrid& grid,
                        const MrSolution& sol) {
    std::ofstream out(file);
    if (!out) throw InputError("cannot write " + file.string());
    out << "t,x,component,y,z,k\n";
    std::string line;
    for (int sl = 0; sl <= sol.end_slice(); ++sl) {
        const std::size_t i = static_cast<std::size_t>(sl);
        for (int j = -sl; j <= sl; ++j) {
            for (int l = 0; l < sol.dimension(); ++l) {
                line.clear();
                format_double(line, grid.time(sl));
                line += ',';
                format_double(line, grid.position(j));
                line += ',';
                line += std::to_string(l + 1);
                line += ',';
                format_double(line, sol.y[static_cast<std::size_t>(l)][i].value(j));
                line += ',';
                format_double(line, sol.z[static_cast<std::size_t>(l)][i].value(j));
                line += ',';
                format_double(line, sol.k[static_cast<std::size_t>(l)][i].value(j));
                line += '\n';
                out << line;
            }
        }
    }
}

// Sampled slice indices used for the constraint path: every stride-th slice
// plus the final one; matches check_constraint's sampling.
std::vector<std::size_t> sampled_indices(std::size_t count, int stride) {
    std::vector<std::size_t> idx;
    std::size_t i = 0;
    for (; i < count; i += static_cast<std::size_t>(stride)) idx.push_back(i);
    if (count > 0 && idx.back() != count - 1) idx.push_back(count - 1);
    return idx;
}

void write_deterministic_csv(const std::filesystem::path& file, const TreeGrid& grid,
                             const Scenario& s, const MrSolution& sol) {
    std::ofstream out(file);
    if (!out) throw InputError("cannot write " + file.string());
    out << "t";
    for (int l = 1; l <= sol.dimension(); ++l) out << ",r_" << l;
    out << ",r_norm,constraint,flatness_increment\n";

    const std::vector<std::size_t> idx =
        sampled_indices(sol.r.r_norm.size(), s.picard.constraint_stride);
    std::string line;
    for (std::size_t si = 0; si < idx.size(); ++si) {
        const std::size_t i = idx[si];
        const std::size_t next = si + 1 < idx.size() ? idx[si + 1] : i;
        const double sval = sol.constraint_path[si];
        line.clear();
        format_double(line, grid.time(static_cast<int>(i)));
        for (int l = 0; l < sol.dimension(); ++l) {
            line += ',';
            format_double(line, sol.r.r[i][static_cast<std::size_t>(l)]);
        }
        line += ',';
        format_double(line, sol.r.r_norm[i]);
        line += ',';
        format_double(line, sval);
        line += ',';
        format_double(line, sval * (sol.r.r_norm[next] - sol.r.r_norm[i]));
        line += '\n';
        out << line;
    }
}

}  // namespace

RunOutcome solve_scenario(const Scenario& s) {
    RunOutcome outcome;
    try {
        const Solved solved = solve_impl(s);
        bool all_ok = false;
        outcome.summary = build_summary(s, solved, &all_ok);
        outcome.exit_code = all_ok ? kExitOk : kExitContract;
    } catch (const Error& e) {
        outcome.summary = json{{"error", {{"type", error_name(e)}, {"message", e.what()}}}};
        outcome.exit_code = kExitSolver;
    }
    return outcome;
}

RunOutcome run_scenario(const Scenario& s, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    RunOutcome outcome;
    try {
        const Solved solved = solve_impl(s);
        bool all_ok = false;
        outcome.summary = build_summary(s, solved, &all_ok);
        outcome.exit_code = all_ok ? kExitOk : kExitContract;
        write_solution_csv(out_dir / "solution.csv", solved.grid, solved.report.solution);
        write_deterministic_csv(out_dir / "deterministic.csv", solved.grid, s,
                                solved.report.solution);
    } catch (const Error& e) {
        outcome.summary = json{{"error", {{"type", error_name(e)}, {"message", e.what()}}}};
        outcome.exit_code = kExitSolver;
    }
    std::ofstream out(out_dir / "summary.json");
    if (!out) throw InputError("cannot write summary.json");
    out << outcome.summary.dump(2) << "\n";
    return outcome;
}

json convergence_study(const Scenario& s, const std::vector<int>& levels) {
    if (levels.size() < 2) throw InputError("study needs at least two levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] < 1) throw InputError("study levels must be >= 1");
        if (i > 0 && levels[i] <= levels[i - 1]) {
            throw InputError("study levels must be strictly increasing");
        }
    }

    json rows = json::array();
    std::vector<std::vector<double>> roots;
    for (const int level : levels) {
        Scenario at_level = s;
        at_level.n_steps = level;
        const Solved solved = solve_impl(at_level);
        std::vector<double> y0;
        for (const auto& comp : solved.report.solution.y) {
            y0.push_back(comp.front().value(0));
        }
        double ratio = 0.0;
        for (const auto& trace : solved.report.traces) {
            ratio = std::max(ratio, trace.asymptotic_ratio());
        }
        json row;
        row["n_steps"] = level;
        row["y0"] = y0;
        row["picard_ratio"] = ratio;
        rows.push_back(std::move(row));
        roots.push_back(std::move(y0));
    }
    std::vector<double> diffs;
    for (std::size_t i = 1; i < roots.size(); ++i) {
        double d = 0.0;
        for (std::size_t l = 0; l < roots[i].size(); ++l) {
            d = std::max(d, std::abs(roots[i][l] - roots[i - 1][l]));
        }
        diffs.push_back(d);
        rows[i]["diff"] = d;
    }
    for (std::size_t i = 0; i + 1 < diffs.size(); ++i) {
        if (diffs[i] > 0.0 && diffs[i + 1] > 0.0) {
            rows[i + 2]["order"] = std::log2(diffs[i] / diffs[i + 1]);
        }
    }
    return json{{"levels", std::move(rows)}};
}

RunOutcome run_study(const Scenario& s, const std::vector<int>& levels,
                     const std::filesystem::path& out_dir) {
    RunOutcome outcome;
    try {
        outcome.summary = convergence_study(s, levels);
    } catch (const Error& e) {
        outcome.summary = json{{"error", {{"type", error_name(e)}, {"message", e.what()}}}};
        outcome.exit_code = dynamic_cast<const InputError*>(&e) ? kExitValidation : kExitSolver;
        return outcome;
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "study.csv");
    if (!out) throw InputError("cannot write study.csv");
    const int n_comp = s.dimension;
    out << "n_steps";
    for (int l = 1; l <= n_comp; ++l) out << ",y0_" << l;
    out << ",diff,order,picard_ratio\n";
    for (const auto& row : outcome.summary["levels"]) {
        std::string line = std::to_string(row["n_steps"].get<int>());
        for (const auto& v : row["y0"]) {
            line += ',';
            format_double(line, v.get<double>());
        }
        line += ',';
        if (row.contains("diff")) format_double(line, row["diff"].get<double>());
        line += ',';
        if (row.contains("order")) format_double(line, row["order"].get<double>());
        line += ',';
        format_double(line, row["picard_ratio"].get<double>());
        line += '\n';
        out << line;
    }
    return outcome;
}

json validate_scenario(const std::string& json_text) {
    const Scenario s = parse_scenario(json_text);
    const TreeGrid grid = make_grid(s);
    const Weights weights = make_weights(s);
    const GeneratorSpec gen = make_generators(s);
    const auto backend = make_backend(s.expectation);
    const std::vector<LatticeField> xi = make_terminal_fields(s, grid);

    double slack = 0.0;
    for (int l = 0; l < s.dimension; ++l) {
        slack += weights.theta[static_cast<std::size_t>(l)] *
                 backend->expect(negate(xi[static_cast<std::size_t>(l)]), grid, s.band);
    }
    const double lipschitz_excess = probe_lipschitz(gen, s.horizon, 5.0, 1000, s.seed);
    const DominanceReport dom = check_dominance(s.expectation, grid, s.band, 100, s.seed);
    const double delta = compute_delta_bound(s.picard, weights, gen, s.horizon);

    json report;
    report["valid"] = true;
    report["grid"] = {{"n_steps", grid.n_steps},
                      {"dt", grid.dt},
                      {"dx", grid.dx},
                      {"cfl_margin", grid.dx - s.band.sigma_high * std::sqrt(grid.dt)}};
    report["terminal_constraint_slack"] = slack;
    report["lipschitz_excess"] = lipschitz_excess;
    report["dominance"] = {{"max_dominance_violation", dom.max_dominance_violation},
                           {"max_sandwich_violation", dom.max_sandwich_violation}};
    report["delta_bound"] = delta;
    report["backend"] = backend->name();
    return report;
}

}  // namespace mrgbsde
