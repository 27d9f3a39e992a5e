#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrgbsde/dominated.hpp"
#include "mrgbsde/expression.hpp"
#include "mrgbsde/picard.hpp"

namespace mrgbsde {

// A fully validated problem description, loadable from JSON.
struct Scenario {
    int version = 1;
    double horizon = 1.0;
    int n_steps = 100;
    VolatilityBand band{0.5, 1.0};
    int dimension = 1;
    std::vector<double> theta;
    std::vector<expr::Expression> terminal;  // functions of x
    std::vector<expr::Expression> f;         // functions of t, x, y1..yN, z
    std::vector<expr::Expression> g;         // same variables; optional block
    double lipschitz_L = 0.0;
    DominatedExpectationSpec expectation;
    PicardConfig picard;
    std::optional<double> dx;
    std::string output_dir = "out";
    unsigned seed = 12345;
};

// Parses and validates scenario JSON. Throws SchemaError for malformed or
// missing fields, ParseError for bad expressions, AssumptionViolated when the
// weights, the terminal constraint or the grid condition fail, InvalidConfig
// or InvalidSpec for bad solver or expectation settings.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& file);

nlohmann::json scenario_to_json(const Scenario& s);

// Structural equality: every scalar field and every expression source match.
bool scenario_equal(const Scenario& a, const Scenario& b);

TreeGrid make_grid(const Scenario& s);
Weights make_weights(const Scenario& s);
GeneratorSpec make_generators(const Scenario& s);
std::vector<LatticeField> make_terminal_fields(const Scenario& s, const TreeGrid& grid);

// Exit code contract shared by the library entry points and the CLI:
// 0 success, 2 validation failure, 3 solver failure, 4 residual contract
// failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitContract = 4;

struct RunOutcome {
    int exit_code = kExitOk;
    nlohmann::json summary;
};

// Solves the scenario and returns the summary without touching the
// filesystem.
RunOutcome solve_scenario(const Scenario& s);

// Solves and writes solution.csv, deterministic.csv and summary.json into
// out_dir (17 significant digits, deterministic ordering).
RunOutcome run_scenario(const Scenario& s, const std::filesystem::path& out_dir);

// Re-solves the scenario at the given slice counts and reports per level the
// root values, successive sup-norm differences, empirical orders
// log2(d_k / d_{k+1}) and the worst window contraction ratio. Throws
// InputError unless at least two increasing levels are given.
nlohmann::json convergence_study(const Scenario& s, const std::vector<int>& levels);

// Study plus study.csv in out_dir.
RunOutcome run_study(const Scenario& s, const std::vector<int>& levels,
                     const std::filesystem::path& out_dir);

// Validation-only entry point: reports the checks a load performs, plus the
// sampled Lipschitz probe and the dominance probe of the configured backend.
nlohmann::json validate_scenario(const std::string& json_text);

}  // namespace mrgbsde
