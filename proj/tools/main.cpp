#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrgbsde/scenario.hpp"

namespace {

int classify(const mrgbsde::Error& e) {
    using namespace mrgbsde;
    if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const AssumptionViolated*>(&e) ||
        dynamic_cast<const InvalidConfig*>(&e) || dynamic_cast<const InvalidSpec*>(&e) ||
        dynamic_cast<const InputError*>(&e) ||
        dynamic_cast<const DimensionMismatch*>(&e) ||
        dynamic_cast<const CflViolation*>(&e)) {
        return mrgbsde::kExitValidation;
    }
    return mrgbsde::kExitSolver;
}

std::vector<int> parse_levels(const std::string& csv) {
    std::vector<int> levels;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        const std::string token = csv.substr(pos, next - pos);
        try {
            levels.push_back(std::stoi(token));
        } catch (const std::exception&) {
            throw mrgbsde::InputError("bad level '" + token + "' in --levels");
        }
        pos = next + 1;
    }
    return levels;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lattice solver for mean-reflected backward equations under volatility uncertainty"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    std::string levels_csv;

    CLI::App* solve = app.add_subcommand("solve", "Solve a scenario and write CSV/JSON reports");
    solve->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    solve->add_option("--out", out_dir, "Output directory (default: scenario output.dir)");

    CLI::App* study = app.add_subcommand("study", "Re-solve at several slice counts and report convergence");
    study->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    study->add_option("--levels", levels_csv, "Comma-separated slice counts, e.g. 50,100,200")
        ->required();
    study->add_option("--out", out_dir, "Output directory (default: scenario output.dir)");

    CLI::App* validate = app.add_subcommand("validate", "Validate a scenario without solving");
    validate->add_option("scenario", scenario_path, "Scenario JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            std::ifstream in(scenario_path);
            if (!in) throw mrgbsde::InputError("cannot open scenario file: " + scenario_path);
            std::stringstream buffer;
            buffer << in.rdbuf();
            const nlohmann::json report = mrgbsde::validate_scenario(buffer.str());
            std::printf("%s\n", report.dump(2).c_str());
            return mrgbsde::kExitOk;
        }
        const mrgbsde::Scenario s = mrgbsde::load_scenario(scenario_path);
        const std::string dir = out_dir.empty() ? s.output_dir : out_dir;
        if (solve->parsed()) {
            const mrgbsde::RunOutcome outcome = mrgbsde::run_scenario(s, dir);
            std::printf("%s\n", outcome.summary.dump(2).c_str());
            return outcome.exit_code;
        }
        const std::vector<int> levels = parse_levels(levels_csv);
        const mrgbsde::RunOutcome outcome = mrgbsde::run_study(s, levels, dir);
        std::printf("%s\n", outcome.summary.dump(2).c_str());
        return outcome.exit_code;
    } catch (const mrgbsde::Error& e) {
        const nlohmann::json err{{"error", e.what()}};
        std::fprintf(stderr, "%s\n", err.dump(2).c_str());
        return classify(e);
    }
}
