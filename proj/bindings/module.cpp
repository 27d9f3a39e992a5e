// Python extension exposing the solver's main operations: lattice
// expectations, the minimal-norm projection, dominated variants and the
// scenario-level solve / validate / study entry points. JSON documents cross
// the boundary as plain python dicts and lists.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "mrgbsde/dominated.hpp"
#include "mrgbsde/lattice.hpp"
#include "mrgbsde/picard.hpp"
#include "mrgbsde/reflection.hpp"
#include "mrgbsde/scenario.hpp"

namespace py = pybind11;
using namespace mrgbsde;

namespace {

py::object json_to_py(const nlohmann::json& j) {
    using value_t = nlohmann::json::value_t;
    switch (j.type()) {
        case value_t::null:
            return py::none();
        case value_t::boolean:
            return py::bool_(j.get<bool>());
        case value_t::number_integer:
            return py::int_(j.get<long long>());
        case value_t::number_unsigned:
            return py::int_(j.get<unsigned long long>());
        case value_t::number_float:
            return py::float_(j.get<double>());
        case value_t::string:
            return py::str(j.get<std::string>());
        case value_t::array: {
            py::list out;
            for (const auto& item : j) out.append(json_to_py(item));
            return out;
        }
        case value_t::object: {
            py::dict out;
            for (const auto& [key, value] : j.items()) {
                out[py::str(key)] = json_to_py(value);
            }
            return out;
        }
        default:
            return py::none();
    }
}

py::dict outcome_to_py(const RunOutcome& out) {
    py::dict d;
    d["exit_code"] = out.exit_code;
    d["summary"] = json_to_py(out.summary);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() =
        "Mean-reflected BSDE solver under volatility uncertainty on a "
        "recombining trinomial lattice";

    // Error base first; later registrations are tried first by the
    // translator, so concrete types win and the base catches the rest.
    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<CflViolation>(m, "CflViolation", base.ptr());
    py::register_exception<NoContraction>(m, "NoContraction", base.ptr());
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
    py::register_exception<TerminalConstraintViolated>(
        m, "TerminalConstraintViolated", base.ptr());
    py::register_exception<InvalidConfig>(m, "InvalidConfig", base.ptr());
    py::register_exception<InvalidSpec>(m, "InvalidSpec", base.ptr());
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<AssumptionViolated>(m, "AssumptionViolated", base.ptr());
    py::register_exception<WindowMisaligned>(m, "WindowMisaligned", base.ptr());
    py::register_exception<InputError>(m, "InputError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<MaxIterExceeded>(m, "MaxIterExceeded", base.ptr());

    py::class_<VolatilityBand>(m, "VolatilityBand")
        .def(py::init<double, double>(), py::arg("sigma_low"),
             py::arg("sigma_high"))
        .def_readonly("sigma_low", &VolatilityBand::sigma_low)
        .def_readonly("sigma_high", &VolatilityBand::sigma_high)
        .def("degenerate", &VolatilityBand::degenerate)
        .def("contains", &VolatilityBand::contains, py::arg("sigma"))
        .def("__repr__", [](const VolatilityBand& b) {
            return "VolatilityBand(" + std::to_string(b.sigma_low) + ", " +
                   std::to_string(b.sigma_high) + ")";
        });

    py::class_<TreeGrid>(m, "TreeGrid")
        .def(py::init<double, int, const VolatilityBand&>(), py::arg("horizon"),
             py::arg("n_steps"), py::arg("band"))
        .def(py::init<double, int, double>(), py::arg("horizon"),
             py::arg("n_steps"), py::arg("dx"))
        .def_readonly("horizon", &TreeGrid::horizon)
        .def_readonly("n_steps", &TreeGrid::n_steps)
        .def_readonly("dt", &TreeGrid::dt)
        .def_readonly("dx", &TreeGrid::dx)
        .def("time", &TreeGrid::time, py::arg("k"))
        .def("position", &TreeGrid::position, py::arg("j"));

    py::class_<LatticeField>(m, "LatticeField")
        .def(py::init<int>(), py::arg("slice"))
        .def(py::init<int, std::vector<double>>(), py::arg("slice"),
             py::arg("values"))
        .def_static("constant", &LatticeField::constant, py::arg("slice"),
                    py::arg("value"))
        .def_readonly("slice", &LatticeField::slice)
        .def_readwrite("values", &LatticeField::values)
        .def("node_count", &LatticeField::node_count)
        .def("value", [](const LatticeField& f, int j) { return f.value(j); },
             py::arg("j"));

    py::class_<DominatedExpectationSpec>(m, "ExpectationSpec")
        .def_static("g", &DominatedExpectationSpec::g)
        .def_static("mixture", &DominatedExpectationSpec::mixture,
                    py::arg("epsilon"), py::arg("sigma_ref"))
        .def_readonly("epsilon", &DominatedExpectationSpec::epsilon)
        .def_readonly("sigma_ref", &DominatedExpectationSpec::sigma_ref)
        .def("validate", &DominatedExpectationSpec::validate);

    m.def("g_function", &g_function, py::arg("a"), py::arg("band"),
          "G(a): half the supremum of sigma^2 * a over the band");
    m.def("expectation", &expectation, py::arg("terminal"), py::arg("grid"),
          py::arg("band"),
          "Sublinear expectation of a terminal field at the root");
    m.def("classical_expectation", &classical_expectation, py::arg("terminal"),
          py::arg("grid"), py::arg("sigma"),
          "Single-measure trinomial expectation at a fixed volatility");
    m.def("conditional_path", &conditional_path, py::arg("terminal"),
          py::arg("grid"), py::arg("band"),
          "All intermediate fields of the backward recursion");
    m.def(
        "tilde_expectation",
        [](const LatticeField& terminal, const DominatedExpectationSpec& spec,
           const TreeGrid& grid, const VolatilityBand& band) {
            return tilde_expectation(terminal, spec, grid, band);
        },
        py::arg("terminal"), py::arg("spec"), py::arg("grid"), py::arg("band"),
        "Dominated expectation of a terminal field");
    m.def(
        "check_dominance",
        [](const DominatedExpectationSpec& spec, const TreeGrid& grid,
           const VolatilityBand& band, int probes, unsigned seed) {
            const DominanceReport r = check_dominance(spec, grid, band, probes, seed);
            py::dict d;
            d["max_dominance_violation"] = r.max_dominance_violation;
            d["max_sandwich_violation"] = r.max_sandwich_violation;
            return d;
        },
        py::arg("spec"), py::arg("grid"), py::arg("band"),
        py::arg("probes") = 200, py::arg("seed") = 12345,
        "Sampled dominance and sandwich violations against the band supremum");

    m.def(
        "h_value",
        [](const std::vector<double>& x, const std::vector<double>& means,
           const std::vector<double>& theta) {
            return h_value(x, means, Weights(theta));
        },
        py::arg("x"), py::arg("means"), py::arg("theta"),
        "Aggregate constraint slack; feasibility is h <= 0");
    m.def(
        "project_l",
        [](const std::vector<double>& means, const std::vector<double>& theta) {
            return project_l(means, Weights(theta));
        },
        py::arg("means"), py::arg("theta"),
        "Minimal-norm feasible shift for the given component means");
    m.def(
        "projection_norm",
        [](const std::vector<double>& means, const std::vector<double>& theta) {
            return projection_norm(means, Weights(theta));
        },
        py::arg("means"), py::arg("theta"));
    m.def(
        "project_l_tilde",
        [](const std::vector<double>& means, const std::vector<double>& theta) {
            return project_l_tilde(means, Weights(theta));
        },
        py::arg("means"), py::arg("theta"),
        "Minimal-norm feasible shift for dominated means");

    m.def(
        "solve",
        [](const std::string& scenario_json) {
            return outcome_to_py(solve_scenario(parse_scenario(scenario_json)));
        },
        py::arg("scenario_json"),
        "Parse a scenario document and solve it; returns exit_code and the "
        "summary report");
    m.def(
        "run",
        [](const std::string& scenario_json, const std::string& out_dir) {
            return outcome_to_py(
                run_scenario(parse_scenario(scenario_json), out_dir));
        },
        py::arg("scenario_json"), py::arg("out_dir"),
        "Solve and write solution.csv, deterministic.csv and summary.json");
    m.def(
        "validate",
        [](const std::string& scenario_json) {
            return json_to_py(validate_scenario(scenario_json));
        },
        py::arg("scenario_json"),
        "Validation-only report: grid, assumptions, dominance and window bound");
    m.def(
        "study",
        [](const std::string& scenario_json, const std::vector<int>& levels) {
            return json_to_py(
                convergence_study(parse_scenario(scenario_json), levels));
        },
        py::arg("scenario_json"), py::arg("levels"),
        "Re-solve at increasing step counts and report differences and orders");
}
