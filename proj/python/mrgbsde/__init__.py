"""Mean-reflected BSDE solver under volatility uncertainty.

Thin python layer over the C++ core: lattice expectations, the minimal-norm
constraint projection, dominated expectation variants and the scenario-level
``solve`` / ``validate`` / ``study`` entry points. Scenario documents are the
same JSON accepted by the command line tool and may be passed as strings or
loaded from disk with :func:`solve_file`.
"""

from pathlib import Path

from ._core import (
    AssumptionViolated,
    CflViolation,
    DimensionMismatch,
    Error,
    ExpectationSpec,
    InputError,
    InvalidConfig,
    InvalidSpec,
    LatticeField,
    MaxIterExceeded,
    NoContraction,
    ParseError,
    SchemaError,
    TerminalConstraintViolated,
    TreeGrid,
    VolatilityBand,
    WindowMisaligned,
    check_dominance,
    classical_expectation,
    conditional_path,
    expectation,
    g_function,
    h_value,
    project_l,
    project_l_tilde,
    projection_norm,
    run,
    solve,
    study,
    tilde_expectation,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolated",
    "CflViolation",
    "DimensionMismatch",
    "Error",
    "ExpectationSpec",
    "InputError",
    "InvalidConfig",
    "InvalidSpec",
    "LatticeField",
    "MaxIterExceeded",
    "NoContraction",
    "ParseError",
    "SchemaError",
    "TerminalConstraintViolated",
    "TreeGrid",
    "VolatilityBand",
    "WindowMisaligned",
    "check_dominance",
    "classical_expectation",
    "conditional_path",
    "expectation",
    "g_function",
    "h_value",
    "project_l",
    "project_l_tilde",
    "projection_norm",
    "run",
    "solve",
    "solve_file",
    "study",
    "tilde_expectation",
    "validate",
]


def solve_file(path):
    """Solve a scenario JSON file; returns ``{"exit_code", "summary"}``."""
    return solve(Path(path).read_text())
