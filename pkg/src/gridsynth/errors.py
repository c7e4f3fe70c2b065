"""Exception hierarchy shared by all modules.

Exit codes follow the CLI contract: 2 for bad inputs, 3 for numerical
failures, 4 for infeasible problem instances.
"""


class GridSynthError(Exception):
    exit_code = 1


class ValidationError(GridSynthError):
    """Malformed input data, configuration, or model state."""

    exit_code = 2


class NumericalError(GridSynthError):
    """A numerical kernel failed: singular system, divergence, solver breakdown."""

    exit_code = 3


class InfeasibleError(GridSynthError):
    """The problem instance admits no feasible solution."""

    exit_code = 4
