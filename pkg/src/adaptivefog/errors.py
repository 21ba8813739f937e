"""Exception hierarchy shared by all adaptivefog modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
data problems (unreadable/malformed/insufficient traces) with 3, and
solver non-convergence with 4.
"""


class AdaptiveFogError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AdaptiveFogError):
    """Invalid configuration file, grid spec, or service set."""


class ScenarioError(AdaptiveFogError):
    """Invalid synthetic-scenario specification."""


class TraceFormatError(AdaptiveFogError):
    """Trace stream is unreadable or its header does not match the schema."""


class TraceRangeError(AdaptiveFogError):
    """Sample lies outside the grid's configured coordinate bound."""


class ModelFitError(AdaptiveFogError):
    """Latency model cannot be fit (no group meets the sample minimum)."""


class CoverageError(AdaptiveFogError):
    """No CDF resolves for a requested state, even via the fallback ladder."""


class EstimationError(AdaptiveFogError):
    """Mobility transitions cannot be estimated (no consecutive slot pairs)."""


class SolverError(AdaptiveFogError):
    """Policy solver failed, e.g. value iteration did not converge."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
