"""Exception hierarchy shared by every kincbf module."""


class KincbfError(Exception):
    """Base class for all library errors."""


class DomainError(KincbfError, ValueError):
    """Non-finite or out-of-domain configuration / velocity."""


class BarrierParameterError(KincbfError, ValueError):
    """Invalid barrier descriptor parameters (non-positive distance, width...)."""


class InfeasibleCBFError(KincbfError):
    """Lg h = 0 while Lf h + alpha(h) < 0: no input satisfies the constraint."""


class InfeasibleQPError(KincbfError):
    """Reference QP has an empty feasible set."""


class DegenerateGradientError(KincbfError):
    """Barrier gradient vanishes while the filter has to intervene."""


class InternalContractError(KincbfError):
    """A state that theory rules out was observed (usually a modeling bug)."""


class SingularityError(KincbfError):
    """Task Jacobian (or barrier Jacobian) Gram matrix is singular."""


class DiffeomorphismError(SingularityError):
    """The coordinate change q -> (w(q), h(q)) has a singular Jacobian."""


class CouplingError(KincbfError):
    """The barrier coordinate is not inertially coupled with the input."""


class BoundError(KincbfError, ValueError):
    """Robust-filter constants are missing or invalid."""


class DivergenceError(KincbfError):
    """Integrator produced a non-finite state."""


class ComparisonError(KincbfError):
    """Scenarios handed to compare() do not share model and barrier."""


class ConfigError(KincbfError):
    """Scenario file could not be parsed or validated."""

    def __init__(self, message, *, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
