"""Exception hierarchy shared by all hydrogp modules."""


class HydrogpError(Exception):
    """Base class for every error raised by this package."""


class DuplicateIdError(HydrogpError):
    """Two nodes or links were declared with the same id."""

    def __init__(self, kind: str, ident: str):
        self.kind = kind
        self.ident = ident
        super().__init__(f"duplicate {kind} id {ident!r}")


class DanglingReferenceError(HydrogpError):
    """A link or demand refers to a node id that does not exist."""

    def __init__(self, ident: str, context: str):
        self.ident = ident
        self.context = context
        super().__init__(f"{context} references unknown node {ident!r}")


class InvariantViolationError(HydrogpError):
    """A domain object violates one of its declared invariants."""

    def __init__(self, obj: str, field: str, message: str):
        self.obj = obj
        self.field = field
        super().__init__(f"{obj}.{field}: {message}")


class DimensionMismatchError(HydrogpError):
    """Vector or matrix dimensions do not conform."""


class DegeneratePumpStateError(HydrogpError):
    """Pump relative speed below the numerical floor."""

    def __init__(self, speed: float, floor: float):
        self.speed = speed
        self.floor = floor
        super().__init__(f"pump speed {speed:g} below floor {floor:g}")


class NonConvergenceError(HydrogpError):
    """An iterative solver ran out of iterations."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class SingularJacobianError(HydrogpError):
    """Newton step failed because the Jacobian is singular."""


class NonPositiveValueError(HydrogpError):
    """A value that must be strictly positive is not."""


class InfeasibleBoxBoundsError(HydrogpError):
    """A box constraint has lower bound above upper bound."""


class ExponentOverflowError(HydrogpError):
    """A monomial exponent is large enough to overflow b**x in doubles.

    Almost always means the inputs are in the wrong units; rescale
    instead of silently saturating.
    """

    def __init__(self, exponent: float, limit: float):
        self.exponent = exponent
        self.limit = limit
        super().__init__(
            f"exponent magnitude {abs(exponent):.3e} exceeds {limit:.3e}; "
            "inputs likely need rescaled units"
        )


class NumericalFailureError(HydrogpError):
    """The convex solver hit an unrecoverable numerical problem."""


class InfeasibleProblemError(HydrogpError):
    """The convex program has no feasible point."""

    def __init__(self, certificate: float, message: str = ""):
        self.certificate = certificate
        super().__init__(
            message or f"problem infeasible (phase-I slack {certificate:.3e})"
        )


class SolverFailureError(HydrogpError):
    """A window solve failed inside the MPC loop."""

    def __init__(self, step: int, iteration: int, cause: Exception):
        self.step = step
        self.iteration = iteration
        self.cause = cause
        super().__init__(
            f"window at step {step}, iteration {iteration}: {cause}"
        )


class InpSyntaxError(HydrogpError):
    """Malformed input file; carries the offending position."""

    def __init__(self, line: int, column: int, expected: str):
        self.line = line
        self.column = column
        self.expected = expected
        super().__init__(f"line {line}, column {column}: expected {expected}")


class UnsupportedSectionError(HydrogpError):
    """Input file uses a section this implementation rejects."""

    def __init__(self, section: str, reason: str = ""):
        self.section = section
        msg = f"unsupported section [{section}]"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class IoFailureError(HydrogpError):
    """Reading or writing a results file failed."""
