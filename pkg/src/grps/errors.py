"""Exception hierarchy shared by all grps modules."""


class GrpsError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(GrpsError, ValueError):
    pass


class InvalidCoefficient(GrpsError, ValueError):
    pass


class RasterParseError(GrpsError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverFailure(GrpsError, RuntimeError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class NotSPD(GrpsError, RuntimeError):
    pass


class ConstraintRankError(GrpsError, RuntimeError):
    def __init__(self, message, rows=()):
        self.rows = tuple(int(r) for r in rows)
        super().__init__(message)


class BasisInfeasible(GrpsError, RuntimeError):
    def __init__(self, row, level, cause=None):
        self.row = row
        self.level = level
        msg = f"basis row {row} infeasible at level {level}"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)


class DegenerateBasis(GrpsError, RuntimeError):
    pass


class ConfigError(GrpsError, ValueError):
    pass
