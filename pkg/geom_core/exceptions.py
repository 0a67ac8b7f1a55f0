from cofie.exceptions import CofieError


class ParseError(CofieError):
    """Malformed mesh file; carries the offending 1-based line number."""

    def __init__(self, message='', line=None, **context):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, line=line, **context)
        self.line = line


class IoError(CofieError):
    """A file could not be read or written."""


class EmptyMesh(CofieError):
    """Operation needs at least one non-degenerate triangle."""


class ZeroQuaternion(CofieError):
    """Quaternion norm too small to define a rotation."""


class NonUnitQuaternion(ZeroQuaternion):
    """Quaternion norm too far from 1 to be read as a rotation."""


class NonConvergence(CofieError):
    """Closest-point Newton iteration did not converge.

    `estimate` holds the best signed distance found by the grid search.
    """

    def __init__(self, message='', estimate=None, **context):
        super().__init__(message, estimate=estimate, **context)
        self.estimate = estimate
