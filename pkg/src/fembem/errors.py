"""Exception types shared across the package."""


class FembemError(Exception):
    """Base class for all package errors."""


class MeshError(FembemError):
    """Invalid mesh data (negative volumes, non-manifold boundary, ...)."""


class GmshParseError(MeshError):
    """Malformed Gmsh file.  Carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SpaceError(FembemError):
    """Unsupported degree/continuity or mismatched meshes between spaces."""


class QuadratureConfigError(FembemError):
    """Quadrature configuration outside the supported range."""


class InvalidCoefficientError(FembemError):
    """A coefficient field violated its sign or integrability assumptions."""


class SingularEvaluationError(FembemError):
    """Kernel evaluated on its diagonal x == y."""


class SolverError(FembemError):
    """Linear solver failure.  ``trace`` holds the iteration history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DivergenceError(SolverError):
    """Fixed-point iteration diverged.  ``sigma`` names the relaxation used."""

    def __init__(self, message, sigma=None, trace=None):
        super().__init__(message, trace=trace)
        self.sigma = sigma
