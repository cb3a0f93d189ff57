"""Exception hierarchy for cwass."""


class CwassError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(CwassError, ValueError):
    """A configuration or numeric parameter is out of range."""


class InvalidInputError(CwassError, ValueError):
    """Input data (density, matrix, masses) violates a precondition."""


class MeshFormatError(CwassError, ValueError):
    """A mesh file could not be parsed."""


class TopologyError(CwassError, ValueError):
    """A mesh is not an orientable manifold with disk topology."""

    def __init__(self, message, euler_characteristic=None, boundary_loops=None):
        super().__init__(message)
        self.euler_characteristic = euler_characteristic
        self.boundary_loops = boundary_loops


class ConvergenceError(CwassError, RuntimeError):
    """An iterative solver failed to converge."""
