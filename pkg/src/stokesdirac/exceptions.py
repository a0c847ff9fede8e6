"""Exception types shared across the package."""


class NotFound(Exception):
    """A point could not be located inside the mesh."""


class PointOnBoundary(Exception):
    """A Dirac point lies on (or too close to) the domain boundary."""


class SingularSystem(Exception):
    """Sparse factorization failed: the saddle system is singular."""


class SingularPoint(Exception):
    """Fundamental solution evaluated at (or too close to) a source point."""


class Unsupported(Exception):
    """Requested quadrature degree exceeds the supported caps."""


class MaxIterExceeded(Exception):
    """Iterative optimal-control solver did not converge.

    Carries diagnostics in ``self.info`` (iteration history, last residual).
    """

    def __init__(self, message, info=None):
        super().__init__(message)
        self.info = info or {}


class MismatchedPoints(Exception):
    """Amplitude sets defined over different point sets."""


class DegenerateInput(Exception):
    """Input unusable for the requested computation (e.g. zero errors in EOC)."""


class ConfigError(Exception):
    """Invalid experiment configuration."""
