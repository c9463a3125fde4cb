"""Exception types shared across the package."""


class TorusBilliardsError(Exception):
    """Base class for all package errors."""


class InvariantViolation(TorusBilliardsError):
    """A constructed object failed one of its defining invariants."""


class NonConformingCurveError(TorusBilliardsError):
    """Input curve does not satisfy the convex-generator sign pattern."""


class NumericsError(TorusBilliardsError):
    """An iterative numeric procedure failed to converge."""


class GrazingAmbiguousError(TorusBilliardsError):
    """Tangency could not be resolved by the sign-sampling ladder."""


class UndefinedInflectionError(TorusBilliardsError):
    """Inflection directions requested inside the degenerate parameter band."""


class TrajectoryStoppedError(TorusBilliardsError):
    """A computation needed a complete trajectory but it stopped early."""


class NonSmoothPointError(TorusBilliardsError):
    """Jacobian requested where perturbed trajectories change bounce count."""


class DegenerateBasisError(TorusBilliardsError):
    """Specular basis undefined: velocity parallel to the azimuthal tangent."""
