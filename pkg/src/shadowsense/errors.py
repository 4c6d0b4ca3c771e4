"""Exception types raised by the toolkit.

Everything derives from ShadowSenseError so callers can catch numerical
failures in one clause while letting programming errors (TypeError,
ValueError from bad arguments) propagate normally.
"""


class ShadowSenseError(Exception):
    """Base class for all toolkit-specific failures."""


class InvalidStateError(ShadowSenseError):
    """A state vector contains NaN or infinite components."""


class ConsistencyError(ShadowSenseError):
    """Supplied states do not satisfy a required relation.

    Raised, for example, when a claimed transition u_prev -> u does not
    reproduce u under the map within tolerance.
    """


class DivergenceError(ShadowSenseError):
    """An orbit left the finite region of phase space."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"orbit diverged at step {step}")


class DegenerateBasisError(ShadowSenseError):
    """A propagated basis lost numerical rank.

    Carries the step index at which a renormalization produced a
    (near-)zero diagonal entry.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"basis rank collapse at step {step}")


class SegmentOverflowError(ShadowSenseError):
    """An unrenormalized tangent solution exceeded the overflow guard.

    The guard trips at norm 1e100, well before IEEE overflow, so the
    caller can shorten segments instead of seeing inf/NaN downstream.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"tangent solution overflow at step {step}")


class SplittingDegenerateError(ShadowSenseError):
    """Stable and unstable subspaces are numerically tangent.

    Raised when the pairing matrix A^T W between the adjoint-unstable and
    tangent-unstable bases has condition number above 1e8, which would make
    the oblique projections meaningless.
    """


class InsufficientDataError(ShadowSenseError):
    """Too few renormalization records for a statistically sane estimate."""


class NeedsLongerOrbitError(ShadowSenseError):
    """The requested window does not fit in the stored orbit.

    Operations that look ahead or behind the averaging window (two-sided
    sums, lagged correlations) raise this instead of silently shrinking
    the window.
    """


class ConfigError(ShadowSenseError):
    """An experiment configuration is malformed or self-contradictory."""
