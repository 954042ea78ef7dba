"""Exception types shared across the package."""


class GelshootError(Exception):
    """Base class for all package-specific errors."""


class DomainError(GelshootError, ValueError):
    """A parameter lies outside the admissible domain."""


class OutOfRangeError(GelshootError):
    """Evaluation requested outside a trajectory's covered interval."""


class BlowUpError(GelshootError):
    """Solution magnitude exceeded the configured cap.

    Carries the abscissa where the cap was exceeded and the partial
    trajectory computed up to that point.
    """

    def __init__(self, location, trajectory=None):
        super().__init__(f"solution exceeded value cap near {location:.6g}")
        self.location = location
        self.trajectory = trajectory


class StepUnderflowError(GelshootError):
    """Adaptive step size shrank below the resolvable scale."""

    def __init__(self, location, step):
        super().__init__(f"step underflow at {location:.6g} (h={step:.3e})")
        self.location = location
        self.step = step


class BracketFailureError(GelshootError):
    """Both bisection endpoints classified identically."""

    def __init__(self, lo, hi, class_lo, class_hi):
        super().__init__(
            f"no bracket: b={lo:.6g} -> {class_lo}, b={hi:.6g} -> {class_hi}"
        )
        self.lo = lo
        self.hi = hi
        self.class_lo = class_lo
        self.class_hi = class_hi


class NoPlateausError(GelshootError):
    """Fewer than two plateaus detected in a stair-like profile."""


class NoSignChangeError(GelshootError):
    """Root bracketing failed: same sign at both endpoints."""

    def __init__(self, lo, f_lo, hi, f_hi):
        super().__init__(
            f"no sign change: F({lo:.6g})={f_lo:.3e}, F({hi:.6g})={f_hi:.3e}"
        )
        self.endpoints = ((lo, f_lo), (hi, f_hi))


class NonContractionError(GelshootError):
    """Picard iteration diverged (sup-difference grew repeatedly)."""

    def __init__(self, history):
        super().__init__(
            "iteration not contracting; sup-diff history: "
            + ", ".join(f"{d:.3e}" for d in history[-5:])
        )
        self.history = list(history)


class OriginOnCurveError(GelshootError):
    """The stability curve passes through the origin (boundary case)."""


class TruncationWarning(UserWarning):
    """A truncated quadrature or series tail exceeds its target bound."""
