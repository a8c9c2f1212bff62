"""Exception types shared across the toolkit."""


class NoGroundStateError(RuntimeError):
    """Shooting map has no sign change: no positive decaying profile exists."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class FamilyBreakError(RuntimeError):
    """Continuation lost positivity; carries the last good frequency."""

    def __init__(self, message, last_good_omega=None):
        super().__init__(message)
        self.last_good_omega = last_good_omega


class NumericalFailureError(RuntimeError):
    """Eigensolver or linear solver did not converge; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularPointError(ValueError):
    """Kernel evaluated at its singular point (zero separation)."""


class ResonanceViolationError(RuntimeError):
    """Frequency-to-eigenvalue ratio is an integer within tolerance."""


class ConditioningError(RuntimeError):
    """Biorthogonal system too ill-conditioned to invert."""


class ThresholdError(ValueError):
    """Energy too close to an essential-spectrum threshold."""


class LimitingAbsorptionError(RuntimeError):
    """Boundary-value extrapolation in the absorption parameter failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InconsistentFgrError(RuntimeError):
    """Spectral-density and resolvent routes to the damping coefficient
    disagree beyond tolerance; carries both values."""

    def __init__(self, message, delta_route=None, eps_route=None):
        super().__init__(message)
        self.delta_route = delta_route
        self.eps_route = eps_route


class SolvabilityError(RuntimeError):
    """Gap-energy linear solve hit a near-singular operator."""


class UnsupportedNonlinearityError(ValueError):
    """Operation requires a polynomial nonlinearity."""


class OutsideTubeError(RuntimeError):
    """Modulation Newton solve did not converge: state left the orbital tube."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class BookkeepingError(RuntimeError):
    """Internal consistency violation in the normal-form tables."""


class ConfigError(ValueError):
    """Configuration failed schema validation; carries the offending key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
