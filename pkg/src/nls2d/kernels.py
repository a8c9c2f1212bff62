"""Free-operator kernels in two dimensions.

The free resolvent of the flat Laplacian underlies every scattering
computation: its off-spectrum kernel is a Macdonald function, its boundary
values on the continuous spectrum are outgoing/incoming Hankel functions,
and its small-energy expansion produces the logarithmic threshold
coefficient.  Partial-wave (fixed angular harmonic) variants feed the
radial integral-equation solvers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import SingularPointError

EULER_GAMMA = 0.5772156649015328606


class Branch(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class FreeKernelQuery:
    """Spectral parameter, boundary-value side, and point separation."""

    z: complex
    branch: Branch = Branch.PLUS
    r: float = 1.0


def _require_positive_r(r):
    if r <= 0.0:
        raise SingularPointError(f"kernel separation must be positive, got r={r}")


def free_scalar_kernel(query: FreeKernelQuery) -> complex:
    """Kernel of (-Laplacian - z)^(-1) at separation r.

    Off the half line [0, inf) this is K0(sqrt(-z) r)/(2 pi) on the standard
    branch of the square root.  On the spectrum (z = k^2 > 0) the two
    boundary values are (i/4) H0^(1)(k r) and its complex conjugate.
    """
    _require_positive_r(query.r)
    z = complex(query.z)
    if z.imag == 0.0 and z.real > 0.0:
        k = np.sqrt(z.real)
        value = 0.25j * special.hankel1(0, k * query.r)
        return complex(value) if query.branch is Branch.PLUS else complex(np.conj(value))
    kappa = np.sqrt(-z)
    return complex(special.kv(0, kappa * query.r) / (2.0 * np.pi))


def free_matrix_kernel(k: float, omega: float, r: float) -> np.ndarray:
    """Diagonal 2x2 kernel of the matrix free resolvent at energy k^2 + omega.

    Entry (1,1) is the outgoing Hankel kernel (oscillatory); entry (2,2) is
    a decaying Macdonald kernel at the shifted evanescent energy.
    """
    if k <= 0 or omega <= 0:
        raise ValueError("k and omega must be positive")
    _require_positive_r(r)
    out = np.zeros((2, 2), dtype=complex)
    out[0, 0] = 0.25j * special.hankel1(0, k * r)
    out[1, 1] = -special.kv(0, np.sqrt(k * k + 2.0 * omega) * r) / (2.0 * np.pi)
    return out


def threshold_coefficient_c(z: complex) -> complex:
    """Scalar coefficient of the rank-one term in the small-z resolvent
    expansion: i/4 - gamma/(2 pi) - log(sqrt(-z)/2)/(2 pi)."""
    z = complex(z)
    if z == 0:
        raise ValueError("threshold coefficient diverges logarithmically at z = 0")
    root = np.sqrt(-z)
    return 0.25j - EULER_GAMMA / (2.0 * np.pi) - np.log(root / 2.0) / (2.0 * np.pi)


# ---------------------------------------------------------------------------
# Partial-wave kernels.  With f(x) = f_m(r) e^{i m theta} the 2D convolution
# kernels above reduce to one-dimensional kernels in (r, r') per harmonic.
# ---------------------------------------------------------------------------

def _minmax(r, rp):
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    lo = np.minimum(r, rp)
    hi = np.maximum(r, rp)
    return lo, hi


def radial_kernel_decaying(m: int, kappa: float, r, rp) -> np.ndarray:
    """I_m(kappa r_<) K_m(kappa r_>): partial-wave kernel of the scalar
    resolvent at spectral parameter -kappa^2 < 0.

    Evaluated through exponentially scaled Bessel functions so large
    arguments neither overflow nor underflow.
    """
    lo, hi = _minmax(r, rp)
    return special.ive(m, kappa * lo) * special.kve(m, kappa * hi) * np.exp(-kappa * (hi - lo))


def radial_kernel_outgoing(m: int, k: float, r, rp) -> np.ndarray:
    """(i pi / 2) J_m(k r_<) H_m^(1)(k r_>): outgoing boundary-value kernel
    of the scalar resolvent at energy k^2 on the spectrum."""
    lo, hi = _minmax(r, rp)
    jm = special.jv(m, k * lo)
    return 0.5j * np.pi * jm * (special.jv(m, k * hi) + 1j * special.yv(m, k * hi))


def log_kernel(r, rp) -> np.ndarray:
    """-log(r_>): partial-wave m=0 kernel of the logarithmic potential."""
    _, hi = _minmax(r, rp)
    return -np.log(hi)
