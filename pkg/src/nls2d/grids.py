"""Quadrature grids.

Two grids carry every sampled field in the package: a composite
Gauss-Legendre radial grid for integrals against ``r dr`` on ``[0, r_max]``,
and an even-sized periodic Cartesian box for FFT-based work.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

#: Gauss-Legendre points per radial panel.  Four points integrate
#: polynomials of degree seven exactly, comfortably above the degree-5
#: exactness the grid contract asks for.
PANEL_SIZE = 4

DEFAULT_R_MAX = 24.0
DEFAULT_RADIAL_N = 768
DEFAULT_BOX_HALFWIDTH = 32.0
DEFAULT_BOX_POINTS = 512


@dataclass(frozen=True)
class RadialGrid:
    """Composite Gauss-Legendre grid on [0, r_max].

    ``weights`` absorb the radial Jacobian: ``integrate(f)`` approximates
    the half-line integral of ``f(r) r dr`` truncated at ``r_max``.
    """

    r_max: float
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        return self.weights @ values

    def plane_integral(self, values):
        """Integral over the plane of a radial function, 2*pi*int f r dr."""
        return 2.0 * np.pi * self.integrate(values)

    def inner(self, f, g):
        """Plane inner product int f conj(g) of radial scalar samples."""
        return 2.0 * np.pi * self.integrate(f * np.conj(g))

    def pair_two_component(self, f, g):
        """Transpose-conjugate pairing of two-component radial fields.

        Fields are shaped (2, n).  Returns 2*pi*int (f1 conj(g1) + f2 conj(g2)) r dr.
        """
        return 2.0 * np.pi * self.integrate(f[0] * np.conj(g[0]) + f[1] * np.conj(g[1]))

    def norm(self, f):
        f = np.atleast_2d(f)
        return float(np.sqrt(sum(2.0 * np.pi * self.integrate(np.abs(c) ** 2) for c in f)))

    def weighted_norm(self, f, s):
        """L2 norm with polynomial weight <r>^s (s may be negative)."""
        w = (1.0 + self.nodes**2) ** (s / 2.0)
        f = np.atleast_2d(f)
        return float(np.sqrt(sum(2.0 * np.pi * self.integrate(np.abs(w * c) ** 2) for c in f)))


def make_radial_grid(r_max: float = DEFAULT_R_MAX, n: int = DEFAULT_RADIAL_N) -> RadialGrid:
    """Build the composite Gauss-Legendre radial grid.

    ``n`` must be a multiple of the panel size (4) and at least 16.
    """
    if not np.isfinite(r_max) or r_max <= 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if n < 16:
        raise ValueError(f"n must be at least 16, got {n}")
    if n % PANEL_SIZE != 0:
        raise ValueError(f"n must be a multiple of {PANEL_SIZE}, got {n}")

    x, w = np.polynomial.legendre.leggauss(PANEL_SIZE)
    panels = n // PANEL_SIZE
    edges = np.linspace(0.0, r_max, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    base = (half[:, None] * w[None, :]).ravel()
    return RadialGrid(r_max=float(r_max), n=int(n), nodes=nodes, weights=base * nodes)


@dataclass(frozen=True)
class CartesianGrid2D:
    """Periodic square box [-L, L)^2 with M points per side (M even)."""

    half_width: float
    points: int

    def __post_init__(self):
        if self.points % 2 != 0 or self.points < 8:
            raise ValueError(f"points must be even and >= 8, got {self.points}")
        if self.half_width <= 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / self.points

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.step * np.arange(self.points)

    @cached_property
    def mesh(self):
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        xx, yy = self.mesh
        return np.hypot(xx, yy)

    @cached_property
    def freq_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.step)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k = self.freq_axis
        return k[:, None] ** 2 + k[None, :] ** 2

    def integrate(self, values):
        return np.sum(values) * self.step**2

    def inner(self, f, g):
        return self.integrate(f * np.conj(g))

    def norm(self, f):
        return float(np.sqrt(np.real(self.inner(f, f))))

    def weight(self, s) -> np.ndarray:
        return (1.0 + self.radius**2) ** (s / 2.0)

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """Point reflection x -> -x on the periodic index set."""
        return np.roll(np.flip(values, axis=(0, 1)), shift=(1, 1), axis=(0, 1))

    def even_symmetry_residual(self, values: np.ndarray) -> float:
        scale = np.max(np.abs(values))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(values - self.reflect(values))) / scale)

    def gradient_norm_sq(self, values: np.ndarray) -> float:
        """Integral of |grad f|^2 via the spectral derivative."""
        fh = np.fft.fft2(values)
        k = self.freq_axis
        gx = np.fft.ifft2(1j * k[:, None] * fh)
        gy = np.fft.ifft2(1j * k[None, :] * fh)
        return float(np.real(self.integrate(np.abs(gx) ** 2 + np.abs(gy) ** 2)))


def make_cartesian_grid(half_width: float = DEFAULT_BOX_HALFWIDTH,
                        points: int = DEFAULT_BOX_POINTS) -> CartesianGrid2D:
    return CartesianGrid2D(half_width=float(half_width), points=int(points))
