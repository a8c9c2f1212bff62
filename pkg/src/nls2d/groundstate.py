"""Radial ground states of the focusing 2D NLS.

Solves phi'' + phi'/r - omega phi + beta(phi^2) phi = 0 for positive
decaying profiles: a bisection shooting pass brackets the amplitude and
seeds a Newton collocation polish on a fine uniform grid (shooting alone
loses digits in the tail, Newton alone needs a basin).  Families are
continued in omega and the mass-slope and Morse-index stability criteria
are evaluated on them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse, special
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import splu

from .errors import FamilyBreakError, NoGroundStateError, NumericalFailureError
from .grids import RadialGrid, make_radial_grid
from .radial import (UniformRadialGrid, laplacian_radial,
                     laplacian_tridiag_symmetric, resample)

DEFAULT_FINE_N = 10240
_H4_TOLERANCE = 1e-6


class DegenerateFamilyWarning(UserWarning):
    """The mass-slope solve for the frequency derivative is near-singular."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """Polynomial nonlinearity beta(s) = sum_k c_k s^k, s = |u|^2, c_0 = 0.

    ``coefficients[k]`` multiplies s^(k+1), so there is no constant term
    and beta(0) = 0 holds structurally.  ``growth_exponent`` is the
    declared p0 with |beta(v^2)| <~ |v|^(p0 - 1) for large |v|.
    """

    kind: str
    coefficients: tuple
    growth_exponent: float

    def __post_init__(self):
        if self.kind not in ("cubic", "cubic-quintic", "user-polynomial"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.growth_exponent <= 1.0:
            raise ValueError("growth exponent must exceed 1")
        if 2 * self.effective_degree + 1 > self.growth_exponent + 1e-12:
            raise ValueError(
                f"growth exponent {self.growth_exponent} inconsistent with "
                f"polynomial degree {self.effective_degree}")

    @property
    def effective_degree(self) -> int:
        deg = 0
        for k, c in enumerate(self.coefficients, start=1):
            if c != 0.0:
                deg = k
        return deg

    @classmethod
    def cubic(cls) -> "NonlinearitySpec":
        return cls("cubic", (1.0,), 3.0)

    @classmethod
    def cubic_quintic(cls, c2: float) -> "NonlinearitySpec":
        return cls("cubic-quintic", (1.0, float(c2)), 5.0)

    @classmethod
    def polynomial(cls, coefficients, growth_exponent=None) -> "NonlinearitySpec":
        coefficients = tuple(float(c) for c in coefficients)
        deg = 0
        for k, c in enumerate(coefficients, start=1):
            if c != 0.0:
                deg = k
        if growth_exponent is None:
            growth_exponent = 2 * deg + 1 if deg else 2.0
        return cls("user-polynomial", coefficients, float(growth_exponent))

    def beta(self, s):
        out = np.zeros_like(np.asarray(s, dtype=float))
        for c in reversed(self.coefficients):
            out = (out + c) * s
        return out

    def beta_prime(self, s):
        out = np.zeros_like(np.asarray(s, dtype=float))
        for k in range(len(self.coefficients), 0, -1):
            out = out * s + k * self.coefficients[k - 1]
        return out

    def antiderivative(self, s):
        """B(s) with B' = beta and B(0) = 0 (Pohozaev balance integrand)."""
        out = np.zeros_like(np.asarray(s, dtype=float))
        for k in range(len(self.coefficients), 0, -1):
            out = out * s + self.coefficients[k - 1] / (k + 1)
        return out * s**2

    def existence_ceiling(self) -> float:
        """sup of max_s B(s)/s over s > 0 (infinite for pure focusing)."""
        s = np.linspace(1e-6, 1e4, 200001)
        vals = self.antiderivative(s) / s
        return float(np.max(vals)) if np.max(vals) < np.inf else np.inf


@dataclass(frozen=True)
class RadialProfile:
    """A ground state and its frequency derivative on a radial grid."""

    omega: float
    grid: RadialGrid
    values: np.ndarray
    derivative_values: np.ndarray
    domega_values: np.ndarray
    mass: float
    amplitude: float
    residual: float
    # solver-grid samples; downstream residual checks reuse them so the
    # extra accuracy of the polish grid is not lost to resampling
    fine_payload: dict | None = field(default=None, repr=False, compare=False)

    def tail_decay_rate(self) -> float:
        """Fitted exponential decay rate over the last quarter of the grid.

        The Macdonald prefactor r^(-1/2) is divided out before fitting and
        the outermost unit of the grid is excluded (Dirichlet boundary
        layer of the polish step).
        """
        r = self.grid.nodes
        sel = (r > 0.75 * self.grid.r_max) & (r < self.grid.r_max - 1.0)
        y = np.log(np.maximum(np.sqrt(r[sel]) * np.abs(self.values[sel]), 1e-300))
        return float(np.polyfit(r[sel], y, 1)[0])


@dataclass(frozen=True)
class SolitonFamily:
    nonlinearity: NonlinearitySpec
    profiles: tuple
    omegas: np.ndarray
    masses: np.ndarray
    mass_slopes: np.ndarray  # 2 <phi, d_omega phi> route, per member


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

def _shoot_classify(beta: NonlinearitySpec, omega: float, amplitude: float,
                    r_end: float, rtol: float = 1e-10, dense: bool = False):
    """Integrate outward from the origin; classify the trajectory.

    Returns ('crossed'|'turned'|'decayed', solution).  'crossed' means the
    profile hit zero, 'turned' means it bottomed out while still positive
    and started growing again.
    """

    def rhs(r, y):
        phi, dphi = y
        return (dphi, omega * phi - beta.beta(phi * phi) * phi - dphi / r)

    def crossed(r, y):
        return y[0]
    crossed.terminal = True
    crossed.direction = -1

    def turned(r, y):
        return y[1]
    turned.terminal = True
    turned.direction = 1

    r0 = 1e-8
    curv = 0.25 * (omega * amplitude - beta.beta(amplitude**2) * amplitude)
    y0 = (amplitude + curv * r0 * r0, 2.0 * curv * r0)
    sol = solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=rtol,
                    atol=1e-14 * amplitude, events=(crossed, turned),
                    dense_output=dense)
    if sol.t_events[0].size:
        return "crossed", sol
    if sol.t_events[1].size:
        return "turned", sol
    return "decayed", sol


def _shot_depth(beta, omega, amplitude, r_end):
    """Classification plus the lowest profile value reached (normalized);
    negative depth means the trajectory crossed zero."""
    kind, sol = _shoot_classify(beta, omega, amplitude, r_end, rtol=1e-8)
    if kind == "crossed":
        return kind, -1.0
    low = np.min(sol.y[0]) / amplitude
    return kind, float(low)


def _bracket_amplitude(beta, omega, r_end):
    """Scan the shooting map for a sign change of its classification.

    With a defocusing correction the crossing amplitudes form a window that
    a coarse geometric scan can step over, so the scan refines around the
    deepest near-crossing before giving up.
    """
    grid_lo, grid_hi = 1e-3, 1e3
    amps = np.geomspace(grid_lo, grid_hi, 121)
    for _ in range(4):
        kinds, depths = [], []
        for a in amps:
            kind, depth = _shot_depth(beta, omega, a, r_end)
            kinds.append(kind)
            depths.append(depth)
            if kind == "crossed":
                break
        if kinds[-1] == "crossed":
            idx = len(kinds) - 1
            if idx == 0:
                raise NoGroundStateError(
                    f"shooting map crosses zero already at amplitude {amps[0]} "
                    f"at omega={omega}", bracket=(0.0, amps[0]))
            return amps[idx - 1], amps[idx]
        pivot = int(np.argmin(depths))
        lo = amps[max(pivot - 1, 0)]
        hi = amps[min(pivot + 1, len(amps) - 1)]
        if hi <= lo * (1 + 1e-12):
            break
        amps = np.linspace(lo, hi, 61)
    raise NoGroundStateError(
        f"shooting map has no zero crossing for amplitudes in "
        f"({grid_lo}, {grid_hi}] at omega={omega}", bracket=(grid_lo, grid_hi))


def _bisect_amplitude(beta, omega, lo, hi, r_end, iters=60):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        kind, _ = _shoot_classify(beta, omega, mid, r_end)
        if kind == "crossed":
            hi = mid
        else:
            lo = mid
        if (hi - lo) < 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


def _shooting_profile(beta, omega, amplitude, r_nodes):
    """Evaluate the shot trajectory on nodes, swapping to the decaying
    Macdonald tail once the unstable mode would contaminate it."""
    s = np.sqrt(omega)
    r_join = min(9.0 / s, 0.75 * r_nodes[-1])
    kind, sol = _shoot_classify(beta, omega, amplitude, r_join, rtol=1e-12, dense=True)
    r_join = min(r_join, sol.t[-1])
    out = np.empty_like(r_nodes)
    inside = r_nodes <= r_join
    out[inside] = sol.sol(r_nodes[inside])[0]
    phi_join = float(sol.sol(r_join)[0])
    tail = r_nodes[~inside]
    # K0(s r)/K0(s r_join) evaluated with scaled Bessels to dodge underflow
    ratio = (special.kve(0, s * tail) / special.kve(0, s * r_join)
             * np.exp(-s * (tail - r_join)))
    out[~inside] = phi_join * ratio
    return out


def shooting_oracle(beta: NonlinearitySpec, omega: float, n: int = 8192,
                    r_max: float = 24.0):
    """Independent shooting-only route: amplitude, mass, and the profile
    on a fine uniform grid.  Used to cross-check the Newton solver."""
    fine = UniformRadialGrid(r_max, n)
    lo, hi = _bracket_amplitude(beta, omega, r_max)
    amp = _bisect_amplitude(beta, omega, lo, hi, r_max)
    phi = _shooting_profile(beta, omega, amp, fine.nodes)
    mass = 2.0 * np.pi * fine.integrate(phi**2)
    return {"amplitude": amp, "mass": float(mass), "grid": fine, "values": phi}


# ---------------------------------------------------------------------------
# Newton polish on the fine grid
# ---------------------------------------------------------------------------

def _newton_polish(beta, omega, fine: UniformRadialGrid, phi0, max_iter=40):
    lap = laplacian_radial(fine, m=0, order=4)
    eye = sparse.identity(fine.n, format="csr")
    phi = np.asarray(phi0, dtype=float).copy()
    scale = max(1.0, np.max(np.abs(phi)))
    # the stencil amplifies roundoff by ~1/h^2; below that the residual
    # cannot shrink no matter how exact the discrete solution is
    floor = 200.0 * np.finfo(float).eps * scale / fine.h**2
    best = np.inf
    stalls = 0
    for _ in range(max_iter):
        s = phi * phi
        residual = lap @ phi - omega * phi + beta.beta(s) * phi
        size = np.max(np.abs(residual))
        if size < max(1e-13 * scale, floor):
            break
        stalls = stalls + 1 if size > 0.9 * best else 0
        if stalls >= 2:
            if size < 1e-6 * scale:
                break  # roundoff plateau above the nominal floor estimate
            raise NumericalFailureError(
                "Newton polish stalled before converging",
                diagnostics={"residual": float(size), "omega": omega})
        best = min(best, size)
        jac = lap - omega * eye + sparse.diags(beta.beta(s) + 2.0 * beta.beta_prime(s) * s)
        step = splu(jac.tocsc()).solve(-residual)
        limit = 0.5 * scale
        biggest = np.max(np.abs(step))
        if biggest > limit:
            step *= limit / biggest
        phi = phi + step
    else:
        raise NumericalFailureError(
            "Newton polish did not converge",
            diagnostics={"residual": float(np.max(np.abs(residual))), "omega": omega})
    return phi, lap


def _frequency_derivative(beta, omega, fine, phi, lap):
    """Solve L_plus psi = -phi for psi = d phi / d omega.

    L_plus is the Jacobian of the profile equation in phi; differentiating
    that equation in omega gives L_plus (d_omega phi) = -phi.
    """
    s = phi * phi
    lplus = (-lap + omega * sparse.identity(fine.n, format="csr")
             - sparse.diags(beta.beta(s) + 2.0 * beta.beta_prime(s) * s))
    psi = splu(lplus.tocsc()).solve(-phi)
    if np.linalg.norm(psi) > 1e6 * np.linalg.norm(phi):
        warnings.warn(
            f"frequency-derivative solve is ill-conditioned at omega={omega}; "
            "the family may be degenerate there", DegenerateFamilyWarning)
    return psi


def _ode_residual(beta, omega, fine, phi):
    """Max-norm residual of the profile ODE measured with an independent
    sixth-order stencil, weighted by 1/(1 + |phi|)."""
    lap6 = laplacian_radial(fine, m=0, order=6)
    res = lap6 @ phi - omega * phi + beta.beta(phi * phi) * phi
    interior = slice(0, fine.n - 4)
    return float(np.max(np.abs(res[interior]) / (1.0 + np.abs(phi[interior]))))


def _amplitude_at_origin(fine, phi):
    """Even-symmetric quartic fit through the first nodes."""
    r = fine.nodes[:4]
    vand = np.vander(r * r, 4, increasing=True)
    coeffs = np.linalg.solve(vand, phi[:4])
    return float(coeffs[0])


def solve_ground_state(beta: NonlinearitySpec, omega: float,
                       grid: RadialGrid | None = None,
                       fine_n: int = DEFAULT_FINE_N,
                       _seed_values=None) -> RadialProfile:
    """Positive decaying radial profile at the given frequency.

    Raises NoGroundStateError when the shooting map never changes sign
    (frequency outside the existence window for this nonlinearity).
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if grid is None:
        grid = make_radial_grid()
    fine = UniformRadialGrid(grid.r_max, fine_n)
    if _seed_values is not None:
        guess = np.asarray(_seed_values, dtype=float)
    else:
        r_end = grid.r_max
        lo, hi = _bracket_amplitude(beta, omega, r_end)
        amp = _bisect_amplitude(beta, omega, lo, hi, r_end, iters=48)
        guess = _shooting_profile(beta, omega, amp, fine.nodes)
    phi, lap = _newton_polish(beta, omega, fine, guess)
    if np.min(phi) < -1e-8 * np.max(np.abs(phi)):
        raise NoGroundStateError(f"polished profile lost positivity at omega={omega}")
    psi = _frequency_derivative(beta, omega, fine, phi, lap)

    values = resample(fine.nodes, phi, grid.nodes)
    dvalues = resample(fine.nodes, np.gradient(phi, fine.nodes, edge_order=2), grid.nodes)
    domega = resample(fine.nodes, psi, grid.nodes)
    mass = float(2.0 * np.pi * grid.integrate(values**2))
    profile = RadialProfile(
        omega=float(omega), grid=grid, values=values, derivative_values=dvalues,
        domega_values=domega, mass=mass,
        amplitude=_amplitude_at_origin(fine, phi),
        residual=_ode_residual(beta, omega, fine, phi),
        fine_payload={"grid": fine, "values": phi, "domega_values": psi},
    )
    return profile


def continue_family(beta: NonlinearitySpec, omega_lo: float, omega_hi: float,
                    steps: int, grid: RadialGrid | None = None,
                    fine_n: int = DEFAULT_FINE_N) -> SolitonFamily:
    """Natural continuation: each member seeds the next Newton solve."""
    if not omega_lo < omega_hi:
        raise ValueError("omega_lo must be below omega_hi")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if grid is None:
        grid = make_radial_grid()
    omegas = np.linspace(omega_lo, omega_hi, steps + 1)
    fine = UniformRadialGrid(grid.r_max, fine_n)
    profiles = []
    seed = None
    for w in omegas:
        try:
            prof = solve_ground_state(beta, w, grid=grid, fine_n=fine_n, _seed_values=seed)
        except (NoGroundStateError, NumericalFailureError) as exc:
            last = profiles[-1].omega if profiles else None
            raise FamilyBreakError(
                f"continuation broke at omega={w}: {exc}", last_good_omega=last) from exc
        profiles.append(prof)
        seed = resample(grid.nodes, prof.values, fine.nodes)
        seed = np.maximum(seed, 0.0)
    masses = np.array([p.mass for p in profiles])
    slopes = np.array([2.0 * p.grid.inner(p.values, p.domega_values).real for p in profiles])
    return SolitonFamily(nonlinearity=beta, profiles=tuple(profiles),
                         omegas=omegas, masses=masses, mass_slopes=slopes)


@dataclass(frozen=True)
class SlopeReport:
    omegas: np.ndarray
    slopes_differenced: np.ndarray
    slopes_inner: np.ndarray
    verdicts: tuple

    def all_pass(self) -> bool:
        return all(v == "pass" for v in self.verdicts)


def check_h4(family: SolitonFamily, tolerance: float = _H4_TOLERANCE) -> SlopeReport:
    """Mass-slope stability criterion d ||phi||^2 / d omega > 0, per member.

    The slope is measured two ways: centered differences of the mass curve
    and the inner-product formula 2 <phi, d_omega phi>.  Verdicts:
    'pass' (positive), 'fail' (negative), 'degenerate' (|slope| below
    tolerance).
    """
    if len(family.profiles) < 3:
        raise ValueError("mass-slope check needs at least 3 family members")
    w, mass = family.omegas, family.masses
    diffed = np.gradient(mass, w, edge_order=2)
    verdicts = []
    for s_inner in family.mass_slopes:
        if abs(s_inner) < tolerance:
            verdicts.append("degenerate")
        elif s_inner > 0:
            verdicts.append("pass")
        else:
            verdicts.append("fail")
    return SlopeReport(omegas=w, slopes_differenced=diffed,
                       slopes_inner=family.mass_slopes, verdicts=tuple(verdicts))


def count_negative_eigs_lplus(profile: RadialProfile, beta: NonlinearitySpec,
                              fine_n: int = DEFAULT_FINE_N):
    """Number of negative eigenvalues of the scalar operator
    -Laplacian + omega - beta(phi^2) - 2 beta'(phi^2) phi^2 on even radial
    functions, and its smallest eigenvalue."""
    fine = UniformRadialGrid(profile.grid.r_max, fine_n)
    phi = resample(profile.grid.nodes, profile.values, fine.nodes)
    s = phi * phi
    v = profile.omega - beta.beta(s) - 2.0 * beta.beta_prime(s) * s
    diag, off = laplacian_tridiag_symmetric(fine, m=0)
    try:
        negative = eigh_tridiagonal(diag + v, off, select="v",
                                    select_range=(-1e12, 0.0),
                                    eigvals_only=True)
        smallest = eigh_tridiagonal(diag + v, off, select="i",
                                    select_range=(0, 0), eigvals_only=True)[0]
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalFailureError("tridiagonal eigensolve failed",
                                    diagnostics={"omega": profile.omega}) from exc
    return int(negative.size), float(smallest)


def pohozaev_residual(profile: RadialProfile, beta: NonlinearitySpec) -> float:
    """Relative residual of the planar balance int (omega phi^2 - B(phi^2)) = 0."""
    s = profile.values**2
    balance = profile.grid.plane_integral(profile.omega * s - beta.antiderivative(s))
    scale = profile.grid.plane_integral(profile.omega * s)
    return float(abs(balance) / abs(scale))


def family_csv_rows(family: SolitonFamily):
    """Rows (omega, mass, dmass_domega, phi0, neg_eigs_lplus) for emission."""
    rows = []
    for prof, slope in zip(family.profiles, family.mass_slopes):
        count, _ = count_negative_eigs_lplus(prof, family.nonlinearity, fine_n=2048)
        rows.append((prof.omega, prof.mass, slope, prof.amplitude, count))
    return rows
