"""
Radial Schrodinger equation for short-range central potentials.

Solves ``u'' = [2 m V(r) + l(l+1)/r^2 - k^2] u`` with the regular boundary
condition by the Numerov method, vectorized over momenta, and extracts the
phase shift by matching to Riccati-Bessel functions outside the potential.

Phase conventions: ``delta_std`` is the usual shift,
``u ~ sin(kr - l pi/2 + delta_std)``. The outgoing-wave convention
``u ~ exp(-ikr) + exp(ikr + i delta)`` used for the detector construction
corresponds to ``delta_paper = pi + 2 delta_std`` (the constant offset is
fixed per channel; only energy derivatives are consumed downstream).

Potentials with jumps (square barrier, truncated tables) are integrated
piecewise: Numerov inside each smooth segment, with a short RK4 bridge across
every breakpoint so the fourth-order accuracy survives the discontinuity.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import spherical_jn, spherical_yn

from .exceptions import DomainError, NumericalFailure
from .stencils import fornberg_weights, nonuniform_derivative

KINDS = ("free", "hard_sphere", "square_barrier", "exponential", "tabulated")
RANGE_TOL = 1e-12
RESCALE_AT = 1e100
RESCALE_LIMIT_LOG10 = 300.0
KDR_LIMIT = 0.2
UNWRAP_MAX_STEP = np.pi / 4
RK_SUBSTEPS = 64
_EPS = 1e-10


@dataclass(frozen=True)
class PotentialSpec:
    """A central potential in one partial wave.

    Use the constructors (:meth:`free`, :meth:`hard_sphere`,
    :meth:`square_barrier`, :meth:`exponential`, :meth:`tabulated`,
    :meth:`from_file`) rather than filling the fields by hand.
    """

    kind: str
    ell: int = 0
    mass: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if int(self.ell) != self.ell or self.ell < 0:
            raise DomainError(f"angular momentum must be a nonnegative integer, got {self.ell}")
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        p = self.params
        if self.kind == "hard_sphere" and not p.get("radius", 0) > 0:
            raise DomainError("hard_sphere needs radius > 0")
        if self.kind == "square_barrier" and not p.get("width", 0) > 0:
            raise DomainError("square_barrier needs width > 0")
        if self.kind == "exponential" and not p.get("range", 0) > 0:
            raise DomainError("exponential needs range > 0")
        if self.kind == "tabulated":
            r = np.asarray(p["r"], dtype=float)
            if r.ndim != 1 or len(r) < 2 or np.any(np.diff(r) <= 0) or r[0] < 0:
                raise DomainError("tabulated potential needs >= 2 strictly ascending radii >= 0")
            if len(p["V"]) != len(r):
                raise DomainError("tabulated potential: r and V have different lengths")

    @classmethod
    def free(cls, ell=0, mass=1.0):
        return cls("free", ell, mass)

    @classmethod
    def hard_sphere(cls, radius, ell=0, mass=1.0):
        return cls("hard_sphere", ell, mass, {"radius": float(radius)})

    @classmethod
    def square_barrier(cls, height, width, ell=0, mass=1.0):
        return cls("square_barrier", ell, mass, {"height": float(height), "width": float(width)})

    @classmethod
    def exponential(cls, strength, range, ell=0, mass=1.0):
        return cls("exponential", ell, mass, {"strength": float(strength), "range": float(range)})

    @classmethod
    def tabulated(cls, r, V, ell=0, mass=1.0):
        return cls("tabulated", ell, mass,
                   {"r": tuple(float(x) for x in r), "V": tuple(float(x) for x in V)})

    @classmethod
    def from_file(cls, path, ell=0, mass=1.0):
        """Two whitespace-separated columns ``r V(r)``; ``#`` starts a comment."""
        data = np.loadtxt(Path(path), comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise DomainError(f"{path}: expected two columns (r, V), got {data.shape[1]}")
        return cls.tabulated(data[:, 0], data[:, 1], ell, mass)

    # ------------------------------------------------------------------

    def potential(self, r):
        """``V(r)``, vectorized. Zero inside a hard sphere (the wall is a boundary condition)."""
        r = np.asarray(r, dtype=float)
        p = self.params
        if self.kind in ("free", "hard_sphere"):
            return np.zeros_like(r)
        if self.kind == "square_barrier":
            return np.where(r < p["width"], p["height"], 0.0)
        if self.kind == "exponential":
            return p["strength"] * np.exp(-r / p["range"])
        rt, vt = np.asarray(p["r"]), np.asarray(p["V"])
        inside = r <= rt[-1]
        return np.where(inside, np.interp(r, rt, vt), 0.0)

    __call__ = potential

    @property
    def inner_radius(self):
        return self.params["radius"] if self.kind == "hard_sphere" else 0.0

    def breakpoints(self):
        """Radii where ``V`` jumps."""
        if self.kind == "square_barrier" and self.params["height"] != 0:
            return [self.params["width"]]
        if self.kind == "tabulated" and self.params["V"][-1] != 0:
            return [self.params["r"][-1]]
        return []

    def range_radius(self, tol=RANGE_TOL):
        """Radius beyond which ``|V| < tol``."""
        p = self.params
        if self.kind == "free":
            return 0.0
        if self.kind == "hard_sphere":
            return p["radius"]
        if self.kind == "square_barrier":
            return p["width"] if abs(p["height"]) >= tol else 0.0
        if self.kind == "exponential":
            v0 = abs(p["strength"])
            return p["range"] * math.log(v0 / tol) if v0 > tol else 0.0
        rt, vt = np.asarray(p["r"]), np.abs(np.asarray(p["V"]))
        big = np.nonzero(vt >= tol)[0]
        if len(big) == 0:
            return 0.0
        i = big[-1]
        return float(rt[min(i + 1, len(rt) - 1)])

    def check_short_range(self, r, what="matching radius"):
        v = abs(float(self.potential(np.array([r]))[0]))
        if v >= RANGE_TOL or r < self.range_radius():
            raise DomainError(
                f"{what} r={r} is inside the potential range (|V| must be below {RANGE_TOL} "
                f"there; range radius is {self.range_radius():.6g})")


@dataclass(frozen=True)
class RadialSolution:
    """Regular radial solution normalized to unit asymptotic amplitude,
    ``u ~ sin(kr - l pi/2 + delta_fit)`` near ``r_max``."""

    r_grid: np.ndarray
    u: np.ndarray
    k: float
    ell: int
    delta_fit: float

    @property
    def dr(self):
        return float(self.r_grid[1] - self.r_grid[0])

    def paper_wave(self):
        """The same solution rescaled to ``exp(-ikr) + exp(ikr + i delta_paper)`` asymptotics."""
        return -2j * np.exp(1j * (self.delta_fit - 0.5 * self.ell * np.pi)) * self.u


@dataclass(frozen=True)
class PhaseShiftTable:
    """Unwrapped phase shifts on a momentum grid."""

    k_grid: np.ndarray
    delta_std: np.ndarray
    delta_paper: np.ndarray
    dDelta_dE: np.ndarray
    mass: float = 1.0
    ell: int = 0

    @property
    def energies(self):
        return self.k_grid ** 2 / (2 * self.mass)

    def _aligned(self, momenta):
        k = np.asarray(momenta, dtype=float)
        if len(k) == len(self.k_grid) and np.allclose(k, self.k_grid, rtol=1e-12, atol=0):
            return None
        lo, hi = self.k_grid[0], self.k_grid[-1]
        if k.min() < lo * (1 - 1e-12) or k.max() > hi * (1 + 1e-12):
            raise DomainError(
                f"phase table covers k in [{lo:.6g}, {hi:.6g}], requested [{k.min():.6g}, {k.max():.6g}]")
        return k

    def delta_paper_at(self, momenta):
        k = self._aligned(momenta)
        if k is None:
            return self.delta_paper.copy()
        return CubicSpline(self.k_grid, self.delta_paper)(k)

    def dDelta_dE_at(self, momenta):
        k = self._aligned(momenta)
        if k is None:
            return self.dDelta_dE.copy()
        return CubicSpline(self.k_grid, self.dDelta_dE)(k)


# --------------------------------------------------------------------------
# Riccati-Bessel matching
# --------------------------------------------------------------------------

def riccati_j(ell, x):
    return x * spherical_jn(ell, x)


def riccati_n(ell, x):
    """``x y_l(x)``; tends to ``-cos(x - l pi/2)``."""
    return x * spherical_yn(ell, x)


def _principal(delta):
    """Reduce modulo pi into (-pi/2, pi/2]."""
    return np.pi / 2 - np.mod(np.pi / 2 - np.asarray(delta, dtype=float), np.pi)


def _two_point_fit(u1, u2, r1, r2, k, ell):
    """Solve ``u = X jhat + Y nhat`` at two radii; returns ``(amplitude, delta, det)``
    with delta in (-pi/2, pi/2] and a signed amplitude."""
    j1, j2 = riccati_j(ell, k * r1), riccati_j(ell, k * r2)
    n1, n2 = riccati_n(ell, k * r1), riccati_n(ell, k * r2)
    det = j1 * n2 - j2 * n1
    X = (u1 * n2 - u2 * n1) / det
    Y = (j1 * u2 - j2 * u1) / det
    amp = np.hypot(X, Y)
    delta = np.arctan2(-Y, X)
    flip = (delta > np.pi / 2) | (delta <= -np.pi / 2)
    delta = np.where(delta > np.pi / 2, delta - np.pi, delta)
    delta = np.where(delta <= -np.pi / 2, delta + np.pi, delta)
    amp = np.where(flip, -amp, amp)
    return amp, delta, det


# --------------------------------------------------------------------------
# integrator
# --------------------------------------------------------------------------

def _f_values(p, r, ks, lo, hi):
    """``f(r, k)`` with V sampled strictly inside the segment ``[lo, hi]``."""
    rr = np.clip(r, lo + _EPS, hi - _EPS) if hi > lo + 2 * _EPS else r
    v = 2.0 * p.mass * p.potential(rr)
    with np.errstate(divide="ignore"):
        cent = p.ell * (p.ell + 1) / np.asarray(r, dtype=float) ** 2 if p.ell else np.zeros_like(rr)
    return (v + cent)[..., None] - ks ** 2


def _rk4(p, ks, u, du, r0, r1, lo, hi, dr, nodes=()):
    """
    Classical RK4 from ``r0`` to ``r1`` with steps of at most ``dr/64``.

    Passes exactly through every radius in ``nodes`` and returns
    ``(u, du, [u at each node])``.
    """
    stops = sorted(set(float(x) for x in nodes if r0 <= x <= r1) | {float(r1)})
    recorded = {}
    x = r0

    def acc(x, y):
        return _f_values(p, np.array([x]), ks, lo, hi)[0] * y

    for stop in stops:
        length = stop - x
        nsub = int(math.ceil(RK_SUBSTEPS * length / dr)) if length > 0 else 0
        for i in range(nsub):
            s = length / nsub
            k1u, k1v = du, acc(x, u)
            k2u, k2v = du + 0.5 * s * k1v, acc(x + 0.5 * s, u + 0.5 * s * k1u)
            k3u, k3v = du + 0.5 * s * k2v, acc(x + 0.5 * s, u + 0.5 * s * k2u)
            k4u, k4v = du + s * k3v, acc(x + s, u + s * k3u)
            u = u + s / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
            du = du + s / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            x = x + s
        x = stop
        recorded[stop] = u.copy()
    return u, du, [recorded[float(n)] for n in nodes]


def integrate_radial(p, ks, r_max, dr):
    """
    Regular solutions on the grid ``r_n = n dr`` for every momentum in ``ks``.

    Returns ``(r, U)`` with ``U`` of shape ``(len(r), len(ks))``, unnormalized.
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    if np.any(ks <= 0):
        raise DomainError("momenta must be positive")
    if not dr > 0 or not r_max > 0:
        raise DomainError("need dr > 0 and r_max > 0")
    if ks.max() * dr >= KDR_LIMIT:
        raise DomainError(f"k dr = {ks.max() * dr:.3g} too coarse; need k dr < {KDR_LIMIT}")
    nr = int(round(r_max / dr)) + 1
    r = np.arange(nr) * dr
    r_in = p.inner_radius
    if r_in >= r[-1] - 2 * dr:
        raise DomainError("radial grid ends inside the hard core")
    U = np.zeros((nr, len(ks)))
    log_scale = np.zeros(len(ks))

    # starting state
    if r_in > 0 or p.ell == 0:
        s_lo = r_in
        u = np.zeros(len(ks))
        du = np.ones(len(ks))
    else:
        s_lo = dr
        v0 = float(p.potential(np.array([0.0]))[0])
        cc = (2 * p.mass * v0 - ks ** 2) / (2 * (2 * p.ell + 3))
        u = dr ** (p.ell + 1) * (1 + cc * dr ** 2)
        du = (p.ell + 1) * dr ** p.ell + cc * (p.ell + 3) * dr ** (p.ell + 2)

    cuts = [b for b in p.breakpoints() if s_lo < b < r[-1]]
    bounds = [s_lo] + sorted(cuts) + [r[-1]]
    c12 = dr * dr / 12.0
    for seg, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        last = seg == len(bounds) - 2
        n1 = int(math.ceil(lo / dr - 1e-9))
        n2 = nr - 1 if last else int(math.floor(hi / dr + 1e-9))
        if n2 - n1 < 10:
            nodes = [n * dr for n in range(n1, n2 + 1)]
            u, du, rec = _rk4(p, ks, u, du, lo, hi, lo, hi, dr, nodes)
            for n, val in zip(range(n1, n2 + 1), rec):
                U[n] = val
            continue
        _, _, rec = _rk4(p, ks, u, du, lo, r[n1 + 1], lo, hi, dr, [r[n1], r[n1 + 1]])
        U[n1], U[n1 + 1] = rec
        f = _f_values(p, r[n1:n2 + 1], ks, lo, hi)
        a = 1.0 - c12 * f
        b = 2.0 + 10.0 * c12 * f
        for i in range(1, n2 - n1):
            n = n1 + i
            U[n + 1] = (b[i] * U[n] - a[i - 1] * U[n - 1]) / a[i + 1]
            big = np.abs(U[n + 1]) > RESCALE_AT
            if big.any():
                U[n1:n + 2, big] /= RESCALE_AT
                log_scale[big] += 100.0
                if log_scale.max() > RESCALE_LIMIT_LOG10:
                    raise NumericalFailure(
                        f"solution growth exceeded 1e{RESCALE_LIMIT_LOG10:.0f} in a forbidden region")
        if not last:
            order = min(8, n2 - n1)
            order -= order % 2
            w = fornberg_weights(np.arange(-order, 1), 0.0)
            du = np.tensordot(w, U[n2 - order:n2 + 1], axes=1) / dr
            u = U[n2].copy()
            if hi - r[n2] > 1e-12:
                u, du, _ = _rk4(p, ks, u, du, r[n2], hi, lo, hi, dr)
    return r, U


def numerov_wavenumber(k, dr):
    """
    Wavenumber of the exact discrete free solutions of the Numerov recurrence.

    For ``u'' = -k^2 u`` the scheme propagates ``sin(q r)`` with
    ``cos(q dr) = b / 2a``, ``a = 1 + (k dr)^2/12``, ``b = 2 - 10 (k dr)^2/12``.
    Matching to Riccati-Bessel functions of ``q r`` instead of ``k r`` removes
    the phase error the scheme would otherwise accumulate across the free
    region. ``a`` and ``b`` are formed with the same floating-point operations
    as in the integrator, and ``2a - b`` is exact, so even the rounding of the
    recurrence coefficients is accounted for.
    """
    c12 = dr * dr / 12.0
    f = 0.0 - np.asarray(k, dtype=float) ** 2
    a = 1.0 - c12 * f
    b = 2.0 + 10.0 * c12 * f
    return 2.0 * np.arcsin(np.sqrt((2.0 * a - b) / (4.0 * a))) / dr


def _partner_offset(q, dr):
    """Grid offset of the second matching point, about a quarter wavelength away.

    Adjacent points would make the match ill-conditioned by a factor ``1/(q dr)``.
    """
    return np.maximum(1, np.round(0.5 * np.pi / (np.asarray(q) * dr)).astype(int))


def _fit_at(r, U, ks, ell, im):
    """Two-point match starting at index ``im`` (moved inward if the partner falls off the grid)."""
    dr = r[1] - r[0]
    q = numerov_wavenumber(ks, dr)
    off = _partner_offset(q, dr)
    i1 = np.minimum(im, len(r) - 1 - off)
    i2 = i1 + off
    cols = np.arange(len(ks))
    return _two_point_fit(U[i1, cols], U[i2, cols], r[i1], r[i2], q, ell)


def solve_radial_many(p, ks, r_max, dr):
    """Solve for every momentum in ``ks``; returns a list of :class:`RadialSolution`."""
    p.check_short_range(r_max - dr, "r_max")
    r, U = integrate_radial(p, ks, r_max, dr)
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    amp, delta, _ = _fit_at(r, U, ks, p.ell, len(r) - 1)
    if np.any(np.abs(amp) < 1e-300):
        raise NumericalFailure("solution vanished identically")
    U = U / amp
    return [RadialSolution(r, U[:, i], float(k), p.ell, float(delta[i])) for i, k in enumerate(ks)]


def solve_radial(p, k, r_max, dr):
    """Regular solution at one momentum, normalized to unit asymptotic amplitude."""
    return solve_radial_many(p, [k], r_max, dr)[0]


def extract_phase_shift(sol, p, r_match, max_retries=10):
    """Principal-branch ``delta_std`` from a two-point Riccati-Bessel match at ``r_match``."""
    p.check_short_range(r_match)
    r, dr = sol.r_grid, sol.dr
    im = int(round(r_match / dr))
    for _ in range(max_retries + 1):
        if im + 1 >= len(r):
            raise DomainError(f"matching radius {r_match} is beyond the radial grid")
        q = float(numerov_wavenumber(sol.k, dr))
        im2 = im + int(_partner_offset(q, dr))
        if im2 >= len(r):
            raise DomainError(f"matching radius {r_match} leaves no room for the second point")
        amp, delta, det = _two_point_fit(sol.u[im], sol.u[im2], r[im], r[im2], q, sol.ell)
        scale = max(abs(riccati_j(sol.ell, q * r[im])), abs(riccati_n(sol.ell, q * r[im])), 1e-300)
        if abs(det) > 1e-10 * scale ** 2 and abs(amp) > 1e-12 * np.abs(sol.u).max():
            return float(delta)
        im += 1
    raise NumericalFailure(f"phase match degenerate near r={r_match} after {max_retries} shifts")


def unwrap_phase(principal, max_step=UNWRAP_MAX_STEP):
    """Add multiples of pi so consecutive values are continuous."""
    out = np.array(principal, dtype=float)
    for i in range(1, len(out)):
        jump = out[i] - out[i - 1]
        out[i] -= np.pi * np.round(jump / np.pi)
        if abs(out[i] - out[i - 1]) > max_step:
            raise NumericalFailure(
                f"phase branch ambiguous between k-grid points {i - 1} and {i} "
                f"(step {out[i] - out[i - 1]:.3g}); use a finer k grid")
    return out


def build_phase_table(p, k_grid, r_max=40.0, dr=0.01, r_match=None):
    """
    Phase shifts on ``k_grid`` with continuous branch and ``d delta_paper / dE``.

    The energy derivative is a 9-point stencil in ``E = k^2/2m`` (eighth order
    on a uniform energy grid, one-sided of the same width at the ends), the
    same order the connection stencils use.
    """
    k = np.asarray(k_grid, dtype=float)
    if k.ndim != 1 or len(k) < 5 or np.any(np.diff(k) <= 0):
        raise DomainError("k_grid must be ascending with at least 5 points")
    if r_match is None:
        r_match = r_max - 5.0
    p.check_short_range(r_match)
    p.check_short_range(r_max - dr, "r_max")
    r, U = integrate_radial(p, k, r_max, dr)
    im = int(round(r_match / dr))
    if im + 1 >= len(r):
        raise DomainError(f"matching radius {r_match} is beyond r_max={r_max}")
    _, principal, det = _fit_at(r, U, k, p.ell, im)
    if np.any(np.abs(det) < 1e-12):
        # rare: fall back to the per-solution retry logic
        sols = solve_radial_many(p, k, r_max, dr)
        principal = np.array([extract_phase_shift(s, p, r_match) for s in sols])
    delta_std = unwrap_phase(principal)
    delta_paper = np.pi + 2.0 * delta_std
    energies = k ** 2 / (2 * p.mass)
    d_dE = nonuniform_derivative(energies, delta_paper, npts=9 if len(k) >= 9 else 5)
    return PhaseShiftTable(k, delta_std, delta_paper, d_dE, p.mass, p.ell)


def on_shell_S(table):
    """``S(E) = exp(i delta_paper)`` on the table's momenta."""
    return np.exp(1j * table.delta_paper)


def check_unitary(S, atol=1e-10):
    """Validate a list of unitary matrices (or unimodular scalars); returns an array."""
    S = np.asarray(S, dtype=complex)
    if S.ndim == 1:
        dev = np.abs(np.abs(S) - 1.0).max()
    else:
        eye = np.eye(S.shape[-1])
        dev = np.abs(np.einsum("nij,nkj->nik", S, S.conj()) - eye).max()
    if dev > atol:
        raise DomainError(f"on-shell S is not unitary (deviation {dev:.3g})")
    return S


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def analytic_phase_shift(p, k):
    """Principal-branch ``delta_std`` for the closed-form cases (l = 0 for the barrier)."""
    k = np.asarray(k, dtype=float)
    if p.kind == "free":
        return np.zeros_like(k)
    if p.kind == "hard_sphere" and p.ell == 0:
        return _principal(-k * p.params["radius"])
    if p.kind == "square_barrier" and p.ell == 0:
        g, _ = _barrier_g(p, k)
        return _principal(np.arctan(g) - k * p.params["width"])
    raise DomainError(f"no closed form for {p.kind} with l={p.ell}")


def analytic_phase_derivative(p, k):
    """``d delta_paper / dE = 2 (m/k) d delta_std / dk`` for the closed-form cases."""
    k = np.asarray(k, dtype=float)
    m = p.mass
    if p.kind == "free":
        return np.zeros_like(k)
    if p.kind == "hard_sphere" and p.ell == 0:
        return -2.0 * m * p.params["radius"] / k
    if p.kind == "square_barrier" and p.ell == 0:
        g, dg = _barrier_g(p, k)
        dd_dk = dg / (1 + g * g) - p.params["width"]
        return 2.0 * (m / k) * dd_dk
    raise DomainError(f"no closed form for {p.kind} with l={p.ell}")


def _barrier_g(p, k):
    """``g = (k/K) tan(K r0)`` (or the tanh form below the barrier) and ``dg/dk``."""
    v0, r0, m = p.params["height"], p.params["width"], p.mass
    q2 = k * k - 2 * m * v0
    g = np.empty_like(k)
    dg = np.empty_like(k)
    above = q2 > 1e-14
    below = q2 < -1e-14
    at = ~(above | below)
    K = np.sqrt(np.abs(q2))
    Ka = K[above]
    ka = k[above]
    t = np.tan(Ka * r0)
    g[above] = ka / Ka * t
    dg[above] = t / Ka + ka * (ka / Ka) * (r0 / (Ka * np.cos(Ka * r0) ** 2) - t / Ka ** 2)
    Kb = K[below]
    kb = k[below]
    th = np.tanh(Kb * r0)
    g[below] = kb / Kb * th
    dg[below] = th / Kb - kb * (kb / Kb) * (r0 / (Kb * np.cosh(Kb * r0) ** 2) - th / Kb ** 2)
    # K -> 0: g -> k r0 (1 + (K r0)^2/3 ...), leading order suffices at the isolated point
    g[at] = k[at] * r0
    dg[at] = r0 + k[at] ** 2 * r0 ** 3 * 2.0 / 3.0
    return g, dg
