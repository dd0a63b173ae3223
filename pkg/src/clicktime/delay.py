"""
Time delay from three independent routes.

1. Wave packets: click densities at the shell with and without the
   interaction, and the shift between them.
2. On-shell: ``t(E) = S^{-1} (-i dS/dE) + S^{-1} [d_A, S]`` averaged over the
   packet's energy distribution.
3. Operator: ``<S phi, T_A S phi> - <phi, T_A phi>`` with the covariant time
   operator of the shell effect.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import AccuracyWarning, DomainError
from .grid import Section, inner_product
from .povm import apply_time_operator, click_density, connection, time_operator_expectation
from .radial import PotentialSpec, build_phase_table, check_unitary, on_shell_S
from .shell import PHASE_SIGN, R_SIGN, closed_form_c, shell_connection
from .stencils import uniform_derivative

CAPTURED_MASS_MIN = 0.99
NARROW_RATIO = 0.05
TRUNCATION_SIGMAS = 5.0


@dataclass(frozen=True)
class WavePacket:
    """Gaussian momentum amplitude ``exp(-(k - k0)^2 / 4 sigma_k^2)``, cut at 5 sigma_k."""

    k0: float
    sigma_k: float
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise DomainError(f"unsupported packet kind {self.kind!r}")
        if not self.k0 > 0 or not self.sigma_k > 0:
            raise DomainError("packet needs k0 > 0 and sigma_k > 0")

    @property
    def narrow(self):
        return self.sigma_k / self.k0 <= NARROW_RATIO

    @property
    def support(self):
        return self.k0 - TRUNCATION_SIGMAS * self.sigma_k, self.k0 + TRUNCATION_SIGMAS * self.sigma_k

    def amplitude(self, k):
        k = np.asarray(k, dtype=float)
        lo, hi = self.support
        phi = np.exp(-((k - self.k0) ** 2) / (4 * self.sigma_k ** 2))
        return np.where((k >= lo) & (k <= hi), phi, 0.0)

    def section(self, grid):
        """Normalized energy-representation state; ``Phi(E) = phi(k) sqrt(dk/dE)``."""
        if grid.fiber_dim != 1:
            raise DomainError("wave packets live in a scalar channel")
        k = grid.momenta
        lo, hi = self.support
        if lo <= k[1] or hi >= k[-2]:
            raise DomainError(
                f"packet support k in [{lo:.4g}, {hi:.4g}] does not fit inside the grid "
                f"[{k[0]:.4g}, {k[-1]:.4g}]")
        if lo < 0:
            raise DomainError("packet support reaches k < 0")
        vals = self.amplitude(k) * np.sqrt(grid.mass / k)
        return Section(vals, grid).normalized()


@dataclass(frozen=True)
class PacketDensity:
    t: np.ndarray
    p: np.ndarray
    captured_mass: float


@dataclass(frozen=True)
class DelayReport:
    """Delay estimates; all times in units of 1/energy."""

    t_mean_free: float
    t_mean_int: float
    shift_mean: float
    shift_peak: float
    wigner_delay_at_k0: float
    l1_overlap_residual: float
    peak_reliable: bool = True
    peak_free: float = float("nan")
    peak_int: float = float("nan")
    routes: dict = field(default_factory=dict)
    agreement: dict = field(default_factory=dict)

    @property
    def routes_agree(self):
        return all(v["ok"] for v in self.agreement.values())


def _uniform_step(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or len(t) < 3:
        raise DomainError("time grid needs at least 3 points")
    dt = np.diff(t)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * dt.mean():
        raise DomainError("time grid must be uniform and ascending")
    return float(dt.mean())


def packet_click_density(packet, shell, table, t_grid, grid):
    """
    Click density of ``packet`` at ``shell`` for the scattering phases in ``table``.

    For a thin shell the density factorizes, ``p = |G|^2 / 2 pi`` with
    ``G(t) = sum_j w Phi_j exp(i(-R_SIGN R k_j + PHASE_SIGN delta_j - t E_j))``.
    Thick shells go through the general kernel route. The result is
    renormalized on ``t_grid``; the mass it held before that is reported.
    """
    t = np.asarray(t_grid, dtype=float)
    dt = _uniform_step(t)
    tstar = grid.nyquist_time
    if np.any(np.abs(t) > tstar):
        raise DomainError(f"times must lie in [-T*, T*] with T*={tstar:.6g}")
    phi = packet.section(grid)
    if shell.rho == 0:
        k = grid.momenta
        theta = -R_SIGN * shell.R * k + PHASE_SIGN * table.delta_paper_at(k)
        amp = grid.weight * phi.values * np.exp(1j * theta)
        G = np.exp(-1j * np.outer(t, grid.energies)) @ amp
        p = np.abs(G) ** 2 / (2 * np.pi)
    else:
        p = click_density(closed_form_c(shell, table, grid), phi, t)
    mass = float(p.sum() * dt)
    if mass < CAPTURED_MASS_MIN:
        warnings.warn(
            f"time window captures only {mass:.4f} of the click probability; widen it",
            AccuracyWarning, stacklevel=2)
    return PacketDensity(t, p / mass, mass)


def _peak(t, p):
    i = int(np.argmax(p))
    if 0 < i < len(p) - 1:
        y0, y1, y2 = p[i - 1], p[i], p[i + 1]
        den = y0 - 2 * y1 + y2
        if den != 0:
            return float(t[i] + 0.5 * (y0 - y2) / den * (t[1] - t[0]))
    return float(t[i])


def _unimodal(p):
    half = 0.5 * p.max()
    interior = p[1:-1]
    peaks = (interior > p[:-2]) & (interior >= p[2:]) & (interior > half)
    return int(peaks.sum()) <= 1


def measure_shift(p_free, p_int, t_grid, wigner_delay=0.0):
    """Mean and peak shift between two densities and their overlap after undoing ``wigner_delay``."""
    t = np.asarray(t_grid, dtype=float)
    dt = _uniform_step(t)
    pf, pi = np.asarray(p_free, dtype=float), np.asarray(p_int, dtype=float)
    if pf.shape != t.shape or pi.shape != t.shape:
        raise DomainError("densities and time grid differ in length")
    mf = float(np.sum(t * pf) * dt)
    mi = float(np.sum(t * pi) * dt)
    reliable = _unimodal(pf) and _unimodal(pi)
    peak_f, peak_i = _peak(t, pf), _peak(t, pi)
    moved = np.interp(t + wigner_delay, t, pi, left=0.0, right=0.0)
    l1 = float(np.sum(np.abs(moved - pf)) * dt)
    return DelayReport(
        t_mean_free=mf, t_mean_int=mi, shift_mean=mi - mf, shift_peak=peak_i - peak_f,
        wigner_delay_at_k0=float(wigner_delay), l1_overlap_residual=l1,
        peak_reliable=reliable, peak_free=peak_f, peak_int=peak_i)


def _as_blocks(S):
    S = check_unitary(S)
    return S if S.ndim == 3 else S[:, None, None]


def _d_blocks(d_A, n, dim):
    b = d_A.blocks()
    if b.shape[0] != n:
        raise DomainError("connection and S live on grids of different length")
    if b.shape[1] == dim:
        return b
    if b.shape[1] == 1:
        return b * np.eye(dim)[None]
    raise DomainError("connection fiber does not match S")


def eisenbud_wigner_terms(S, d_A):
    """
    The two pieces ``S^{-1}(-i dS/dE)`` and ``S^{-1}[d_A, S]``, as ``(n, d, d)`` arrays.

    ``d_A`` may be scalar even when ``S`` is matrix valued.
    """
    Sb = _as_blocks(S)
    n, dim = Sb.shape[0], Sb.shape[1]
    grid = d_A.grid
    if grid.n_points != n:
        raise DomainError("S and the connection must share the energy grid")
    Sinv = np.conj(np.swapaxes(Sb, 1, 2))
    dS = uniform_derivative(Sb, grid.spacing, order=8, axis=0)
    first = Sinv @ (-1j * dS)
    d = _d_blocks(d_A, n, dim)
    comm = Sinv @ (d @ Sb - Sb @ d)
    return first, comm


def eisenbud_wigner(S, d_A):
    """
    On-shell delay ``S^{-1}(-i dS/dE) + S^{-1}[d_A, S]``.

    Real array for scalar ``S``, hermitian ``(n, d, d)`` array otherwise.
    """
    scalar = np.asarray(S).ndim == 1
    first, comm = eisenbud_wigner_terms(S, d_A)
    total = first + comm
    total = 0.5 * (total + np.conj(np.swapaxes(total, 1, 2)))
    return total[:, 0, 0].real if scalar else total


def _apply_S(S, phi):
    Sb = _as_blocks(S)
    out = np.einsum("nab,nb->na", Sb, phi.blocks())
    return Section(out.reshape(-1), phi.grid)


def operator_delay(phi, S, c, form="difference", d=None):
    """
    ``<S phi, T_A S phi> - <phi, T_A phi>`` (``form="difference"``) or
    ``<phi, S^{-1}[T_A, S] phi>`` (``form="commutator"``).
    """
    if isinstance(phi, WavePacket):
        phi = phi.section(c.grid)
    if d is None:
        d = connection(c)
    out = _apply_S(S, phi)
    if form == "difference":
        return time_operator_expectation(c, out, d=d) - time_operator_expectation(c, phi, d=d)
    if form == "commutator":
        Sb = _as_blocks(S)
        t_out = apply_time_operator(c, out, d=d).values.reshape(Sb.shape[0], -1)
        back = np.einsum("nba,nb->na", np.conj(Sb), t_out).reshape(-1)
        diff = Section(back, phi.grid) - apply_time_operator(c, phi, d=d)
        return inner_product(phi, diff).real
    raise DomainError(f"unknown form {form!r}")


def energy_average(values, phi):
    """``sum_i w |Phi_i|^2 v_i`` for a scalar-fiber state."""
    v = np.asarray(values, dtype=float)
    return float(phi.grid.weight * np.sum(np.abs(phi.values) ** 2 * v))


def _agree(a, b, rtol, atol):
    diff = abs(a - b)
    scale = max(abs(a), abs(b))
    return {"diff": diff, "rel": diff / scale if scale > 0 else 0.0,
            "ok": bool(diff <= rtol * scale + atol)}


def compare_delay_routes(packet, shell, potential, grid, t_grid, r_max=40.0, dr=0.01,
                         r_match=None, rtol=0.05, atol=1e-6):
    """Run all three delay routes for ``potential`` and report their pairwise agreement."""
    shell.check_outside(potential)
    free = PotentialSpec.free(potential.ell, potential.mass)
    k = grid.momenta
    tab_free = build_phase_table(free, k, r_max, dr, r_match)
    tab_int = build_phase_table(potential, k, r_max, dr, r_match)

    dens_free = packet_click_density(packet, shell, tab_free, t_grid, grid)
    dens_int = packet_click_density(packet, shell, tab_int, t_grid, grid)
    wigner_k0 = float(tab_int.dDelta_dE_at(np.array([packet.k0]))[0])
    rep = measure_shift(dens_free.p, dens_int.p, t_grid, wigner_k0)

    phi = packet.section(grid)
    c_free = closed_form_c(shell, tab_free, grid)
    d_free = shell_connection(shell, tab_free, grid)
    S = on_shell_S(tab_int)
    ew = energy_average(eisenbud_wigner(S, d_free), phi)
    op = operator_delay(phi, S, c_free, d=d_free)
    routes = {"density_shift": rep.shift_mean, "eisenbud_wigner": ew, "operator": op}
    names = list(routes)
    agreement = {}
    for i in range(3):
        for j in range(i + 1, 3):
            agreement[f"{names[i]}~{names[j]}"] = _agree(routes[names[i]], routes[names[j]], rtol, atol)
    return DelayReport(
        t_mean_free=rep.t_mean_free, t_mean_int=rep.t_mean_int, shift_mean=rep.shift_mean,
        shift_peak=rep.shift_peak, wigner_delay_at_k0=wigner_k0,
        l1_overlap_residual=rep.l1_overlap_residual, peak_reliable=rep.peak_reliable,
        peak_free=rep.peak_free, peak_int=rep.peak_int, routes=routes, agreement=agreement)
