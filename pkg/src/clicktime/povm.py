"""
Occurrence-time POVM of a detector effect.

Given a positive effect ``A`` with smooth energy kernel ``a(E, E')`` and
``a(E, E) > 0``, the Heisenberg-evolved effect integrated over a time set ``I``
has kernel ``a(E, E') W_I(E - E')`` with ``W_I(x) = int_I exp(i t x) dt``.
Normalizing on the operator level by the total duration ``B`` gives the POVM

    P(I)(E, E') = c(E, E') W_I(E - E') / (2 pi),
    c(E, E') = a(E, E)^{-1/2} a(E, E') a(E', E')^{-1/2}.

Both routes are implemented here: the closed kernel formula
(:func:`interval_kernel`) and the operator construction
``B^{-1/2} B(I) B^{-1/2}`` from the decreasing net ``(B(I) + 1)^{-1}``
(:func:`net_limit_check`, :func:`matrix_povm`). Time integrals are truncated
to the Nyquist window of the grid.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import AccuracyWarning, DomainError, GridMismatchError, NumericalFailure
from .grid import (
    KernelOperator,
    Section,
    check_same_grid,
    identity_kernel,
    inner_product,
    min_eigenvalue,
    operator_eigenvalues,
)
from .stencils import uniform_stencils

POSITIVITY_ATOL = 1e-10
DIAGONAL_FLOOR = 1e-12
SERIES_THRESHOLD = 1e-8
CONNECTION_ASYMMETRY_WARN = 1e-6
DEFAULT_FD_ORDER = 8


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectKernel:
    """Energy kernel ``a(E, E')`` of a positive effect.

    Construction validates hermiticity, positivity of the diagonal and
    (unless ``check_positive=False``) positive semidefiniteness.
    """

    kernel: KernelOperator
    check_positive: bool = True

    def __post_init__(self):
        k = self.kernel
        scale = max(1.0, float(np.abs(k.entries).max()))
        if k.hermitian_deviation() > 1e-12 * scale:
            raise DomainError("effect kernel is not hermitian")
        diag = diagonal_floor(k)
        if diag <= DIAGONAL_FLOOR:
            raise DomainError(
                f"effect kernel needs a(E,E) > 0 at every grid point; smallest diagonal "
                f"eigenvalue is {diag:.3g}. States the effect never sees are not supported.")
        if self.check_positive:
            lam = min_eigenvalue(k)
            if lam < -POSITIVITY_ATOL * max(1.0, scale * k.grid.weight * k.grid.size):
                raise DomainError(f"effect kernel is not positive semidefinite (min eigenvalue {lam:.3g})")

    @property
    def grid(self):
        return self.kernel.grid

    @property
    def entries(self):
        return self.kernel.entries


@dataclass(frozen=True)
class NormalizedKernel:
    """Unit-diagonal kernel ``c(E, E')``; the POVM density in energy space."""

    kernel: KernelOperator
    source: EffectKernel = None

    @property
    def grid(self):
        return self.kernel.grid

    @property
    def entries(self):
        return self.kernel.entries


@dataclass(frozen=True)
class IntervalMeasureKernel:
    """Kernel of the POVM element ``P(I)`` for ``I = [t_a, t_b]``."""

    interval: tuple
    kernel: KernelOperator

    @property
    def grid(self):
        return self.kernel.grid

    @property
    def entries(self):
        return self.kernel.entries

    def eigenvalues(self):
        return operator_eigenvalues(self.kernel)


@dataclass(frozen=True)
class Connection:
    """
    Hermitian connection ``d_A(E)``, in units of time.

    ``values`` is real of shape ``(n,)`` for a scalar fiber, otherwise complex
    ``(n, d, d)``. ``asymmetry`` records the antihermitian part that was
    removed when the finite-difference estimate was hermitized.
    """

    values: np.ndarray
    grid: object
    asymmetry: float = 0.0

    def blocks(self):
        d = self.grid.fiber_dim
        v = np.asarray(self.values)
        if d == 1 and v.ndim == 1:
            return v.reshape(-1, 1, 1).astype(complex)
        return v

    def max_norm(self):
        b = self.blocks()
        return float(max(np.linalg.norm(x, 2) for x in b))

    def hermitian_deviation(self):
        b = self.blocks()
        return float(np.abs(b - np.conj(np.swapaxes(b, 1, 2))).max())

    def __sub__(self, other):
        return transition_time(self, other)


@dataclass(frozen=True)
class TimeWindow:
    half_width: float

    def validate(self, grid):
        if not 0 < self.half_width <= grid.nyquist_time * (1 + 1e-12):
            raise DomainError(
                f"time window half-width {self.half_width} must lie in (0, T*={grid.nyquist_time}]; "
                "longer windows alias on this grid")
        return self


@dataclass(frozen=True)
class NetReport:
    """Outcome of the decreasing-net check for ``(B_T + 1)^{-1}``."""

    T_list: tuple
    positivity_floor: float
    upper_ceiling: float
    monotone_floor: float
    C: np.ndarray
    B: np.ndarray

    @property
    def passed(self):
        return (self.positivity_floor >= -POSITIVITY_ATOL
                and self.upper_ceiling <= 1 + POSITIVITY_ATOL
                and self.monotone_floor >= -POSITIVITY_ATOL)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def diagonal_floor(kernel):
    """Smallest eigenvalue over the diagonal fiber blocks ``K(E_i, E_i)``."""
    blocks = kernel.diagonal_blocks()
    herm = 0.5 * (blocks + np.conj(np.swapaxes(blocks, 1, 2)))
    return float(np.linalg.eigvalsh(herm)[:, 0].min())


def _block_view(entries, grid):
    n, d = grid.n_points, grid.fiber_dim
    return entries.reshape(n, d, n, d)


def _inverse_sqrt_blocks(blocks):
    lam, vec = np.linalg.eigh(blocks)
    if lam.min() <= DIAGONAL_FLOOR:
        raise DomainError(f"a(E,E) must be positive definite; found eigenvalue {lam.min():.3g}")
    return np.einsum("nij,nj,nkj->nik", vec, lam ** -0.5, vec.conj())


def window_integral(delta, t_a, t_b):
    """
    ``W(delta) = int_{t_a}^{t_b} exp(i t delta) dt``.

    Written as ``exp(i t_mid delta) L sin(L delta/2)/(L delta/2)`` with an
    explicit Taylor branch for ``|delta| < 1e-8``.
    """
    delta = np.asarray(delta, dtype=float)
    length = t_b - t_a
    mid = 0.5 * (t_a + t_b)
    x = 0.5 * length * delta
    small = (np.abs(delta) < SERIES_THRESHOLD) | (np.abs(x) < SERIES_THRESHOLD)
    safe = np.where(small, 1.0, x)
    sinc = np.where(small, 1.0 - x * x / 6.0, np.sin(x) / safe)
    return np.exp(1j * mid * delta) * length * sinc


def _check_interval(interval, allow_degenerate=False):
    t_a, t_b = float(interval[0]), float(interval[1])
    if not (np.isfinite(t_a) and np.isfinite(t_b)):
        raise DomainError("interval must be bounded")
    if t_b < t_a or (t_b == t_a and not allow_degenerate):
        raise DomainError(f"interval needs t_b > t_a, got [{t_a}, {t_b}]")
    return t_a, t_b


def _window_matrix(grid, t_a, t_b):
    return grid.expand(window_integral(grid.energy_differences(), t_a, t_b))


# --------------------------------------------------------------------------
# kernel route
# --------------------------------------------------------------------------

def make_effect(entries, grid, check_positive=True):
    """Wrap a raw kernel array as an :class:`EffectKernel`."""
    return EffectKernel(KernelOperator(entries, grid, hermitian=True), check_positive)


def normalize_kernel(a):
    """``c(E,E') = a(E,E)^{-1/2} a(E,E') a(E',E')^{-1/2}`` with unit diagonal."""
    grid = a.grid
    n, d = grid.n_points, grid.fiber_dim
    if d == 1:
        diag = np.real(np.diag(a.entries))
        if diag.min() <= DIAGONAL_FLOOR:
            raise DomainError(
                f"cannot normalize: a(E,E) must be > 0 (assumption of the construction), "
                f"min is {diag.min():.3g}")
        s = diag ** -0.5
        c = s[:, None] * a.entries * s[None, :]
        np.fill_diagonal(c, 1.0)
    else:
        s = _inverse_sqrt_blocks(a.kernel.diagonal_blocks())
        a4 = _block_view(a.entries, grid)
        c4 = np.einsum("iab,ibjc,jcd->iajd", s, a4, s)
        idx = np.arange(n)
        c4[idx, :, idx, :] = np.eye(d)
        c = c4.reshape(n * d, n * d)
    c = 0.5 * (c + c.conj().T)
    return NormalizedKernel(KernelOperator(c, grid, hermitian=True), a)


def interval_kernel(c, interval):
    """Kernel of ``P(I)``: ``c(E,E') W_I(E - E') / (2 pi)``."""
    t_a, t_b = _check_interval(interval)
    grid = c.grid
    k = c.entries * _window_matrix(grid, t_a, t_b) / (2 * np.pi)
    return IntervalMeasureKernel((t_a, t_b), KernelOperator(k, grid))


def shift_interval_covariance_check(c, interval, t):
    """
    Max entrywise deviation between ``exp(itE) P(I) exp(-itE)`` and ``P(I + t)``,
    in operator-matrix units (kernel times quadrature weight) like the other checks.
    """
    grid = c.grid
    p = interval_kernel(c, interval).entries
    phase = np.repeat(np.exp(1j * t * grid.energies), grid.fiber_dim)
    shifted = phase[:, None] * p * phase.conj()[None, :]
    moved = interval_kernel(c, (interval[0] + t, interval[1] + t)).entries
    return float(grid.weight * np.abs(shifted - moved).max())


# --------------------------------------------------------------------------
# operator route
# --------------------------------------------------------------------------

def duration_operator(a, interval):
    """Kernel of ``B(I) = int_I alpha_t(A) dt`` for a bounded interval."""
    t_a, t_b = _check_interval(interval, allow_degenerate=True)
    grid = a.grid
    return KernelOperator(a.entries * _window_matrix(grid, t_a, t_b), grid)


def truncated_duration_operator(a, T):
    """Kernel of ``B_T = int_{-T}^{T} alpha_t(A) dt``; requires ``T <= T*``.

    ``a`` may also be a bare hermitian :class:`KernelOperator`; the duration
    operators do not need ``a(E,E) > 0``, only the normalization does.
    """
    half = T.half_width if isinstance(T, TimeWindow) else float(T)
    TimeWindow(half).validate(a.grid)
    k = duration_operator(a, (-half, half)).entries
    return KernelOperator(0.5 * (k + k.conj().T), a.grid, hermitian=True)


def _hermitize(m):
    return 0.5 * (m + m.conj().T)


def _resolvent(a, T):
    """Operator matrix of ``(B_T + 1)^{-1}``."""
    b = truncated_duration_operator(a, T).matrix()
    return _hermitize(np.linalg.inv(np.eye(a.grid.size) + b))


def net_limit_check(a, T_list):
    """
    Check that ``(B_T + 1)^{-1}`` is a decreasing net of positive contractions.

    Returns a :class:`NetReport` whose ``C`` is the operator matrix at the
    largest ``T`` and ``B = C^{-1} - 1``. Both are operator matrices (acting on
    section values), not kernels.
    """
    ts = [float(t) for t in T_list]
    if not ts:
        raise DomainError("T_list is empty")
    if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])):
        raise DomainError("T_list must be strictly ascending")
    for t in ts:
        TimeWindow(t).validate(a.grid)
    resolvents = [_resolvent(a, t) for t in ts]
    eigs = [np.linalg.eigvalsh(r) for r in resolvents]
    pos = min(float(e[0]) for e in eigs)
    top = max(float(e[-1]) for e in eigs)
    mono = np.inf
    for r1, r2 in zip(resolvents, resolvents[1:]):
        mono = min(mono, float(np.linalg.eigvalsh(_hermitize(r1 - r2))[0]))
    C = resolvents[-1]
    B = _hermitize(np.linalg.inv(C) - np.eye(a.grid.size))
    return NetReport(tuple(ts), pos, top, float(mono) if np.isfinite(mono) else 0.0, C, B)


def duration_limit(a):
    """Operator matrix of the total duration ``B``, taken at the Nyquist window."""
    return net_limit_check(a, [a.grid.nyquist_time]).B


def matrix_povm(a, interval, B=None):
    """
    ``P(I) = B^{-1/2} B(I) B^{-1/2}`` through a hermitian eigendecomposition.

    ``B`` (operator matrix) may be passed in to reuse it across intervals.
    """
    t_a, t_b = _check_interval(interval, allow_degenerate=True)
    grid = a.grid
    tstar = grid.nyquist_time
    if t_a < -tstar * (1 + 1e-12) or t_b > tstar * (1 + 1e-12):
        raise DomainError(f"interval [{t_a}, {t_b}] leaves the window [-T*, T*] with T*={tstar}")
    if B is None:
        B = duration_limit(a)
    lam, vec = np.linalg.eigh(B)
    if lam[0] <= 0:
        raise NumericalFailure(f"total duration operator is not invertible (eigenvalue {lam[0]:.3g})")
    root = (vec * lam ** -0.5) @ vec.conj().T
    b_i = duration_operator(a, (t_a, t_b)).matrix()
    p = root @ b_i @ root
    return IntervalMeasureKernel((t_a, t_b), KernelOperator(p / grid.weight, grid))


def total_duration_expectation(a, phi):
    """``<phi, B phi> = 2 pi sum_i w phi_i^* a(E_i,E_i) phi_i``."""
    check_same_grid(a, phi)
    blocks = a.kernel.diagonal_blocks()
    v = phi.blocks()
    val = np.einsum("ia,iab,ib->", v.conj(), blocks, v)
    return float(2 * np.pi * a.grid.weight * val.real)


# --------------------------------------------------------------------------
# first moment: the time operator
# --------------------------------------------------------------------------

def connection(c, order=DEFAULT_FD_ORDER):
    """
    ``d_A(E) = -i d/dE' c(E, E')`` at ``E' = E``.

    The derivative uses an ``order``-accurate centered stencil along the second
    slot (one-sided of equal width at the grid edges). The estimate is
    hermitized; the removed antihermitian part is kept in ``asymmetry``.
    """
    grid = c.grid
    n, d = grid.n_points, grid.fiber_dim
    if n < 3:
        raise DomainError("connection needs at least 3 grid points")
    order = min(order, n - 1 - (n - 1) % 2)
    offsets, weights = uniform_stencils(n, order)
    c4 = _block_view(c.entries, grid)
    rows = np.arange(n)[:, None]
    cols = rows + offsets
    blocks = c4[rows, :, cols, :]  # (n, npts, d, d)
    raw = -1j * np.einsum("ns,nsab->nab", weights, blocks) / grid.spacing
    herm = 0.5 * (raw + np.conj(np.swapaxes(raw, 1, 2)))
    asym = float(np.abs(raw - herm).max())
    if asym > CONNECTION_ASYMMETRY_WARN:
        warnings.warn(
            f"connection asymmetry {asym:.3g} exceeds {CONNECTION_ASYMMETRY_WARN}; "
            "the kernel is not smooth enough on this grid", AccuracyWarning, stacklevel=2)
    values = herm[:, 0, 0].real.copy() if d == 1 else herm
    return Connection(values, grid, asym)


def _check_boundary(phi, atol=1e-8):
    b = phi.blocks()
    edge = max(float(np.abs(b[0]).max()), float(np.abs(b[-1]).max()))
    if edge > atol:
        raise DomainError(
            f"section must vanish at both ends of the spectrum (|phi| = {edge:.3g} at the edge)")


def apply_time_operator(c, phi, order=DEFAULT_FD_ORDER, d=None):
    """``(T_A phi)(E) = -i phi'(E) + d_A(E) phi(E)``."""
    grid = check_same_grid(c, phi)
    _check_boundary(phi)
    if d is None:
        d = connection(c, order)
    n = grid.n_points
    offsets, weights = uniform_stencils(n, min(order, n - 1 - (n - 1) % 2))
    v = phi.blocks()
    dv = np.einsum("ns,nsa->na", weights, v[np.arange(n)[:, None] + offsets]) / grid.spacing
    out = -1j * dv + np.einsum("nab,nb->na", d.blocks(), v)
    return Section(out.reshape(-1), grid)


def time_operator_expectation(c, phi, order=DEFAULT_FD_ORDER, d=None):
    return inner_product(phi, apply_time_operator(c, phi, order, d)).real


def density_coefficients(c, phi):
    """
    Coefficients ``s_n`` with ``p(t) = (1/2pi) sum_n s_n exp(i t n h)``.

    ``n = i - j`` runs over ``-(N-1) .. N-1``; returned in that order.
    """
    grid = check_same_grid(c, phi)
    n, d = grid.n_points, grid.fiber_dim
    w = grid.weight
    v = phi.values
    m = (w * w) * (v.conj()[:, None] * c.entries * v[None, :])
    m = m.reshape(n, d, n, d).sum(axis=(1, 3))
    return np.array([np.trace(m, offset=-k) for k in range(-(n - 1), n)])


def _evaluate_density(coeffs, h, t, chunk=2048):
    n = (len(coeffs) + 1) // 2
    s0 = coeffs[n - 1].real
    pos = coeffs[n:]  # k = 1 .. n-1
    k = np.arange(1, n) * h
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape)
    flat = t.reshape(-1)
    res = out.reshape(-1)
    for start in range(0, flat.size, chunk):
        tt = flat[start:start + chunk]
        ph = np.exp(1j * np.outer(tt, k))
        res[start:start + chunk] = s0 + 2.0 * (ph @ pos).real
    return out / (2 * np.pi)


def click_density(c, phi, t_grid):
    """
    Click-time density
    ``p(t) = (1/2pi) sum_ij w^2 phi_i^* c_ij exp(i t (E_i - E_j)) phi_j``.
    """
    grid = c.grid
    t = np.asarray(t_grid, dtype=float)
    tstar = grid.nyquist_time
    if np.any(np.abs(t) > tstar * (1 + 1e-12)):
        raise DomainError(f"times must lie in [-T*, T*] with T*={tstar:.6g}; larger |t| alias")
    return _evaluate_density(density_coefficients(c, phi), grid.spacing, t)


def nyquist_time_grid(grid, n_t):
    """Midpoint grid of ``n_t`` times covering ``[-T*, T*]``; returns ``(t, dt)``."""
    tstar = grid.nyquist_time
    dt = 2 * tstar / n_t
    return -tstar + (np.arange(n_t) + 0.5) * dt, dt


def first_moment(c, phi, rtol=1e-4, atol=1e-12, max_doublings=14):
    """
    ``sum t p(t) dt`` over the Nyquist window, refined by halving the time
    step until consecutive results agree to ``rtol``.
    """
    grid = c.grid
    coeffs = density_coefficients(c, phi)
    n_t = 2 * grid.n_points
    history = []
    prev = None
    for _ in range(max_doublings + 1):
        t, dt = nyquist_time_grid(grid, n_t)
        val = float(np.sum(t * _evaluate_density(coeffs, grid.spacing, t)) * dt)
        history.append((n_t, val))
        if prev is not None and abs(val - prev) <= rtol * abs(val) + atol:
            return val
        prev = val
        n_t *= 2
    raise NumericalFailure(f"first moment did not converge; (n_t, value) history: {history}")


def transition_time(d1, d2):
    """Pointwise difference ``d_1 - d_2`` of two connections."""
    if d1.grid != d2.grid:
        raise GridMismatchError("connections live on different grids")
    vals = np.asarray(d1.values) - np.asarray(d2.values)
    return Connection(vals, d1.grid, max(d1.asymmetry, d2.asymmetry))


def unit_kernel(grid):
    """Normalized kernel ``c == 1`` (fiber identity in every block)."""
    n, d = grid.n_points, grid.fiber_dim
    k = np.kron(np.ones((n, n)), np.eye(d))
    return NormalizedKernel(KernelOperator(k, grid, hermitian=True))


def phase_kernel(grid, tau):
    """Normalized kernel ``exp(-i tau (E - E'))``; its connection is the constant ``tau``."""
    e = grid.energies
    k = np.exp(-1j * tau * (e[:, None] - e[None, :]))
    k = np.kron(k, np.eye(grid.fiber_dim))
    return NormalizedKernel(KernelOperator(k, grid, hermitian=True))


def identity_measure_deviation(p):
    """Max entrywise deviation of ``w P`` (the operator matrix) from the identity."""
    return float(np.abs(p.kernel.matrix() - np.eye(p.grid.size)).max())


def random_smooth_effect(grid, rng, rank=4):
    """
    Random smooth positive effect ``a = sum_k g_k(E) g_k(E')^*``.

    Each ``g_k`` is a Gaussian bump with a random linear phase; ``g_0`` is a
    broad nowhere-vanishing profile so that ``a(E,E) > 0`` on the whole grid.
    """
    e = grid.energies
    span = grid.e_max - grid.e_min
    d = grid.fiber_dim
    cols = []
    for k in range(rank):
        if k == 0:
            centre, width, amp = 0.5 * (grid.e_min + grid.e_max), 2.0 * span, 1.0
        else:
            centre = rng.uniform(grid.e_min, grid.e_max)
            width = rng.uniform(0.1, 0.4) * span
            amp = rng.uniform(0.2, 1.0)
        tau = rng.uniform(-0.03, 0.03) * grid.nyquist_time
        profile = amp * np.exp(-0.5 * ((e - centre) / width) ** 2) * np.exp(-1j * tau * e)
        fiber = rng.normal(size=d) + 1j * rng.normal(size=d)
        fiber /= np.linalg.norm(fiber)
        cols.append(np.kron(profile, fiber))
    g = np.array(cols).T
    if d > 1:
        # full-rank fiber floor keeps every diagonal block positive definite
        floor = np.exp(-0.5 * ((e - e.mean()) / (2 * span)) ** 2)
        for a in range(d):
            unit = np.zeros(d)
            unit[a] = 1.0
            g = np.column_stack([g, 0.5 * np.kron(floor, unit)])
    return make_effect(g @ g.conj().T, grid)
