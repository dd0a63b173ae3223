"""
Spherical-shell passage detector.

The effect is ``A = Q* P Q`` where ``P`` projects onto the shell
``R - rho/2 <= r <= R + rho/2`` and ``Q = -i d/dr (2mH)^{-1/2} - 1`` keeps the
outgoing part of a scattering eigenfunction. On an energy eigenfunction
``(2mH)^{-1/2}`` is the number ``1/k``, which is the only place it is used.

Sign conventions (calibrated, see the tests):

* ``SELECTOR_SIGN``: ``Q u = SELECTOR_SIGN (i/k) u' - u``. With ``+1`` the
  outgoing wave ``exp(ikr)`` is mapped to ``-2 exp(ikr)`` and the incoming
  wave ``exp(-ikr)`` is annihilated.
* ``R_SIGN``, ``PHASE_SIGN``: the closed-form kernel is
  ``sinc(rho (k-k')/2) exp(i R_SIGN R (k-k')) exp(-i PHASE_SIGN (delta(k) - delta(k')))``.
* ``DELAY_SIGN``: ``d_A(E) = mR/k + DELAY_SIGN d delta/dE``.

With these values the free connection is ``+mR/k`` (the classical traversal
time) and a repulsive potential produces an earlier click.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .grid import KernelOperator
from .povm import Connection, EffectKernel, NormalizedKernel
from .radial import RANGE_TOL
from .stencils import uniform_derivative

SELECTOR_SIGN = +1
R_SIGN = -1
PHASE_SIGN = +1
DELAY_SIGN = +1


@dataclass(frozen=True)
class ShellSpec:
    """Shell of radius ``R`` (its centre) and thickness ``rho``; ``rho = 0`` is the thin limit."""

    R: float
    rho: float = 0.0
    mass: float = 1.0

    def __post_init__(self):
        if not self.R > 0:
            raise DomainError(f"shell radius must be positive, got {self.R}")
        if not self.rho >= 0:
            raise DomainError(f"shell thickness must be >= 0, got {self.rho}")
        if self.rho / 2 >= self.R:
            raise DomainError("shell reaches the origin")
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")

    @property
    def r_inner(self):
        return self.R - 0.5 * self.rho

    @property
    def r_outer(self):
        return self.R + 0.5 * self.rho

    def check_outside(self, potential):
        """The shell must sit where the potential has died out."""
        if self.r_inner < potential.range_radius() or abs(potential(self.r_inner)) >= RANGE_TOL:
            raise DomainError(
                f"shell at r={self.r_inner:.6g} lies inside the potential range "
                f"({potential.range_radius():.6g})")


@dataclass(frozen=True)
class OutgoingSelector:
    sign: int = SELECTOR_SIGN
    order: int = 8

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise DomainError("selector sign must be +1 or -1")


def apply_Q(sel, wave, k, dr):
    """``(Q u)(r) = sign (i/k) u'(r) - u(r)`` on a uniform radial grid."""
    u = np.asarray(wave)
    du = uniform_derivative(u, dr, order=sel.order)
    return sel.sign * 1j / k * du - u


def calibrate_selector(k=1.3, dr=0.01, r_max=20.0):
    """
    Pick the selector sign that annihilates ``exp(-ikr)``.

    Returns ``(sign, outgoing_factor, incoming_residual)``.
    """
    r = np.arange(int(round(r_max / dr)) + 1) * dr
    out, inc = np.exp(1j * k * r), np.exp(-1j * k * r)
    best = None
    for s in (1, -1):
        sel = OutgoingSelector(s)
        res = np.abs(apply_Q(sel, inc, k, dr)).max()
        fac = complex(np.mean(apply_Q(sel, out, k, dr) / out))
        if best is None or res < best[2]:
            best = (s, fac, float(res))
    return best


def _shell_weights(r, lo, hi):
    """
    Trapezoid weights on the nodes ``[lo, grid nodes inside, hi]``; returns
    ``(positions, weights)``.
    """
    inside = r[(r > lo) & (r < hi)]
    pos = np.concatenate([[lo], inside, [hi]])
    gaps = np.diff(pos)
    w = np.zeros(len(pos))
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return pos, w


def numerical_effect_kernel(sel, shell, solutions, grid):
    """
    Effect kernel ``a(E_i, E_j) = m / sqrt(k_i k_j) int conj(Q u_i) (Q u_j) dr``
    over the shell, from numerical radial solutions at the grid momenta.

    The solutions are rescaled to ``exp(-ikr) + exp(ikr + i delta)``
    asymptotics first. The integral is a trapezoid rule on the radial nodes
    plus the two shell edges (values there by linear interpolation), so the
    kernel is a Gram matrix and positive by construction.
    """
    if shell.rho <= 0:
        raise DomainError("the numerical kernel needs a shell of positive thickness")
    if grid.fiber_dim != 1:
        raise DomainError("shell kernels are scalar (one partial wave)")
    if len(solutions) != grid.n_points:
        raise DomainError(f"{len(solutions)} solutions for {grid.n_points} grid points")
    r = solutions[0].r_grid
    for s in solutions[1:]:
        if s.r_grid.shape != r.shape or s.r_grid[-1] != r[-1]:
            raise DomainError("radial solutions do not share one radial grid")
    ks = np.array([s.k for s in solutions])
    if not np.allclose(ks, grid.momenta, rtol=1e-12, atol=0):
        raise DomainError("solution momenta do not match the energy grid")
    dr = solutions[0].dr
    if shell.r_inner < r[0] + 5 * dr or shell.r_outer > r[-1] - 5 * dr:
        raise DomainError("shell does not fit inside the radial grid")

    pos, wts = _shell_weights(r, shell.r_inner, shell.r_outer)
    lo = int(np.searchsorted(r, shell.r_inner)) - 6
    hi = int(np.searchsorted(r, shell.r_outer)) + 6
    X = np.empty((len(pos), len(ks)), dtype=complex)
    for j, s in enumerate(solutions):
        q = apply_Q(sel, s.paper_wave()[lo:hi], s.k, dr)
        X[:, j] = np.interp(pos, r[lo:hi], q.real) + 1j * np.interp(pos, r[lo:hi], q.imag)
    X *= np.sqrt(shell.mass / ks)[None, :]
    a = X.conj().T @ (wts[:, None] * X)
    a = 0.5 * (a + a.conj().T)
    return EffectKernel(KernelOperator(a, grid, hermitian=True))


def _phase(shell, table, grid):
    if abs(table.mass - grid.mass) > 1e-12 or abs(shell.mass - grid.mass) > 1e-12:
        raise DomainError("shell, phase table and grid must share the mass")
    k = grid.momenta
    return k, table.delta_paper_at(k)


def closed_form_c(shell, table, grid):
    """Normalized kernel of the shell effect with the outgoing waves replaced by their asymptotics."""
    if grid.fiber_dim != 1:
        raise DomainError("shell kernels are scalar (one partial wave)")
    k, delta = _phase(shell, table, grid)
    dk = k[:, None] - k[None, :]
    c = np.sinc(shell.rho * dk / (2 * np.pi))
    c = c * np.exp(1j * R_SIGN * shell.R * dk) * np.exp(-1j * PHASE_SIGN * (delta[:, None] - delta[None, :]))
    np.fill_diagonal(c, 1.0)
    return NormalizedKernel(KernelOperator(c, grid, hermitian=True))


def shell_connection(shell, table, grid):
    """``d_A(E) = mR/k + DELAY_SIGN * d delta / dE``."""
    k, _ = _phase(shell, table, grid)
    return Connection(shell.mass * shell.R / k + DELAY_SIGN * table.dDelta_dE_at(k), grid)
