"""
Discretized energy representation.

The absolutely continuous spectrum of the Hamiltonian is sampled on a uniform
grid ``E_i = e_min + i*h`` carrying the uniform quadrature weight ``w = h``.
States are sections (one ``fiber_dim`` vector per grid point) and operators are
integral kernels acting by ``(K phi)(E_i) = sum_j w K(E_i, E_j) phi(E_j)``.

On such a grid, ``int_{-T*}^{T*} exp(i t (E_i - E_j)) dt = (2 pi / h) delta_ij``
for the Nyquist time ``T* = pi / h``. All time integrals in the package are
truncated to that window, which turns the continuum delta-function identities
into exact matrix identities.

Storage convention: kernels are ``(n*d, n*d)`` complex arrays with the fiber
index running fastest, sections are length ``n*d`` complex vectors.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, GridMismatchError

HERMITIAN_ATOL = 1e-12
NORMALIZED_ATOL = 1e-12


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform energy grid with ``hbar = 1``."""

    e_min: float
    e_max: float
    n_points: int
    mass: float = 1.0
    fiber_dim: int = 1

    def __post_init__(self):
        if not self.e_min > 0:
            raise DomainError(
                f"e_min must be positive so that k = sqrt(2 m E) is real and nonzero, got {self.e_min}")
        if not self.e_max > self.e_min:
            raise DomainError(f"empty energy range [{self.e_min}, {self.e_max}]")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise DomainError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        if int(self.fiber_dim) != self.fiber_dim or self.fiber_dim < 1:
            raise DomainError(f"fiber_dim must be a positive integer, got {self.fiber_dim}")

    @property
    def spacing(self):
        return (self.e_max - self.e_min) / (self.n_points - 1)

    h = spacing

    @property
    def weight(self):
        return self.spacing

    @property
    def nyquist_time(self):
        """``T* = pi / h``; the largest alias-free time horizon."""
        return np.pi / self.spacing

    @property
    def energies(self):
        return self.e_min + np.arange(self.n_points) * self.spacing

    @property
    def momenta(self):
        return np.sqrt(2.0 * self.mass * self.energies)

    @property
    def size(self):
        """Length of a section vector, ``n_points * fiber_dim``."""
        return self.n_points * self.fiber_dim

    def index_differences(self):
        """Matrix ``i - j`` of grid indices; ``E_i - E_j = h (i - j)``."""
        i = np.arange(self.n_points)
        return i[:, None] - i[None, :]

    def energy_differences(self):
        return self.spacing * self.index_differences()

    def expand(self, scalar_kernel):
        """Broadcast an ``(n, n)`` scalar kernel over the fiber blocks."""
        if self.fiber_dim == 1:
            return scalar_kernel
        return np.kron(scalar_kernel, np.ones((self.fiber_dim, self.fiber_dim)))


def make_grid(e_min, e_max, n_points, mass=1.0, fiber_dim=1):
    """Build an :class:`EnergyGrid`; thin wrapper kept for symmetry with the other builders."""
    return EnergyGrid(float(e_min), float(e_max), int(n_points), float(mass), int(fiber_dim))


def check_same_grid(*objs):
    grids = [o.grid if hasattr(o, "grid") else o for o in objs]
    for g in grids[1:]:
        if g != grids[0]:
            raise GridMismatchError(f"grid mismatch: {grids[0]} vs {g}")
    return grids[0]


@dataclass(frozen=True)
class Section:
    """A state in the energy representation."""

    values: np.ndarray
    grid: EnergyGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if v.size != self.grid.size:
            raise DomainError(f"section has {v.size} values, grid needs {self.grid.size}")
        object.__setattr__(self, "values", v)

    def blocks(self):
        """Values reshaped to ``(n_points, fiber_dim)``."""
        return self.values.reshape(self.grid.n_points, self.grid.fiber_dim)

    def norm(self):
        return float(np.sqrt(inner_product(self, self).real))

    def normalized(self):
        nrm = self.norm()
        if nrm == 0:
            raise DomainError("cannot normalize the zero section")
        return Section(self.values / nrm, self.grid)

    def is_normalized(self, atol=NORMALIZED_ATOL):
        return abs(self.norm() ** 2 - 1.0) <= atol

    def __mul__(self, scalar):
        return Section(self.values * scalar, self.grid)

    __rmul__ = __mul__

    def __add__(self, other):
        check_same_grid(self, other)
        return Section(self.values + other.values, self.grid)

    def __sub__(self, other):
        check_same_grid(self, other)
        return Section(self.values - other.values, self.grid)


def section_from_function(grid, func):
    """Sample ``func(E)`` on the grid; ``func`` returns shape ``(n,)`` or ``(n, d)``."""
    vals = np.asarray(func(grid.energies), dtype=complex)
    return Section(vals.reshape(-1), grid)


@dataclass(frozen=True)
class KernelOperator:
    """An integral kernel ``K(E_i, E_j)`` on the grid."""

    entries: np.ndarray
    grid: EnergyGrid
    hermitian: bool = field(default=False)

    def __post_init__(self):
        k = np.asarray(self.entries, dtype=complex)
        n = self.grid.size
        if k.shape != (n, n):
            raise DomainError(f"kernel shape {k.shape} does not match grid size {n}")
        object.__setattr__(self, "entries", k)
        if self.hermitian:
            dev = self.hermitian_deviation()
            if dev > HERMITIAN_ATOL * max(1.0, np.abs(k).max()):
                raise DomainError(f"kernel flagged hermitian but asymmetry is {dev:.3g}")

    def hermitian_deviation(self):
        return float(np.abs(self.entries - self.entries.conj().T).max())

    def matrix(self):
        """The operator as a matrix acting on section values, ``w K``."""
        return self.grid.weight * self.entries

    def apply(self, phi):
        check_same_grid(self, phi)
        return Section(self.matrix() @ phi.values, self.grid)

    __matmul__ = apply

    def __add__(self, other):
        check_same_grid(self, other)
        return KernelOperator(self.entries + other.entries, self.grid,
                              self.hermitian and other.hermitian)

    def __sub__(self, other):
        check_same_grid(self, other)
        return KernelOperator(self.entries - other.entries, self.grid,
                              self.hermitian and other.hermitian)

    def block(self, i, j):
        d = self.grid.fiber_dim
        return self.entries[i * d:(i + 1) * d, j * d:(j + 1) * d]

    def diagonal_blocks(self):
        """Array ``(n, d, d)`` of ``K(E_i, E_i)``."""
        n, d = self.grid.n_points, self.grid.fiber_dim
        k4 = self.entries.reshape(n, d, n, d)
        idx = np.arange(n)
        return k4[idx, :, idx, :]


def kernel_from_operator_matrix(matrix, grid, hermitian=False):
    """Inverse of :meth:`KernelOperator.matrix`."""
    return KernelOperator(np.asarray(matrix) / grid.weight, grid, hermitian)


def identity_kernel(grid):
    """Kernel of the identity operator, ``delta_ij / w``."""
    return KernelOperator(np.eye(grid.size) / grid.weight, grid, hermitian=True)


def inner_product(a, b):
    """``<a, b> = sum_i w conj(a_i) b_i``, antilinear in the first slot."""
    grid = check_same_grid(a, b)
    return complex(grid.weight * np.vdot(a.values, b.values))


def quadratic_form(kernel, phi):
    """``sum_ij w^2 conj(phi_i) K_ij phi_j``."""
    check_same_grid(kernel, phi)
    w = kernel.grid.weight
    return complex(w * w * np.vdot(phi.values, kernel.entries @ phi.values))


def min_eigenvalue(kernel, atol=1e-10):
    """Smallest eigenvalue of the operator ``w K`` for a hermitian kernel."""
    m = kernel.matrix()
    asym = float(np.abs(m - m.conj().T).max())
    if asym > atol * max(1.0, float(np.abs(m).max())):
        raise DomainError(f"min_eigenvalue needs a hermitian kernel; asymmetry {asym:.3g}")
    m = 0.5 * (m + m.conj().T)
    return float(np.linalg.eigvalsh(m)[0])


def operator_eigenvalues(kernel):
    m = kernel.matrix()
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def nyquist_delta_deviation(grid):
    """
    Max deviation of ``int_{-T*}^{T*} exp(i t (E_i - E_j)) dt`` from ``(2 pi / h) delta_ij``,
    measured relative to ``2 pi / h``.
    """
    n = grid.index_differences()
    # 2 sin(T* h n) / (h n) = (2 pi / h) sinc(n)
    integral = (2 * np.pi / grid.spacing) * np.sinc(n)
    return float(np.abs(integral / (2 * np.pi / grid.spacing) - np.eye(grid.n_points)).max())
