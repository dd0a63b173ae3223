import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clicktime.delay import (
    WavePacket,
    compare_delay_routes,
    eisenbud_wigner,
    eisenbud_wigner_terms,
    energy_average,
    measure_shift,
    operator_delay,
    packet_click_density,
)
from clicktime.exceptions import AccuracyWarning, DomainError
from clicktime.grid import inner_product, make_grid
from clicktime.povm import Connection, click_density, time_operator_expectation
from clicktime.radial import PotentialSpec, on_shell_S
from clicktime.shell import ShellSpec, closed_form_c, shell_connection

PACKET = WavePacket(2.0, 0.04)
SHELL = ShellSpec(10.0)


def test_packet_section_is_normalized(grid):
    phi = PACKET.section(grid)
    assert inner_product(phi, phi).real == pytest.approx(1.0, abs=1e-10)
    assert PACKET.narrow and not WavePacket(2.0, 0.2).narrow


def test_packet_support_must_fit(grid):
    with pytest.raises(DomainError):
        WavePacket(1.05, 0.04).section(grid)
    with pytest.raises(DomainError):
        WavePacket(2.0, -0.1)


def test_free_density_peaks_at_traversal_time(tables, grid, time_grid):
    d = packet_click_density(PACKET, SHELL, tables["free"], time_grid, grid)
    peak = time_grid[np.argmax(d.p)]
    assert peak == pytest.approx(SHELL.R / PACKET.k0, rel=0.02)
    assert d.p.min() >= 0
    assert d.captured_mass > 0.99
    assert np.sum(d.p) * (time_grid[1] - time_grid[0]) == pytest.approx(1.0, abs=1e-12)


def test_factorized_density_matches_kernel_route(tables, grid):
    t = np.linspace(-20.0, 30.0, 501)
    fast = packet_click_density(PACKET, SHELL, tables["exponential"], t, grid)
    c = closed_form_c(SHELL, tables["exponential"], grid)
    slow = click_density(c, PACKET.section(grid), t)
    assert np.abs(fast.p * fast.captured_mass - slow).max() < 1e-10


def test_thick_shell_density(tables, grid, time_grid):
    d = packet_click_density(PACKET, ShellSpec(10.0, 0.5), tables["free"], time_grid, grid)
    assert d.p.min() >= -1e-10
    assert time_grid[np.argmax(d.p)] == pytest.approx(5.0, rel=0.02)


def test_short_window_warns(tables, grid):
    with pytest.warns(AccuracyWarning, match="widen"):
        packet_click_density(PACKET, SHELL, tables["free"], np.linspace(-5, 5, 101), grid)


# --- shifts -----------------------------------------------------------------------------

def gaussian(t, mu, s):
    return np.exp(-0.5 * ((t - mu) / s) ** 2) / (s * np.sqrt(2 * np.pi))


def test_identical_densities_have_no_shift():
    t = np.linspace(-10, 10, 2001)
    p = gaussian(t, 1.0, 1.5)
    rep = measure_shift(p, p, t)
    assert rep.shift_mean == 0 and rep.shift_peak == 0 and rep.l1_overlap_residual == 0
    assert rep.peak_reliable


@given(st.floats(-3, 3))
def test_shifted_gaussians(s):
    t = np.linspace(-20, 20, 4001)
    rep = measure_shift(gaussian(t, 0, 1.2), gaussian(t, s, 1.2), t, wigner_delay=s)
    assert rep.shift_mean == pytest.approx(s, abs=1e-9)
    assert rep.shift_peak == pytest.approx(s, abs=1e-4)
    assert rep.l1_overlap_residual < 1e-3


def test_bimodal_density_flags_peak():
    t = np.linspace(-20, 20, 4001)
    two = 0.5 * gaussian(t, -5, 1) + 0.5 * gaussian(t, 5, 1)
    assert not measure_shift(gaussian(t, 0, 1), two, t).peak_reliable


def test_hard_sphere_density_shift(tables, grid, time_grid):
    pf = packet_click_density(PACKET, SHELL, tables["free"], time_grid, grid).p
    pi = packet_click_density(PACKET, SHELL, tables["hard_sphere"], time_grid, grid).p
    rep = measure_shift(pf, pi, time_grid, wigner_delay=-1.0)
    assert rep.shift_mean == pytest.approx(-1.0, rel=0.05)
    dt = time_grid[1] - time_grid[0]
    sigma_t = np.sqrt(np.sum((time_grid - rep.t_mean_free) ** 2 * pf) * dt)
    assert abs(rep.shift_mean - rep.shift_peak) <= 3 * sigma_t * PACKET.sigma_k / PACKET.k0
    assert rep.l1_overlap_residual <= 0.02


def test_exponential_density_shift_is_phase_derivative(tables, grid):
    t = np.linspace(-40, 90, 4000)
    shell = ShellSpec(30.0)
    pf = packet_click_density(PACKET, shell, tables["free"], t, grid).p
    pi = packet_click_density(PACKET, shell, tables["exponential"], t, grid).p
    expect = float(tables["exponential"].dDelta_dE_at([2.0])[0])
    assert measure_shift(pf, pi, t).shift_mean == pytest.approx(expect, rel=0.05)


# --- on-shell formula -------------------------------------------------------------------

def test_constant_S_has_no_delay(grid):
    S = np.full(grid.n_points, np.exp(0.3j))
    assert np.abs(eisenbud_wigner(S, Connection(np.zeros(grid.n_points), grid))).max() < 1e-12


def test_hard_sphere_pointwise_delay(tables, grid):
    d = shell_connection(SHELL, tables["free"], grid)
    ew = eisenbud_wigner(on_shell_S(tables["hard_sphere"]), d)
    assert np.abs(ew + 2.0 / grid.momenta).max() < 1e-4
    _, comm = eisenbud_wigner_terms(on_shell_S(tables["hard_sphere"]), d)
    assert np.abs(comm).max() == 0.0


def rotation_S(grid):
    e = grid.energies
    th1, th2 = 0.7 * e + 0.1 * e ** 2, -1.3 * e + 0.05 * np.sin(e)
    dth = np.stack([0.7 + 0.2 * e, -1.3 + 0.05 * np.cos(e)], axis=1)
    a = 0.4
    U = np.array([[np.cos(a), -np.sin(a) * 1j], [-np.sin(a) * 1j, np.cos(a)]])
    D = np.zeros((len(e), 2, 2), complex)
    D[:, 0, 0], D[:, 1, 1] = np.exp(1j * th1), np.exp(1j * th2)
    return U @ D @ U.conj().T, dth


def test_matrix_delay_eigenvalues(small_grid):
    S, dth = rotation_S(small_grid)
    d = Connection(3.0 + small_grid.energies, small_grid)
    t = eisenbud_wigner(S, d)
    assert np.abs(t - np.conj(np.swapaxes(t, 1, 2))).max() < 1e-14
    eig = np.linalg.eigvalsh(t)
    assert np.abs(eig - np.sort(dth, axis=1)).max() < 1e-4
    _, comm = eisenbud_wigner_terms(S, d)
    assert np.abs(comm).max() < 1e-14


def test_matrix_delay_sees_a_matrix_connection(small_grid):
    """A non-scalar connection that does not commute with S adds the commutator."""
    S, _ = rotation_S(small_grid)
    n = small_grid.n_points
    dmat = np.zeros((n, 2, 2))
    dmat[:, 0, 0] = 1.0
    g2 = make_grid(small_grid.e_min, small_grid.e_max, n, fiber_dim=2)
    _, comm = eisenbud_wigner_terms(S, Connection(dmat, g2))
    assert np.abs(comm).max() > 0.1


def test_non_unitary_S_is_rejected(grid):
    with pytest.raises(DomainError):
        eisenbud_wigner(np.full(grid.n_points, 1.1), Connection(np.zeros(grid.n_points), grid))


# --- operator route -----------------------------------------------------------------------

def test_trivial_S_gives_no_operator_delay(tables, grid):
    c = closed_form_c(SHELL, tables["free"], grid)
    assert abs(operator_delay(PACKET, np.ones(grid.n_points), c)) < 1e-12


@pytest.mark.parametrize("name", ["hard_sphere", "exponential"])
def test_operator_delay_forms_and_phase_derivative(tables, grid, name):
    c = closed_form_c(SHELL, tables["free"], grid)
    d = shell_connection(SHELL, tables["free"], grid)
    S = on_shell_S(tables[name])
    phi = PACKET.section(grid)
    diff = operator_delay(phi, S, c, d=d)
    comm = operator_delay(phi, S, c, form="commutator", d=d)
    assert abs(diff - comm) < 1e-10
    expect = float(tables[name].dDelta_dE_at([2.0])[0])
    assert diff == pytest.approx(expect, rel=0.01)
    ew = energy_average(eisenbud_wigner(S, d), phi)
    assert diff == pytest.approx(ew, rel=1e-3)


def test_free_time_operator_anchor(tables, grid):
    c = closed_form_c(SHELL, tables["free"], grid)
    val = time_operator_expectation(c, PACKET.section(grid), d=shell_connection(SHELL, tables["free"], grid))
    assert val == pytest.approx(SHELL.R / PACKET.k0, rel=0.02)


def test_unknown_form(tables, grid):
    c = closed_form_c(SHELL, tables["free"], grid)
    with pytest.raises(DomainError):
        operator_delay(PACKET, np.ones(grid.n_points), c, form="sum")


# --- all routes -----------------------------------------------------------------------------

@pytest.mark.parametrize("potential, R, sign", [
    (PotentialSpec.hard_sphere(1.0), 10.0, -1),
    (PotentialSpec.exponential(5.0, 1.0), 30.0, +1),
])
def test_routes_agree(grid, potential, R, sign):
    t = np.linspace(-60.0, 90.0, 4000)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AccuracyWarning)
        rep = compare_delay_routes(PACKET, ShellSpec(R), potential, grid, t)
    assert rep.routes_agree
    assert {np.sign(v) for v in rep.routes.values()} == {sign}


def test_routes_refuse_shell_inside_potential(grid, time_grid):
    with pytest.raises(DomainError):
        compare_delay_routes(PACKET, ShellSpec(10.0), PotentialSpec.exponential(5.0, 1.0), grid, time_grid)
