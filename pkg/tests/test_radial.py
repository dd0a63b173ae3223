import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clicktime.exceptions import DomainError, NumericalFailure
from clicktime.radial import (
    PotentialSpec,
    analytic_phase_derivative,
    analytic_phase_shift,
    build_phase_table,
    check_unitary,
    extract_phase_shift,
    integrate_radial,
    numerov_wavenumber,
    on_shell_S,
    solve_radial,
    unwrap_phase,
)

from oracles import exponential_delta, riccati_j1, square_barrier_delta, wrap


def aligned_error(u, ref):
    """Smallest max-deviation over the sign ambiguity of a unit-amplitude solution."""
    return min(np.abs(u - ref).max(), np.abs(u + ref).max())


# --- solutions ---------------------------------------------------------------

def test_free_s_wave_is_sine():
    sol = solve_radial(PotentialSpec.free(), 1.7, 30.0, 0.01)
    assert aligned_error(sol.u, np.sin(1.7 * sol.r_grid)) < 1e-6
    assert abs(extract_phase_shift(sol, PotentialSpec.free(), 20.0)) < 1e-10


def test_free_p_wave_is_riccati_bessel():
    p = PotentialSpec.free(ell=1)
    sol = solve_radial(p, 1.2, 30.0, 0.01)
    assert aligned_error(sol.u[1:], riccati_j1(1.2 * sol.r_grid[1:])) < 1e-6
    assert abs(extract_phase_shift(sol, p, 20.0)) < 1e-8


def test_hard_sphere_wave_starts_at_the_wall():
    p = PotentialSpec.hard_sphere(1.0)
    sol = solve_radial(p, 2.0, 20.0, 0.01)
    out = sol.r_grid >= 1.0
    assert aligned_error(sol.u[out], np.sin(2.0 * (sol.r_grid[out] - 1.0))) < 1e-6
    assert extract_phase_shift(sol, p, 10.0) == pytest.approx(wrap(-2.0), abs=1e-8)


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0, 3.0])
def test_hard_sphere_phase(k):
    p = PotentialSpec.hard_sphere(1.0)
    d = extract_phase_shift(solve_radial(p, k, 30.0, 0.01), p, 20.0)
    assert abs(wrap(d - analytic_phase_shift(p, k))) < 1e-8


@pytest.mark.parametrize("width", [2.0, 2.005])
@pytest.mark.parametrize("height", [1.0, -1.5])
def test_square_barrier_against_oracle(height, width):
    """Both a breakpoint on the radial grid and one between grid nodes."""
    p = PotentialSpec.square_barrier(height, width)
    ks = np.array([0.6, 1.1, 1.5, 2.4])
    tab = build_phase_table(p, np.linspace(0.5, 3.0, 11), 30.0, 0.01)
    ref = square_barrier_delta(tab.k_grid, height, width)
    assert np.abs(wrap(tab.delta_std - ref)).max() < 1e-7
    assert np.abs(wrap(analytic_phase_shift(p, ks) - square_barrier_delta(ks, height, width))).max() < 1e-12


def test_exponential_against_oracle():
    k = np.linspace(0.6, 3.0, 9)
    tab = build_phase_table(PotentialSpec.exponential(5.0, 1.0), k, 40.0, 0.01)
    assert np.abs(wrap(tab.delta_std - exponential_delta(k, 5.0, 1.0))).max() < 1e-7


def test_numerov_is_fourth_order():
    p = PotentialSpec.exponential(5.0, 1.0)
    d = [build_phase_table(p, np.linspace(0.8, 2.2, 15), 40.0, dr).delta_std for dr in (0.04, 0.02, 0.01)]
    ratio = np.abs(d[0] - d[1]) / np.abs(d[1] - d[2])
    assert ratio.min() >= 12.0


def test_matching_radius_independence():
    p = PotentialSpec.exponential(5.0, 1.0)
    k = np.linspace(0.6, 3.0, 9)
    a = build_phase_table(p, k, 45.0, 0.01, r_match=30.0).delta_std
    b = build_phase_table(p, k, 45.0, 0.01, r_match=36.0).delta_std
    assert np.abs(a - b).max() < 1e-7


def test_repulsive_phase_dies_out_at_high_energy():
    # |delta| still grows across the working window k <= 3; the decay shows by k ~ 15
    tab = build_phase_table(PotentialSpec.exponential(5.0, 1.0), np.linspace(0.5, 15.0, 300))
    assert abs(tab.delta_std[-1]) < abs(tab.delta_std[0])
    assert np.all(tab.delta_std < 0)


def test_numerov_wavenumber_limits():
    for dr in (1e-2, 1e-3):
        assert numerov_wavenumber(1.3, dr) == pytest.approx(1.3, rel=1e-9)
    q = numerov_wavenumber(2.0, 0.05)
    assert abs(q - 2.0) < 1e-4 and q != 2.0


# --- tables ---------------------------------------------------------------------

def test_free_table(tables):
    t = tables["free"]
    assert np.abs(t.delta_std).max() < 1e-10
    assert np.abs(t.dDelta_dE).max() < 1e-8
    assert np.allclose(t.delta_paper, np.pi, atol=1e-10)


def test_hard_sphere_table(tables, grid):
    t = tables["hard_sphere"]
    k = grid.momenta
    p = PotentialSpec.hard_sphere(1.0)
    assert np.abs(t.dDelta_dE - analytic_phase_derivative(p, k)).max() < 1e-6
    i = int(np.argmin(np.abs(k - 2.0)))
    assert abs(k[i] - 2.0) < 1e-12
    assert t.dDelta_dE[i] == pytest.approx(-1.0, abs=1e-7)
    assert np.all(np.abs(np.diff(t.delta_std)) < np.pi / 4)


def test_table_interpolation(tables):
    t = tables["hard_sphere"]
    k = np.array([1.111, 2.0, 2.777])
    expect = -2.0 / k
    assert np.abs(t.dDelta_dE_at(k) - expect).max() < 1e-5
    with pytest.raises(DomainError):
        t.delta_paper_at([10.0])


def test_table_rejects_bad_grids():
    with pytest.raises(DomainError):
        build_phase_table(PotentialSpec.free(), [1.0, 2.0, 3.0])
    with pytest.raises(DomainError):
        build_phase_table(PotentialSpec.free(), [1.0, 3.0, 2.0, 4.0, 5.0])


def test_on_shell_S_is_unimodular(tables):
    S = check_unitary(on_shell_S(tables["exponential"]))
    assert np.abs(np.abs(S) - 1).max() < 1e-14


def test_check_unitary_matrices():
    th = np.linspace(0, 1, 5)
    U = np.array([[[np.cos(x), -np.sin(x)], [np.sin(x), np.cos(x)]] for x in th])
    assert check_unitary(U).shape == (5, 2, 2)
    with pytest.raises(DomainError):
        check_unitary(1.01 * U)
    with pytest.raises(DomainError):
        check_unitary(np.array([1.0, 1.1]))


# --- unwrapping ------------------------------------------------------------------

@given(st.lists(st.floats(-0.7, 0.7), min_size=2, max_size=40), st.lists(st.integers(-3, 3), min_size=40, max_size=40))
def test_unwrap_removes_branch_jumps(steps, branches):
    smooth = np.cumsum(steps)
    shifted = smooth + np.pi * np.array(branches[: len(smooth)])
    out = unwrap_phase(shifted)
    assert np.allclose(out - out[0], smooth - smooth[0], atol=1e-9)


def test_unwrap_refuses_ambiguous_steps():
    with pytest.raises(NumericalFailure, match="finer k grid"):
        unwrap_phase([0.0, 1.2])


# --- failure modes ------------------------------------------------------------------

def test_overflow_in_deep_forbidden_region():
    p = PotentialSpec.square_barrier(5000.0, 12.0)
    with pytest.raises(NumericalFailure):
        integrate_radial(p, [1.0], 20.0, 0.001)


def test_rescaling_keeps_moderate_barriers_finite():
    p = PotentialSpec.square_barrier(200.0, 5.0)
    r, U = integrate_radial(p, [1.0], 20.0, 0.01)
    assert np.all(np.isfinite(U))


def test_long_range_tail_is_rejected():
    p = PotentialSpec.exponential(5.0, 3.0)
    with pytest.raises(DomainError, match="inside the potential range"):
        build_phase_table(p, np.linspace(1, 2, 6), 40.0, 0.01)


def test_coarse_step_is_rejected():
    with pytest.raises(DomainError, match="too coarse"):
        integrate_radial(PotentialSpec.free(), [3.0], 10.0, 0.1)


def test_potential_validation():
    with pytest.raises(DomainError):
        PotentialSpec("coulomb")
    with pytest.raises(DomainError):
        PotentialSpec.hard_sphere(-1.0)
    with pytest.raises(DomainError):
        PotentialSpec.free(ell=-1)


def test_tabulated_potential_from_file(tmp_path):
    r = np.linspace(0.0, 30.0, 3001)
    v = 5.0 * np.exp(-r)
    v[-1] = 0.0
    f = tmp_path / "v.dat"
    np.savetxt(f, np.column_stack([r, v]), header="r V")
    p = PotentialSpec.from_file(f)
    assert p.potential(np.array([0.0, 40.0])).tolist() == [5.0, 0.0]
    k = np.linspace(0.6, 3.0, 9)
    tab = build_phase_table(p, k, 40.0, 0.01)
    assert np.abs(wrap(tab.delta_std - exponential_delta(k, 5.0, 1.0))).max() < 1e-7


def test_tabulated_file_needs_two_columns(tmp_path):
    f = tmp_path / "bad.dat"
    f.write_text("0 1 2\n1 0 0\n")
    with pytest.raises(DomainError, match="two columns"):
        PotentialSpec.from_file(f)
