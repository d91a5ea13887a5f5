import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from kwctv import (JumpPenalty, LevelGrid, RefusalError, Signal, ValidationError, brute_force,
                   certify, refine_levels, solve_dp, solve_rof, total_energy)
from kwctv.solver_refine import budget_for

# g(x) = x, N = 256, lambda = 10, eta = 1/128 (129 levels), rho/(1+rho)
RAMP_DP_ENERGY = 0.3822372312209547


def two_point(lam):
    return Signal(np.array([0.0, 1.0]), 0.0, 1.0, lam)


def test_level_grid_invariants():
    g = Signal.from_function(np.sin, 0, 3, 40)
    grid = LevelGrid.for_signal(g, eta=0.05)
    assert grid.levels[0] == g.lo and grid.levels[-1] == g.hi
    assert grid.eta <= 0.05
    d = np.diff(grid.levels)
    assert np.ptp(d) <= 4 * np.finfo(float).eps * max(1, abs(g.hi))
    with pytest.raises(ValidationError):
        LevelGrid(np.array([]))
    with pytest.raises(ValidationError):
        LevelGrid(np.array([0.0, 0.1, 0.3]))
    with pytest.raises(ValidationError):
        LevelGrid.for_signal(g)


def test_refined_grid_nests():
    grid = LevelGrid(np.linspace(0.1, 0.9, 5))
    fine = grid.refined(4)
    assert fine.size == 17
    assert np.all(np.isin(grid.levels, fine.levels))


def test_two_point_small_lambda_prefers_constant(rho_pen):
    sol = solve_dp(two_point(4.0), rho_pen, LevelGrid(np.array([0.0, 0.5, 1.0])))
    assert sol.cell_values.tolist() == [0.5, 0.5]
    assert sol.energy.total == pytest.approx(0.5)
    assert sol.n_jumps == 0 and sol.ties_broken >= 1


def test_two_point_large_lambda_jumps(rho_pen):
    sol = solve_dp(two_point(40.0), rho_pen, LevelGrid(np.array([0.0, 0.5, 1.0])))
    assert sol.cell_values.tolist() == [0.0, 1.0]
    assert sol.energy.total == pytest.approx(0.5)


def test_two_point_enumeration_oracle(rho_pen):
    for lam in (4.0, 40.0):
        table = oracles.enumerate_two_point(0.0, 1.0, lam, 0.5, [0.0, 0.5, 1.0], rho_pen)
        sol = solve_dp(two_point(lam), rho_pen, LevelGrid(np.array([0.0, 0.5, 1.0])))
        assert sol.energy.total == pytest.approx(table[0][0], abs=1e-15)


def test_linear_two_point_matches_rof():
    g = Signal(np.array([0.0, 1.0]), 0.0, 1.0, 4.0)
    lin = JumpPenalty.linear()
    sol = brute_force(g, lin, LevelGrid(np.linspace(0, 1, 5)))
    assert sol.energy.total == pytest.approx(solve_rof(g).objective, abs=1e-12)


def test_constant_signal(rho_pen):
    g = Signal(np.full(10, 0.3), 0.0, 1.0, 5.0)
    sol = solve_dp(g, rho_pen, LevelGrid.for_signal(g, count=3))
    assert sol.n_jumps == 0 and sol.energy.total == 0.0


def test_single_cell_is_projection(rho_pen):
    g = Signal(np.array([0.37]), 0.0, 1.0)
    grid = LevelGrid(np.linspace(0, 1, 6))
    sol = brute_force(g, rho_pen, grid)
    assert sol.cell_values[0] == pytest.approx(0.4)


def test_energy_recomputed_independently(rho_pen, ramp):
    sol = solve_dp(ramp, rho_pen, LevelGrid.for_signal(ramp, eta=1 / 128))
    assert sol.energy.total == total_energy(sol.u, ramp, rho_pen).total
    assert sol.energy.total == pytest.approx(sol.objective, rel=1e-12)
    assert np.all(np.isin(sol.cell_values, sol.grid.levels))


def test_ramp_frozen_value(rho_pen, ramp):
    sol = solve_dp(ramp, rho_pen, LevelGrid.for_signal(ramp, eta=1 / 128))
    assert sol.energy.total == pytest.approx(RAMP_DP_ENERGY, abs=1e-13)
    # the frozen number is also the best one-jump level function, found by enumeration
    best = oracles.one_jump_level_optimum(ramp.samples, ramp.h, ramp.lam, sol.grid.levels, rho_pen)
    assert best == pytest.approx(RAMP_DP_ENERGY, abs=1e-13)


def test_brute_force_refuses(rho_pen):
    g = Signal(np.linspace(0, 1, 12), 0.0, 1.0)
    with pytest.raises(RefusalError):
        brute_force(g, rho_pen, LevelGrid(np.linspace(0, 1, 6)), max_states=1000)


def test_refine_levels_monotone(rho_pen, ramp):
    sol = solve_dp(ramp, rho_pen, LevelGrid.for_signal(ramp, count=17))
    energies = [sol.energy.total]
    for _ in range(3):
        step = refine_levels(ramp, rho_pen, sol, factor=2)
        assert step.nested and step.monotone
        sol = step.solution
        energies.append(sol.energy.total)
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
    with pytest.raises(RefusalError):
        refine_levels(ramp, rho_pen, sol, factor=64, max_levels=1000)


def test_padded_grid_does_not_change_minimiser(rho_pen):
    g = Signal.from_function(lambda x: np.sin(3 * x), 0, 1, 64, 10.0)
    grid = LevelGrid.for_signal(g, count=33)
    a = solve_dp(g, rho_pen, grid)
    b = solve_dp(g, rho_pen, grid.padded(5))
    np.testing.assert_array_equal(a.cell_values, b.cell_values)


def test_linear_dp_above_rof_and_converges():
    g = Signal.from_function(lambda x: np.sin(4 * x), 0, 1, 32, 20.0)
    lin = JumpPenalty.linear()
    rof = solve_rof(g).objective
    sol = solve_dp(g, lin, LevelGrid.for_signal(g, count=9))
    gaps = []
    for _ in range(4):
        gaps.append(sol.objective - rof)
        sol = refine_levels(g, lin, sol).solution
    assert all(gap >= -1e-12 for gap in gaps)
    assert gaps[-1] < gaps[0] / 4


instances = st.tuples(st.integers(2, 8), st.integers(2, 6), st.floats(0.5, 60),
                      st.integers(0, 2**32 - 1))


@settings(max_examples=60, deadline=None)
@given(instances)
def test_dp_equals_brute_force(inst):
    n, L, lam, seed = inst
    if L ** n > 300_000:
        n = 6
    rng = np.random.default_rng(seed)
    g = Signal(rng.uniform(0, 1, n), 0.0, 1.0, lam)
    p = JumpPenalty.rho_over_one_plus_rho()
    grid = LevelGrid(np.linspace(0, 1, L))
    a, b = solve_dp(g, p, grid), brute_force(g, p, grid)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert a.energy.total == b.energy.total


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.floats(0.5, 60), st.integers(0, 2**32 - 1))
def test_monotone_data_structure(n, lam, seed):
    rng = np.random.default_rng(seed)
    g = Signal(np.sort(rng.uniform(0, 1, n)), 0.0, 1.0, lam)
    p = JumpPenalty.rho_over_one_plus_rho()
    if g.osc == 0:
        return
    sol = solve_dp(g, p, LevelGrid.for_signal(g, count=17))
    assert np.all(np.diff(sol.assignment) >= 0)
    assert sol.n_jumps <= budget_for(g, certify(p, g.osc)).m
    assert g.lo <= sol.cell_values.min() and sol.cell_values.max() <= g.hi
