import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kwctv import (Interp, JumpPenalty, LevelGrid, PiecewiseConstantFn, RefusalError, Signal,
                   ValidationError, certify, check_structure, check_tvk_lower, coincidence_set,
                   lebj_audit, monotone_gap_audit, refine, solve_dp)
from kwctv.solver_refine import budget_for


def failed(rep):
    return {c.name for c in rep.failures()}


def test_dp_minimiser_passes(rho_pen, cert1, ramp):
    sol = solve_dp(ramp, rho_pen, LevelGrid.for_signal(ramp, eta=1 / 128))
    rep = check_structure(sol.u, ramp, rho_pen, cert1, eta=sol.grid.eta)
    assert rep.passed, rep.failures()
    assert rep.jumps == 1 and rep.budget == 8 and rep.monotone_ok and rep.range_ok
    assert rep.tdis_violations == []
    assert all(m >= 0 for m in rep.ekey_margins)


def test_report_is_deterministic(rho_pen, cert1, ramp):
    sol = solve_dp(ramp, rho_pen, LevelGrid.for_signal(ramp, eta=1 / 128))
    a = check_structure(sol.u, ramp, rho_pen, cert1, eta=sol.grid.eta).to_dict()
    b = check_structure(sol.u, ramp, rho_pen, cert1, eta=sol.grid.eta).to_dict()
    assert a == b


def test_constant_case(rho_pen, cert1):
    g = Signal(np.full(16, 0.2), 0, 1, 5.0)
    rep = check_structure(PiecewiseConstantFn.constant(0.2), g, rho_pen, cert1)
    assert rep.passed
    assert rep.coincidence_points == [(0.0, 1.0)]


def test_projection_fails_budget(rho_pen):
    g = Signal.from_function(lambda x: x, 0, 1, 64, 1.0)
    grid = LevelGrid.for_signal(g, count=51)
    idx = np.abs(g.samples[:, None] - grid.levels[None, :]).argmin(axis=1)
    u = PiecewiseConstantFn.from_cells(g, grid.levels[idx])
    assert u.n_jumps == 50
    rep = check_structure(u, g, rho_pen, certify(rho_pen, g.osc), eta=grid.eta)
    assert "budget" in failed(rep)


def test_shifted_jump_fails_midpoint(rho_pen, cert1, ramp):
    sol = solve_dp(ramp, rho_pen, LevelGrid.for_signal(ramp, eta=1 / 128))
    u = PiecewiseConstantFn(sol.u.breakpoints + 10 * ramp.h, sol.u.values)
    assert "pmf" in failed(check_structure(u, ramp, rho_pen, cert1, eta=sol.grid.eta))


def test_out_of_range_and_wrong_direction(rho_pen, cert1, ramp):
    u = PiecewiseConstantFn(np.array([0.5]), np.array([1.2, -0.1]))
    f = failed(check_structure(u, ramp, rho_pen, cert1))
    assert {"range", "monotone"} <= f


def test_tdis_violation_detected(rho_pen):
    g = Signal.from_function(lambda x: x, 0, 1, 4096, 40.0, interp=Interp.LINEAR)
    cert = certify(rho_pen, 1.0)
    u = PiecewiseConstantFn(np.array([0.501, 0.509]), np.array([0.5, 0.505, 0.51]))
    rep = check_structure(u, g, rho_pen, cert)
    assert rep.tdis_violations
    assert "tdis" in failed(rep)


def test_ekey_violation_detected(rho_pen, cert1):
    g = Signal.from_function(lambda x: x, 0, 1, 256, 10.0, interp=Interp.LINEAR)
    u = PiecewiseConstantFn(np.array([0.9]), np.array([0.0, 0.2]))
    rep = check_structure(u, g, rho_pen, cert1)
    assert rep.ekey_margins[0] < 0
    assert "ekey" in failed(rep)


def test_coincidence_set_exact():
    g = Signal.from_function(lambda x: x, 0, 1, 4, interp=Interp.LINEAR)
    u = PiecewiseConstantFn(np.array([0.5]), np.array([0.25, 0.75]))
    comps = coincidence_set(u, g, 1e-12)
    assert comps[0][0] == pytest.approx(0.25) and comps[-1][1] == pytest.approx(0.75)


def test_tvk_lower_examples(rho_pen):
    stair = PiecewiseConstantFn(np.array([0.2, 0.4, 0.6, 0.8]), np.linspace(0, 1, 5))
    r = check_tvk_lower(stair, rho_pen, (0.0, 1.0))
    assert r.passed and r.margin == pytest.approx(4 * 0.2 - 0.5)
    assert check_tvk_lower(PiecewiseConstantFn.constant(2.0), rho_pen).margin == 0.0
    one = PiecewiseConstantFn(np.array([0.5]), np.array([0.0, 1.0]))
    assert check_tvk_lower(one, rho_pen, (0.0, 1.0)).margin == 0.0
    with pytest.raises(RefusalError):
        check_tvk_lower(one, rho_pen, (0.5, 1.0))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=10))
def test_tvk_lower_always_holds(values):
    p = JumpPenalty.rho_over_one_plus_rho()
    v = np.asarray(values)
    u = PiecewiseConstantFn(np.arange(1, v.size, dtype=float), v)
    assert check_tvk_lower(u, p).passed


def test_gap_audit_example(rho_pen):
    g = Signal.from_function(lambda x: x, 0, 0.5, 128, 1.0, interp=Interp.LINEAR)
    audit = monotone_gap_audit(g, rho_pen, certify(rho_pen, 0.5))
    assert audit.audited and audit.passed
    rows = audit.brackets[0].rows
    assert [r.delta for r in rows] == pytest.approx(np.arange(1, 10) / 10)
    assert all(r.lnd_margin >= 0 and r.lfid_margin >= 0 for r in rows)


def test_gap_audit_degenerate_delta(rho_pen):
    g = Signal.from_function(lambda x: x, 0, 0.5, 128, 1.0, interp=Interp.LINEAR)
    audit = monotone_gap_audit(g, rho_pen, certify(rho_pen, 0.5), deltas=[1e-9, 1 - 1e-9])
    for r in audit.brackets[0].rows:
        assert abs(r.lnd_bound) < 1e-8 and r.excess >= -1e-8


def test_gap_audit_skips_when_c_star_nonpositive(rho_pen, cert1):
    g = Signal.from_function(lambda x: x, 0, 1, 128, 10.0, interp=Interp.LINEAR)
    audit = monotone_gap_audit(g, rho_pen, cert1)
    assert audit.brackets[0].skipped and "C*" in audit.brackets[0].notice
    assert not audit.audited


def test_gap_audit_needs_monotone(rho_pen, cert1):
    g = Signal.from_function(lambda x: np.sin(6 * x), 0, 1, 64, 1.0)
    with pytest.raises(ValidationError):
        monotone_gap_audit(g, rho_pen, certify(rho_pen, 2.0))


def test_lebj_random_competitors(rho_pen):
    g = Signal.from_function(lambda x: x, 0, 0.5, 128, 1.0, interp=Interp.LINEAR)
    rows = lebj_audit(g, rho_pen, certify(rho_pen, 0.5), 0.0, 0.5, n_competitors=300)
    assert min(r.margin for r in rows) >= 0


@pytest.mark.parametrize("f", [lambda x: x, lambda x: np.sin(3 * x), lambda x: np.cos(7 * x)])
@pytest.mark.parametrize("lam", [1.0, 10.0, 40.0])
def test_refined_minimisers_pass(rho_pen, f, lam):
    g = Signal.from_function(f, 0, 1, 128, lam, interp=Interp.LINEAR)
    cert = certify(rho_pen, g.osc)
    sol = solve_dp(g, rho_pen, LevelGrid.for_signal(g, eta=1 / 128))
    r = refine(g, rho_pen, sol.u, budget_for(g, cert))
    rep = check_structure(r.u, g, rho_pen, cert)
    assert rep.passed, [c.to_dict() for c in rep.failures()]
