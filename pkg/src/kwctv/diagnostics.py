"""Structure checks for candidate minimisers.

Every check is a pure function of (u, g, p, cert) and reports a margin
(nonnegative means satisfied) together with the interval that witnesses a
failure. Hard checks decide ``StructureReport.passed``; soft checks concern
properties that hold exactly only in the continuum and are reported with
their tolerance but never fail the report.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import RefusalError, ValidationError
from .penalty import JumpPenalty, PenaltyCertificate, eval_penalty
from .signal import PiecewiseConstantFn, Signal, squared_error, total_energy, tv_k_energy
from .solver_refine import best_single_jump, jump_budget, midpoint_residual

DEFAULT_DELTAS = tuple(np.round(np.arange(1, 10) / 10, 10))


def coincidence_tolerance(g: Signal, eta: float = 0.0) -> float:
    return max(g.interpolation_error, 0.5 * eta, 1e-9)


def coincidence_set(u: PiecewiseConstantFn, g: Signal, eps: float) -> list[tuple[float, float]]:
    """Closed intervals where |u - g| <= eps, merged and sorted.

    Exact for the declared interpolation: on each piece where both u and g
    are affine the condition describes a single interval.
    """
    t0, t1, y0, y1 = g.segments
    bp = u.breakpoints[(u.breakpoints > g.a) & (u.breakpoints < g.b)]
    knots = np.unique(np.concatenate([t0, [g.b], bp]))
    lo, hi = knots[:-1], knots[1:]
    mid = 0.5 * (lo + hi)
    k = g._segment_index(mid)
    slope = (y1[k] - y0[k]) / (t1[k] - t0[k])
    glo = y0[k] + slope * (lo - t0[k])
    ghi = y0[k] + slope * (hi - t0[k])
    v = u(mid)
    d0, d1 = v - glo, v - ghi
    out: list[tuple[float, float]] = []
    for x0, x1, a0, a1 in zip(lo, hi, d0, d1):
        # d is affine on [x0, x1]; find where -eps <= d <= eps
        if a0 == a1:
            if abs(a0) <= eps:
                out.append((x0, x1))
            continue
        ta = (x0 + (x1 - x0) * (-eps - a0) / (a1 - a0))
        tb = (x0 + (x1 - x0) * (eps - a0) / (a1 - a0))
        s, e = max(x0, min(ta, tb)), min(x1, max(ta, tb))
        if s <= e:
            out.append((float(s), float(e)))
    merged: list[list[float]] = []
    gap = g.position_tol
    for s, e in out:
        if merged and s <= merged[-1][1] + gap:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(float(s), float(e)) for s, e in merged]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    witness: tuple[float, float] | None = None
    hard: bool = True
    note: str = ""

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": self.passed, "margin": self.margin,
                "witness": list(self.witness) if self.witness is not None else None,
                "hard": self.hard, "note": self.note}


@dataclass(frozen=True, eq=False)
class StructureReport:
    jumps: int
    budget: int
    monotone_ok: bool | None
    range_ok: bool
    coincidence_points: list[tuple[float, float]]
    ekey_margins: list[float]
    tdis_violations: list[tuple[float, float]]
    pmf_residuals: list[float]
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if c.hard and not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "jumps": self.jumps,
            "budget": self.budget,
            "monotone_ok": self.monotone_ok,
            "range_ok": self.range_ok,
            "coincidence_points": [list(c) for c in self.coincidence_points],
            "ekey_margins": list(self.ekey_margins),
            "tdis_violations": [list(v) for v in self.tdis_violations],
            "pmf_residuals": list(self.pmf_residuals),
            "checks": [c.to_dict() for c in sorted(self.checks, key=lambda c: c.name)],
        }


def _min_or_inf(xs) -> float:
    return float(min(xs)) if len(xs) else math.inf


def _worst(margins: Sequence[float], witnesses: Sequence) -> tuple[float, object]:
    if not margins:
        return math.inf, None
    k = int(np.argmin(margins))
    return float(margins[k]), witnesses[k]


def _tdis(u: PiecewiseConstantFn, comps, reach: float, tol: float):
    """Windows [alpha, beta] with alpha, beta coincident and beta - alpha <= reach."""
    violations = []
    margins = []
    starts = np.array([c[0] for c in comps])
    for _, alpha in comps:
        # furthest coincidence point within reach
        j = int(np.searchsorted(starts, alpha + reach + tol, side="right")) - 1
        if j < 0:
            continue
        beta = min(comps[j][1], alpha + reach)
        if beta <= alpha:
            continue
        inside = u.breakpoints[(u.breakpoints > alpha + tol) & (u.breakpoints < beta - tol)]
        n_jumps = inside.size
        vals = {float(u(alpha)), float(u.left_limit(beta))}
        vals.update(float(u(x)) for x in inside)
        excess = max(n_jumps - 1, len(vals) - 2)
        margins.append(-float(excess))
        if excess > 0:
            violations.append((float(alpha), float(beta)))
    return violations, margins


def check_structure(u: PiecewiseConstantFn, g: Signal, p: JumpPenalty,
                    cert: PenaltyCertificate, eta: float = 0.0) -> StructureReport:
    """Run every structure check on a candidate minimiser ``u`` of the energy for ``g``.

    ``eta`` is the level spacing the candidate was computed with (0 for
    continuum candidates); it widens the coincidence and midpoint tolerances.
    """
    if cert.M < g.osc * (1 - 1e-12):
        raise ValidationError(f"certificate M = {cert.M} is below osc(g) = {g.osc}")
    checks: list[CheckResult] = []
    eps = coincidence_tolerance(g, eta)
    vtol = 1e-9 * max(1.0, abs(g.lo), abs(g.hi))
    dom = (g.a, g.b)

    budget = jump_budget(g, cert, monotone=g.is_monotone())
    jumps = int(np.count_nonzero((u.breakpoints > g.a) & (u.breakpoints < g.b)))
    checks.append(CheckResult("budget", jumps <= budget.m, float(budget.m - jumps),
                              None if jumps <= budget.m else dom))

    below = g.lo - float(u.values.min())
    above = float(u.values.max()) - g.hi
    range_margin = -max(below, above)
    range_ok = range_margin >= -vtol
    checks.append(CheckResult("range", range_ok, range_margin, None if range_ok else dom))

    monotone_ok = None
    if g.is_nondecreasing() and g.osc > 0:
        monotone_ok = u.is_nondecreasing()
    elif g.is_nonincreasing() and g.osc > 0:
        monotone_ok = u.is_nonincreasing()
    if monotone_ok is not None:
        bad = np.flatnonzero(u.jumps * (1 if g.is_nondecreasing() else -1) < 0)
        wit = None if monotone_ok else (float(u.breakpoints[bad[0]]),) * 2
        checks.append(CheckResult("monotone", monotone_ok, 0.0 if monotone_ok else -1.0, wit))

    comps = coincidence_set(u, g, eps)
    pos_tol = max(g.position_tol, 1e-12)

    # at most one jump and two values between close coincidence points
    reach = cert.A_M / g.lam
    tdis_violations, tdis_margins = _tdis(u, comps, reach, pos_tol)
    checks.append(CheckResult("tdis", not tdis_violations, _min_or_inf(tdis_margins),
                              tdis_violations[0] if tdis_violations else None))

    # midpoint balance at every jump: (L + R)/2 between g(x-0) and g(x+0)
    pmf_tol = eps if eta > 0 else g.interpolation_error + vtol
    facets = u.facets(g.a, g.b)
    pmf = []
    for x, left, right in zip(u.breakpoints, u.values[:-1], u.values[1:]):
        pmf.append(midpoint_residual(g, float(x), float(left), float(right)))
    m, w = _worst([pmf_tol - r for r in pmf], [(float(x), float(x)) for x in u.breakpoints])
    checks.append(CheckResult("pmf", m >= 0, m, None if m >= 0 else w,
                              note=f"tolerance {pmf_tol:g}"))

    # facet average inequality for monotone u
    ekey: list[float] = []
    ekey_wit = []
    sign = 1.0 if u.is_nondecreasing() else (-1.0 if u.is_nonincreasing() else 0.0)
    if sign != 0.0 and u.n_jumps > 0:
        for i, (x0, x1, v) in enumerate(facets[:-1]):
            p1a, _ = g.primitives(x0)
            p1b, _ = g.primitives(x1)
            lhs = sign * ((p1b - p1a) - v * (x1 - x0))
            rhs = sign * (facets[i + 1][2] - v) * (x1 - x0) / 2.0
            ekey.append(float(rhs - lhs))
            ekey_wit.append((x0, x1))
        ekey_tol = max(eps, vtol)
        m, w = _worst([e + ekey_tol * (f[1] - f[0]) for e, f in zip(ekey, facets)], ekey_wit)
        checks.append(CheckResult("ekey", m >= 0, m, None if m >= 0 else w,
                                  note=f"tolerance {ekey_tol:g} per unit length"))

    # soft: every facet touches the coincidence set
    touch = []
    for x0, x1, _ in facets:
        hit = any(s <= x1 + pos_tol and e >= x0 - pos_tol for s, e in comps)
        touch.append(0.0 if hit else -1.0)
    m, w = _worst(touch, [(f[0], f[1]) for f in facets])
    checks.append(CheckResult("lpic_facet_touches", m >= 0, m, None if m >= 0 else w, hard=False,
                              note=f"coincidence tolerance {eps:g}"))

    # soft: data strictly between the one-sided values at every jump
    straddle = []
    for x, left, right in zip(u.breakpoints, u.values[:-1], u.values[1:]):
        gl, gr = g.value_at(float(x), "left"), g.value_at(float(x), "right")
        lo_v, hi_v = min(left, right), max(left, right)
        straddle.append(min(min(gl, gr) - lo_v, hi_v - max(gl, gr)))
    m, w = _worst(straddle, [(float(x), float(x)) for x in u.breakpoints])
    checks.append(CheckResult("lpic_straddle", m >= -eps, m, None if m >= -eps else w, hard=False))

    # soft: fidelity increase bound between consecutive coincidence components
    fid = []
    fid_wit = []
    if u.is_nondecreasing() and len(comps) > 1:
        for (_, alpha), (beta, _) in zip(comps[:-1], comps[1:]):
            if not (alpha < beta < g.b):
                continue
            ua = float(u(alpha))
            rho = float(u(beta)) - ua
            seg = PiecewiseConstantFn.constant(ua)
            inc = squared_error(seg, g, alpha, beta) - squared_error(u, g, alpha, beta)
            fid.append(rho * rho * (beta - alpha) - inc)
            fid_wit.append((alpha, beta))
    m, w = _worst(fid, fid_wit)
    checks.append(CheckResult("fid_inc", m >= -eps * eps, m, None if m >= -eps * eps else w,
                              hard=False))

    return StructureReport(
        jumps=jumps, budget=budget.m, monotone_ok=monotone_ok, range_ok=range_ok,
        coincidence_points=comps, ekey_margins=ekey, tdis_violations=tdis_violations,
        pmf_residuals=pmf, checks=checks)


def check_tvk_lower(u: PiecewiseConstantFn, p: JumpPenalty,
                    endpoints: tuple[float, float] | None = None) -> CheckResult:
    """TV_K(u) on (xa, xb) is at least K(|u(xb) - u(xa)|).

    Without endpoints the whole line is used (first and last values).
    """
    bp = u.breakpoints
    if endpoints is None:
        xa = float(bp[0]) - 1.0 if bp.size else 0.0
        xb = float(bp[-1]) + 1.0 if bp.size else 1.0
    else:
        xa, xb = map(float, endpoints)
        if not xa < xb:
            raise ValidationError("need xa < xb")
        if np.any(bp == xa) or np.any(bp == xb):
            raise RefusalError("endpoint lies on a breakpoint; u is not continuous there")
    tv = tv_k_energy(u, p, xa, xb)
    bound = float(eval_penalty(p, abs(float(u(xb)) - float(u(xa)))))
    margin = tv - bound
    ok = margin >= -1e-12 * max(1.0, bound)
    return CheckResult("tvk_lower", ok, margin, None if ok else (xa, xb))


# --------------------------------------------------------------------------- monotone audits


@dataclass(frozen=True)
class GapRow:
    delta: float
    excess: float
    lnd_bound: float
    lnd_margin: float
    fid_gain: float
    lfid_bound: float
    lfid_margin: float


@dataclass(frozen=True, eq=False)
class BracketAudit:
    alpha: float
    beta: float
    rho: float
    c_star: float
    skipped: bool
    notice: str = ""
    rows: list[GapRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.lnd_margin >= 0 and r.lfid_margin >= 0 for r in self.rows)

    @property
    def min_margin(self) -> float:
        if not self.rows:
            return math.inf
        return float(min(min(r.lnd_margin, r.lfid_margin) for r in self.rows))


@dataclass(frozen=True, eq=False)
class GapAudit:
    brackets: list[BracketAudit]

    @property
    def audited(self) -> list[BracketAudit]:
        return [b for b in self.brackets if not b.skipped]

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.audited)

    @property
    def min_margin(self) -> float:
        return min((b.min_margin for b in self.audited), default=math.inf)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "min_margin": self.min_margin,
                "brackets": [{"alpha": b.alpha, "beta": b.beta, "rho": b.rho, "c_star": b.c_star,
                              "skipped": b.skipped, "notice": b.notice,
                              "rows": [r.__dict__ for r in b.rows]} for b in self.brackets]}


def _profile(g: Signal, alpha: float, beta: float, values: Sequence[float]) -> PiecewiseConstantFn:
    """Best placement of jumps between consecutive ``values`` on [alpha, beta]."""
    bps = []
    lo = alpha
    for v0, v1 in zip(values[:-1], values[1:]):
        x = best_single_jump(g, lo, beta, v0, v1).location
        bps.append(x)
        lo = x
    return PiecewiseConstantFn(np.asarray(bps, dtype=float), np.asarray(values, dtype=float))


def _endpoint_values(g: Signal, alpha: float, beta: float) -> tuple[float, float]:
    return g.value_at(alpha, "right"), g.value_at(beta, "left")


def _audit_bracket(g, p, cert, alpha, beta, deltas) -> BracketAudit:
    ga, gb = _endpoint_values(g, alpha, beta)
    rho = gb - ga
    c_star = cert.C_M - (beta - alpha) * g.lam / 2.0
    if rho > cert.M * (1 + 1e-12):
        return BracketAudit(alpha, beta, rho, c_star, True, "rise exceeds certified M")
    if c_star <= 0:
        return BracketAudit(alpha, beta, rho, c_star, True, "C* <= 0, bracket skipped")
    if rho <= 0:
        return BracketAudit(alpha, beta, rho, c_star, True, "flat data on bracket")
    u0 = _profile(g, alpha, beta, [ga, gb])
    e0 = total_energy(u0, g, p, alpha, beta)
    f0 = squared_error(u0, g, alpha, beta)
    rows = []
    for d in deltas:
        ud = _profile(g, alpha, beta, [ga, ga + d * rho, gb])
        ed = total_energy(ud, g, p, alpha, beta)
        fd = squared_error(ud, g, alpha, beta)
        lnd = c_star * d * (1 - d) * rho * rho
        lfid = d * (1 - d) * rho * rho * (beta - alpha)
        excess = ed.total - e0.total
        rows.append(GapRow(delta=float(d), excess=excess, lnd_bound=lnd, lnd_margin=excess - lnd,
                           fid_gain=f0 - fd, lfid_bound=lfid, lfid_margin=lfid - (f0 - fd)))
    return BracketAudit(alpha, beta, rho, c_star, False, "", rows)


def monotone_gap_audit(g: Signal, p: JumpPenalty, cert: PenaltyCertificate,
                       u: PiecewiseConstantFn | None = None,
                       brackets: Sequence[tuple[float, float]] | None = None,
                       deltas: Sequence[float] = DEFAULT_DELTAS, eta: float = 0.0) -> GapAudit:
    """Compare three-valued competitors against the best one-jump profile.

    For every bracket [alpha, beta] and delta the energy excess of the
    optimally placed two-jump profile over the one-jump profile must be at
    least C* delta (1 - delta) rho^2, and the fidelity it gains at most
    delta (1 - delta) rho^2 (beta - alpha). Brackets default to the
    coincidence gaps around the jumps of ``u``, or to the whole domain.
    """
    if not g.is_nondecreasing():
        raise ValidationError("monotone gap audit needs nondecreasing samples")
    if brackets is None:
        if u is None:
            brackets = [(g.a, g.b)]
        else:
            comps = coincidence_set(u, g, coincidence_tolerance(g, eta))
            brackets = []
            for x in u.breakpoints:
                left = [e for s, e in comps if e < x]
                right = [s for s, e in comps if s > x]
                brackets.append((left[-1] if left else g.a, right[0] if right else g.b))
    audits = []
    for alpha, beta in brackets:
        if not (g.a <= alpha < beta <= g.b):
            raise ValidationError(f"bracket [{alpha}, {beta}] outside the domain")
        audits.append(_audit_bracket(g, p, cert, float(alpha), float(beta), deltas))
    return GapAudit(audits)


@dataclass(frozen=True)
class LebjRow:
    jumps: tuple[float, ...]
    excess: float
    bound: float
    margin: float


def lebj_audit(g: Signal, p: JumpPenalty, cert: PenaltyCertificate, alpha: float, beta: float,
               n_competitors: int = 200, max_jumps: int = 5,
               rng: np.random.Generator | None = None) -> list[LebjRow]:
    """Randomised competitors with several jumps against the one-jump profile.

    Each competitor is nondecreasing from g(alpha) to g(beta) with random jump
    sizes; jumps are placed by the midpoint rule, which is the most favourable
    placement, so the bound is tested where it is tightest.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    ga, gb = _endpoint_values(g, alpha, beta)
    rho = gb - ga
    c_star = cert.C_M - g.lam * (beta - alpha) / 2.0
    if c_star <= 0:
        raise RefusalError("C* <= 0 on this bracket")
    if rho > cert.M * (1 + 1e-12):
        raise ValidationError("rise on the bracket exceeds the certified M")
    e0 = total_energy(_profile(g, alpha, beta, [ga, gb]), g, p, alpha, beta).total
    rows = []
    for _ in range(n_competitors):
        k = int(rng.integers(2, max_jumps + 1))
        sizes = rng.dirichlet(np.ones(k)) * rho
        values = ga + np.concatenate([[0.0], np.cumsum(sizes)])
        values[-1] = gb
        v = _profile(g, alpha, beta, list(values))
        e = total_energy(v, g, p, alpha, beta).total
        bound = 0.5 * c_star * (rho * rho - float(np.sum(sizes ** 2)))
        rows.append(LebjRow(tuple(float(s) for s in sizes), e - e0, bound, e - e0 - bound))
    return rows
