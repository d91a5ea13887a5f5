"""Continuous refinement of piecewise constant candidates.

Jump locations move along the real line (not just cell edges) and facet
values leave the level grid. The number of jumps never grows, so the jump
budget derived from the penalty certificate stays respected.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._numerics import golden_section
from .errors import ValidationError
from .penalty import JumpPenalty, PenaltyCertificate, eval_penalty
from .signal import (EnergyBreakdown, PiecewiseConstantFn, Signal, canonicalize,
                     total_energy)

VALUE_SEEDS = 256


@dataclass(frozen=True)
class JumpBudget:
    m: int
    A_M: float
    C_M: float
    M: float
    lam: float
    length: float
    monotone: bool


def jump_budget(g: Signal, cert: PenaltyCertificate, monotone: bool = False) -> JumpBudget:
    """Upper bound on the jumps of any minimiser.

    General data: floor(length * lambda / A_M) + 1.
    Monotone data: floor(length * lambda / (2 C_M)) + 1.
    """
    if cert.M < g.osc * (1 - 1e-12):
        raise ValidationError(f"certificate M = {cert.M} is below osc(g) = {g.osc}")
    if monotone and not g.is_monotone():
        raise ValidationError("monotone budget requested for non-monotone samples")
    return budget_from(cert, g.length, g.lam, monotone)


def budget_from(cert: PenaltyCertificate, length: float, lam: float,
                monotone: bool = False) -> JumpBudget:
    """The same bound from raw numbers; the caller vouches for osc(g) <= M."""
    if not (length > 0 and lam > 0):
        raise ValidationError("length and lambda must be positive")
    rate = 2.0 * cert.C_M if monotone else cert.A_M
    m = int(math.floor(length * lam / rate)) + 1
    return JumpBudget(m=m, A_M=cert.A_M, C_M=cert.C_M, M=cert.M, lam=lam,
                      length=length, monotone=monotone)


def budget_for(g: Signal, cert: PenaltyCertificate) -> JumpBudget:
    return jump_budget(g, cert, monotone=g.is_monotone())


class SingleJump(NamedTuple):
    location: float
    sq_error: float
    residual: float


def midpoint_residual(g: Signal, x: float, left: float, right: float) -> float:
    """Distance from (left + right)/2 to the interval spanned by g(x-0), g(x+0)."""
    gl = g.value_at(x, side="left")
    gr = g.value_at(x, side="right")
    mid = 0.5 * (left + right)
    return max(0.0, min(gl, gr) - mid, mid - max(gl, gr))


def _two_value_error(g: Signal, alpha, beta, left, right, gamma):
    return g.constant_error(left, alpha, gamma) + g.constant_error(right, gamma, beta)


def best_single_jump(g: Signal, alpha: float, beta: float, left_value: float,
                     right_value: float) -> SingleJump:
    """Best place for one jump from ``left_value`` to ``right_value`` on [alpha, beta].

    Minimises int_alpha^beta (U - g)^2 for the two-valued profile U. The
    candidates are the interpolation knots inside the bracket plus, on every
    piece where g is affine, the exact root of g = (left + right)/2 (the
    stationary point of the error). Near-ties go to the smallest midpoint
    residual, then to the leftmost location.
    """
    if not beta > alpha:
        raise ValidationError(f"need alpha < beta, got [{alpha}, {beta}]")
    T0, T1, Y0, Y1 = g.segments
    inner = T0[(T0 > alpha) & (T0 < beta)]
    cand = [np.array([alpha]), inner, np.array([beta])]
    mid = 0.5 * (left_value + right_value)
    if left_value != right_value:
        slope = (Y1 - Y0) / (T1 - T0)
        nz = slope != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            root = T0[nz] + (mid - Y0[nz]) / slope[nz]
        ok = (root > np.maximum(alpha, T0[nz])) & (root < np.minimum(beta, T1[nz]))
        cand.append(root[ok])
    cand = np.unique(np.concatenate(cand))
    err = _two_value_error(g, alpha, beta, left_value, right_value, cand)
    scale = max(1.0, float(np.max(np.abs(err))))
    near = np.flatnonzero(err <= err.min() + 1e-13 * scale)
    gl = np.atleast_1d(g.value_at(cand[near], "left"))
    gr = np.atleast_1d(g.value_at(cand[near], "right"))
    res = np.maximum(0.0, np.maximum(np.minimum(gl, gr) - mid, mid - np.maximum(gl, gr)))
    k = int(near[np.flatnonzero(res <= res.min() + 1e-15 * max(1.0, abs(mid)))[0]])
    best_x, best_e = float(cand[k]), float(err[k])

    residual = midpoint_residual(g, best_x, left_value, right_value)
    if left_value != right_value and alpha < best_x < beta:
        lo_g = min(g.value_at(alpha, "right"), g.value_at(beta, "left"))
        hi_g = max(g.value_at(alpha, "right"), g.value_at(beta, "left"))
        sub = g.samples[(g.centers > alpha) & (g.centers < beta)]
        monotone = sub.size < 2 or np.all(np.diff(sub) >= 0) or np.all(np.diff(sub) <= 0)
        if monotone and lo_g < 0.5 * (left_value + right_value) < hi_g:
            bound = 1e-9 * max(1.0, abs(left_value), abs(right_value))
            if residual > bound:
                raise RuntimeError(f"interior jump violates the midpoint balance by {residual:g}")
    return SingleJump(best_x, best_e, residual)


# --------------------------------------------------------------------------- refinement


@dataclass(frozen=True, eq=False)
class RefineResult:
    u: PiecewiseConstantFn
    energy: EnergyBreakdown
    start_energy: EnergyBreakdown
    iterations: int
    converged: bool
    midpoint_residuals: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = self.u.to_dict()
        d.update(energy=self.energy.to_dict(), jumps=self.u.n_jumps, iterations=self.iterations,
                 converged=self.converged, midpoint_residuals=list(self.midpoint_residuals))
        return d


def _facet_objective(g: Signal, p: JumpPenalty, x0: float, x1: float,
                     neighbours: list[float]):
    half_lam = 0.5 * g.lam
    p1a, p2a = g.primitives(x0)
    p1b, p2b = g.primitives(x1)
    w, s1, s2 = x1 - x0, p1b - p1a, p2b - p2a
    nb = np.asarray(neighbours, dtype=float)

    def phi(v):
        v = np.asarray(v, dtype=float)
        out = half_lam * (v * v * w - 2.0 * v * s1 + s2)
        for q in nb:
            out = out + eval_penalty(p, np.abs(v - q))
        return out

    mean = s1 / w if w > 0 else None
    return phi, mean


def _update_value(g: Signal, p: JumpPenalty, x0: float, x1: float, current: float,
                  neighbours: list[float]) -> float:
    phi, mean = _facet_objective(g, p, x0, x1, neighbours)
    seeds = np.linspace(g.lo, g.hi, VALUE_SEEDS) if g.osc > 0 else np.array([g.lo])
    f_seeds = phi(seeds)
    k = int(np.argmin(f_seeds))
    step = seeds[1] - seeds[0] if seeds.size > 1 else 0.0
    cands = [current, float(seeds[k]), *neighbours]
    if step > 0:
        x_ref, _ = golden_section(phi, np.array([seeds[k] - step]), np.array([seeds[k] + step]), tol=1e-13)
        cands.append(float(x_ref[0]))
    if mean is not None:
        cands.append(float(np.clip(mean, g.lo, g.hi)))
    vals = phi(np.asarray(cands))
    best = int(np.argmin(vals))
    cur = float(vals[0])
    if vals[best] < cur - 1e-15 * max(1.0, abs(cur)):
        return float(cands[best])
    return current


def _sweep(g: Signal, p: JumpPenalty, u: PiecewiseConstantFn) -> PiecewiseConstantFn:
    dom = (g.a, g.b)
    bps = list(u.breakpoints)
    vals = list(u.values)
    for j in range(len(bps)):
        lo = bps[j - 1] if j > 0 else g.a
        hi = bps[j + 1] if j + 1 < len(bps) else g.b
        if not hi > lo:
            continue
        res = best_single_jump(g, lo, hi, vals[j], vals[j + 1])
        now = float(_two_value_error(g, lo, hi, vals[j], vals[j + 1], bps[j]))
        if res.sq_error < now - 1e-15 * max(1.0, abs(now)):
            bps[j] = res.location
    u = canonicalize(PiecewiseConstantFn(np.asarray(bps), np.asarray(vals)), dom)

    bps = list(u.breakpoints)
    vals = list(u.values)
    for j in range(len(vals)):
        x0 = bps[j - 1] if j > 0 else g.a
        x1 = bps[j] if j < len(bps) else g.b
        neighbours = [vals[i] for i in (j - 1, j + 1) if 0 <= i < len(vals)]
        vals[j] = _update_value(g, p, x0, x1, vals[j], neighbours)
    return canonicalize(PiecewiseConstantFn(np.asarray(bps), np.asarray(vals)), dom)


def _refine_one(g: Signal, p: JumpPenalty, start: PiecewiseConstantFn, tol: float,
                max_iters: int) -> RefineResult:
    start_e = total_energy(start, g, p)
    u, e = start, start_e
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        nxt = _sweep(g, p, u)
        e_next = total_energy(nxt, g, p)
        if e_next.total <= e.total:
            decrease = e.total - e_next.total
            u, e = nxt, e_next
        else:
            decrease = 0.0
        if decrease < tol:
            converged = True
            break
    if e.total > start_e.total:
        u, e = start, start_e
    residuals = [midpoint_residual(g, float(x), float(l), float(r))
                 for x, l, r in zip(u.breakpoints, u.values[:-1], u.values[1:])]
    return RefineResult(u=u, energy=e, start_energy=start_e, iterations=it,
                        converged=converged, midpoint_residuals=residuals)


def _merge_smallest_jump(g: Signal, u: PiecewiseConstantFn) -> PiecewiseConstantFn:
    k = int(np.argmin(u.jump_sizes))
    edges = np.concatenate([[g.a], u.breakpoints, [g.b]])
    w0, w1 = edges[k + 1] - edges[k], edges[k + 2] - edges[k + 1]
    merged = (w0 * u.values[k] + w1 * u.values[k + 1]) / (w0 + w1)
    vals = np.concatenate([u.values[:k], [merged], u.values[k + 2:]])
    return canonicalize(PiecewiseConstantFn(np.delete(u.breakpoints, k), vals), (g.a, g.b))


def refine(g: Signal, p: JumpPenalty, start: PiecewiseConstantFn, budget: JumpBudget,
           tol: float = 1e-10, max_iters: int = 10_000, restarts: int = 0) -> RefineResult:
    """Coordinate descent on jump locations and facet values.

    Each sweep moves every jump to its best position between its neighbours,
    then re-optimises every facet value against the quadratic fidelity and
    the two adjacent jump costs. With ``restarts`` > 0, further starts are
    made by repeatedly merging the smallest jump; the starts run concurrently
    and the lowest final energy wins (ties: fewer jumps, then earlier start).
    """
    start = canonicalize(start, (g.a, g.b))
    if start.n_jumps > budget.m:
        raise ValidationError(f"start has {start.n_jumps} jumps, budget allows {budget.m}")
    starts = [start]
    for _ in range(restarts):
        if starts[-1].n_jumps == 0:
            break
        starts.append(_merge_smallest_jump(g, starts[-1]))
    if len(starts) == 1:
        return _refine_one(g, p, start, tol, max_iters)
    with ThreadPoolExecutor() as pool:
        results = list(pool.map(lambda s: _refine_one(g, p, s, tol, max_iters), starts))
    best = results[0]
    for r in results[1:]:
        if (r.energy.total, r.u.n_jumps) < (best.energy.total, best.u.n_jumps):
            best = r
    return best
