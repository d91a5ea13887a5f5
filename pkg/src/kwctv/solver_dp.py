"""Exact minimisation over level-quantised piecewise constant functions.

The discrete problem: pick a level l_i for each of the N cells to minimise

    sum_i (lambda/2) h (l_i - g_i)^2 + sum_i K(|l_{i+1} - l_i|).

``solve_dp`` is a backward dynamic programme over (cell, level) states in
O(N L^2). Ties are broken toward fewer jumps, then toward the lowest level
index at the earliest differing cell; ``brute_force`` enumerates every
assignment with the same rule and serves as the oracle.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import RefusalError, ValidationError
from .penalty import JumpPenalty, eval_penalty
from .signal import EnergyBreakdown, PiecewiseConstantFn, Signal, total_energy

TIE_RTOL = 1e-12
MAX_LEVELS = 4097


@dataclass(frozen=True, eq=False)
class LevelGrid:
    levels: np.ndarray

    def __post_init__(self):
        lv = np.array(self.levels, dtype=float).ravel()
        if lv.size == 0:
            raise ValidationError("level grid is empty")
        if lv.size > 1:
            d = np.diff(lv)
            if np.any(d <= 0):
                raise ValidationError("levels must be strictly increasing")
            scale = max(1.0, float(np.max(np.abs(lv))))
            if np.ptp(d) > 16 * np.finfo(float).eps * scale:
                raise ValidationError("levels must be uniformly spaced")
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @property
    def size(self) -> int:
        return self.levels.size

    @property
    def eta(self) -> float:
        return float(self.levels[1] - self.levels[0]) if self.size > 1 else 0.0

    @classmethod
    def for_signal(cls, g: Signal, count: int | None = None, eta: float | None = None) -> "LevelGrid":
        """Uniform grid anchored at min g and max g (inclusive).

        Give either ``count`` levels or a maximal spacing ``eta``.
        """
        if (count is None) == (eta is None):
            raise ValidationError("give exactly one of count or eta")
        if g.osc == 0.0:
            return cls(np.array([g.lo]))
        if eta is not None:
            if not eta > 0:
                raise ValidationError("eta must be positive")
            count = int(np.ceil(g.osc / eta - 1e-9)) + 1
        if count < 2:
            raise ValidationError("a non-constant signal needs at least 2 levels")
        lv = np.linspace(g.lo, g.hi, count)
        lv[-1] = g.hi
        return cls(lv)

    def refined(self, factor: int) -> "LevelGrid":
        """Insert ``factor - 1`` levels in every gap; old levels are kept bit for bit."""
        if factor < 2:
            raise ValidationError("refinement factor must be >= 2")
        if self.size == 1:
            return self
        lv = self.levels
        t = np.arange(factor) / factor
        new = (lv[:-1, None] + (lv[1:] - lv[:-1])[:, None] * t[None, :]).ravel()
        new[::factor] = lv[:-1]
        return LevelGrid(np.append(new, lv[-1]))

    def padded(self, k: int) -> "LevelGrid":
        """Extend by ``k`` levels beyond each end (used to probe the range bound)."""
        eta = self.eta if self.size > 1 else 1.0
        below = self.levels[0] - eta * np.arange(k, 0, -1)
        above = self.levels[-1] + eta * np.arange(1, k + 1)
        return LevelGrid(np.concatenate([below, self.levels, above]))


@dataclass(frozen=True, eq=False)
class DpSolution:
    assignment: np.ndarray
    grid: LevelGrid
    u: PiecewiseConstantFn
    energy: EnergyBreakdown
    objective: float
    ties_broken: int

    @property
    def n_jumps(self) -> int:
        return self.u.n_jumps

    @property
    def cell_values(self) -> np.ndarray:
        return self.grid.levels[self.assignment]

    def to_dict(self) -> dict:
        d = self.u.to_dict()
        d.update(energy=self.energy.to_dict(), jumps=self.n_jumps)
        return d


def _discrete_costs(g: Signal, p: JumpPenalty, lv: np.ndarray):
    fid = 0.5 * g.lam * g.h * (lv[None, :] - g.samples[:, None]) ** 2
    kmat = eval_penalty(p, np.abs(lv[:, None] - lv[None, :]))
    return fid, kmat


def _pick(cost: np.ndarray, jumps: np.ndarray, rtol: float):
    """Row-wise choice: near-minimal cost, then fewest jumps, then lowest index."""
    emin = cost.min(axis=1, keepdims=True)
    cand = cost <= emin + rtol * np.maximum(1.0, np.abs(emin))
    key = np.where(cand, jumps, np.iinfo(np.int64).max)
    choice = np.argmin(key, axis=1)
    tied = cand.sum(axis=1) > 1
    return choice, tied


def _solution(g: Signal, p: JumpPenalty, grid: LevelGrid, assignment, objective, ties) -> DpSolution:
    assignment = np.asarray(assignment, dtype=np.int64)
    u = PiecewiseConstantFn.from_cells(g, grid.levels[assignment])
    return DpSolution(assignment=assignment, grid=grid, u=u, energy=total_energy(u, g, p),
                      objective=float(objective), ties_broken=int(ties))


def solve_dp(g: Signal, p: JumpPenalty, levels: LevelGrid, tie_rtol: float = TIE_RTOL) -> DpSolution:
    if levels.size == 0:
        raise ValidationError("level grid is empty")
    lv = levels.levels
    n, L = g.n, levels.size
    fid, kmat = _discrete_costs(g, p, lv)
    step = (np.arange(L)[:, None] != np.arange(L)[None, :]).astype(np.int64)
    rows = np.arange(L)

    value = fid[n - 1].copy()
    njump = np.zeros(L, dtype=np.int64)
    choice = np.empty((max(n - 1, 0), L), dtype=np.int64)
    tied = np.zeros((max(n - 1, 0), L), dtype=bool)
    for i in range(n - 2, -1, -1):
        cost = kmat + value[None, :]
        jumps = step + njump[None, :]
        pick, tie = _pick(cost, jumps, tie_rtol)
        choice[i], tied[i] = pick, tie
        value = fid[i] + cost[rows, pick]
        njump = jumps[rows, pick]

    first, first_tie = _pick(value[None, :], njump[None, :], tie_rtol)
    path = np.empty(n, dtype=np.int64)
    path[0] = first[0]
    ties = int(first_tie[0])
    for i in range(n - 1):
        ties += int(tied[i, path[i]])
        path[i + 1] = choice[i, path[i]]
    return _solution(g, p, levels, path, value[path[0]], ties)


def brute_force(g: Signal, p: JumpPenalty, levels: LevelGrid, max_states: int = 2_000_000,
                tie_rtol: float = TIE_RTOL) -> DpSolution:
    """Exhaustive search over all L^N assignments."""
    n, L = g.n, levels.size
    if L == 0:
        raise ValidationError("level grid is empty")
    if L ** n > max_states:
        raise RefusalError(f"{L}^{n} assignments exceed the bound of {max_states}")
    fid, kmat = _discrete_costs(g, p, levels.levels)
    # itertools.product yields assignments in lexicographic order
    assign = np.array(list(itertools.product(range(L), repeat=n)), dtype=np.int64).reshape(-1, n)
    energy = fid[np.arange(n)[None, :], assign].sum(axis=1)
    jumps = np.zeros(assign.shape[0], dtype=np.int64)
    for i in range(n - 1):
        energy = energy + kmat[assign[:, i], assign[:, i + 1]]
        jumps += assign[:, i] != assign[:, i + 1]
    pick, tie = _pick(energy[None, :], jumps[None, :], tie_rtol)
    best = int(pick[0])
    return _solution(g, p, levels, assign[best], energy[best], int(tie[0]))


@dataclass(frozen=True, eq=False)
class LevelRefinement:
    solution: DpSolution
    previous_energy: float
    nested: bool
    monotone: bool


def refine_levels(g: Signal, p: JumpPenalty, prev: DpSolution, factor: int = 2,
                  max_levels: int = MAX_LEVELS, rtol: float = 1e-9) -> LevelRefinement:
    """Re-solve on a grid with spacing eta / factor.

    Grids produced by ``LevelGrid.refined`` contain the old levels exactly, so
    the optimum cannot increase; ``monotone`` records whether it did not.
    """
    if factor < 2:
        raise ValidationError("refinement factor must be >= 2")
    new_size = (prev.grid.size - 1) * factor + 1
    if new_size > max_levels:
        raise RefusalError(f"{new_size} levels exceed the configured bound of {max_levels}")
    grid = prev.grid.refined(factor)
    nested = bool(np.all(np.isin(prev.grid.levels, grid.levels)))
    sol = solve_dp(g, p, grid)
    prev_e = prev.energy.total
    monotone = sol.energy.total <= prev_e + rtol * max(1.0, abs(prev_e))
    return LevelRefinement(solution=sol, previous_energy=prev_e, nested=nested, monotone=monotone)
