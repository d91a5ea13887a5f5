"""Sampled data g, piecewise constant candidates u, and the energy
TV_K(u) + (lambda/2) int (u - g)^2 evaluated exactly for that class.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .penalty import JumpPenalty, eval_penalty

POSITION_RTOL = 1e-12


class Interp(enum.Enum):
    """How the N samples extend to a function on [a, b].

    ``CELLS``: constant on each of the N uniform cells.
    ``LINEAR``: linear between cell centres, constant on the two half cells at the ends.
    """

    CELLS = "cells"
    LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    a: float = 0.0
    b: float = 1.0
    lam: float = 1.0
    interp: Interp = Interp.CELLS

    def __post_init__(self):
        g = np.array(self.samples, dtype=float).ravel()
        if g.size < 1:
            raise ValidationError("signal needs at least one sample")
        if not np.all(np.isfinite(g)):
            raise ValidationError("signal samples must be finite")
        if not self.b > self.a:
            raise ValidationError(f"need a < b, got [{self.a}, {self.b}]")
        if not self.lam > 0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        g.setflags(write=False)
        object.__setattr__(self, "samples", g)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "interp", Interp(self.interp))

    @classmethod
    def from_function(cls, f: Callable, a: float = 0.0, b: float = 1.0, n: int = 256,
                      lam: float = 1.0, interp: Interp = Interp.CELLS) -> "Signal":
        h = (b - a) / n
        centers = a + h * (np.arange(n) + 0.5)
        return cls(np.asarray(f(centers), dtype=float), a, b, lam, interp)

    def with_lambda(self, lam: float) -> "Signal":
        return Signal(self.samples, self.a, self.b, lam, self.interp)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def h(self) -> float:
        return self.length / self.n

    @cached_property
    def edges(self) -> np.ndarray:
        e = self.a + self.h * np.arange(self.n + 1)
        e[-1] = self.b
        return e

    @cached_property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def lo(self) -> float:
        return float(self.samples.min())

    @property
    def hi(self) -> float:
        return float(self.samples.max())

    @property
    def osc(self) -> float:
        return self.hi - self.lo

    @property
    def position_tol(self) -> float:
        return POSITION_RTOL * self.length

    def is_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.samples) >= 0))

    def is_nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.samples) <= 0))

    def is_monotone(self) -> bool:
        return self.is_nondecreasing() or self.is_nonincreasing()

    @property
    def interpolation_error(self) -> float:
        """Half the largest increment between neighbouring samples."""
        if self.n < 2:
            return 0.0
        return 0.5 * float(np.max(np.abs(np.diff(self.samples))))

    @cached_property
    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(t0, t1, y0, y1): g is affine from (t0, y0) to (t1, y1) on each piece."""
        g = self.samples
        if self.interp is Interp.CELLS or self.n == 1:
            e = self.edges
            return e[:-1], e[1:], g, g
        c = self.centers
        t0 = np.concatenate([[self.a], c])
        t1 = np.concatenate([c, [self.b]])
        y0 = np.concatenate([[g[0]], g])
        y1 = np.concatenate([g, [g[-1]]])
        return t0, t1, y0, y1

    @cached_property
    def _cumulative(self) -> tuple[np.ndarray, np.ndarray]:
        t0, t1, y0, y1 = self.segments
        w = t1 - t0
        i1 = w * (y0 + y1) / 2.0
        i2 = w * (y0 * y0 + y0 * y1 + y1 * y1) / 3.0
        return np.concatenate([[0.0], np.cumsum(i1)]), np.concatenate([[0.0], np.cumsum(i2)])

    def _segment_index(self, x: np.ndarray) -> np.ndarray:
        t0 = self.segments[0]
        return np.clip(np.searchsorted(t0, x, side="right") - 1, 0, t0.size - 1)

    def value_at(self, x, side: str = "right"):
        """g(x); at a cell edge of ``CELLS`` data ``side`` picks the one-sided value."""
        xx = np.clip(np.asarray(x, dtype=float), self.a, self.b)
        t0, t1, y0, y1 = self.segments
        if side == "left":
            k = np.clip(np.searchsorted(t0, xx, side="left") - 1, 0, t0.size - 1)
        else:
            k = self._segment_index(xx)
        slope = (y1[k] - y0[k]) / (t1[k] - t0[k])
        out = y0[k] + slope * (xx - t0[k])
        return float(out) if np.ndim(x) == 0 else out

    def primitives(self, x):
        """(int_a^x g, int_a^x g^2), exact for the declared interpolation."""
        xx = np.clip(np.asarray(x, dtype=float), self.a, self.b)
        t0, t1, y0, y1 = self.segments
        c1, c2 = self._cumulative
        k = self._segment_index(xx)
        tau = xx - t0[k]
        s = (y1[k] - y0[k]) / (t1[k] - t0[k])
        p1 = c1[k] + y0[k] * tau + 0.5 * s * tau ** 2
        p2 = c2[k] + y0[k] ** 2 * tau + y0[k] * s * tau ** 2 + s * s * tau ** 3 / 3.0
        return p1, p2

    def constant_error(self, v, x0, x1):
        """int_{x0}^{x1} (v - g)^2 via primitives (fast; mild cancellation)."""
        p1a, p2a = self.primitives(x0)
        p1b, p2b = self.primitives(x1)
        v = np.asarray(v, dtype=float)
        return v * v * (np.asarray(x1) - np.asarray(x0)) - 2.0 * v * (p1b - p1a) + (p2b - p2a)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantFn:
    """u = values[i] on [breakpoints[i-1], breakpoints[i]) with the obvious ends."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if v.size != bp.size + 1:
            raise ValidationError(f"{bp.size} breakpoints need {bp.size + 1} values, got {v.size}")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(v))):
            raise ValidationError("breakpoints and values must be finite")
        if np.any(np.diff(bp) < 0):
            raise ValidationError("breakpoints must be sorted")
        bp.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, c: float) -> "PiecewiseConstantFn":
        return cls(np.empty(0), np.array([c]))

    @classmethod
    def from_cells(cls, g: Signal, cell_values: Sequence[float]) -> "PiecewiseConstantFn":
        """Canonical function taking ``cell_values[i]`` on cell i of ``g``."""
        cv = np.asarray(cell_values, dtype=float)
        if cv.size != g.n:
            raise ValidationError(f"expected {g.n} cell values, got {cv.size}")
        change = np.flatnonzero(cv[1:] != cv[:-1])
        return cls(g.edges[change + 1], np.concatenate([cv[:1], cv[change + 1]]))

    @property
    def jumps(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def jump_sizes(self) -> np.ndarray:
        return np.abs(self.jumps)

    @property
    def n_jumps(self) -> int:
        return int(np.count_nonzero(self.jumps))

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="right")
        out = self.values[idx]
        return float(out) if np.ndim(x) == 0 else out

    def left_limit(self, x):
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="left")
        out = self.values[idx]
        return float(out) if np.ndim(x) == 0 else out

    def is_nondecreasing(self) -> bool:
        return bool(np.all(self.jumps >= 0))

    def is_nonincreasing(self) -> bool:
        return bool(np.all(self.jumps <= 0))

    def facets(self, a: float, b: float) -> list[tuple[float, float, float]]:
        edges = np.concatenate([[a], self.breakpoints, [b]])
        return [(float(edges[i]), float(edges[i + 1]), float(self.values[i]))
                for i in range(self.values.size)]

    def shifted(self, c: float) -> "PiecewiseConstantFn":
        return PiecewiseConstantFn(self.breakpoints, self.values + c)

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseConstantFn":
        return cls(np.asarray(d["breakpoints"], dtype=float), np.asarray(d["values"], dtype=float))


@dataclass(frozen=True)
class EnergyBreakdown:
    tv_k: float
    fidelity: float

    @property
    def total(self) -> float:
        return self.tv_k + self.fidelity

    def to_dict(self) -> dict:
        return {"tv_k": self.tv_k, "fidelity": self.fidelity, "total": self.total}


def canonicalize(u: PiecewiseConstantFn, domain: tuple[float, float] | None = None,
                 tol: float | None = None) -> PiecewiseConstantFn:
    """Drop zero-width facets and zero-size jumps.

    Breakpoints closer than ``tol`` (default ``1e-12 * (b - a)``, or ``1e-12``
    without a domain) collapse to one and the facet between them vanishes.
    With a domain, breakpoints within ``tol`` of an endpoint are removed with
    their boundary facet.
    """
    if np.any(np.diff(u.breakpoints) < 0):
        raise ValidationError("breakpoints must be sorted")
    if tol is None:
        tol = POSITION_RTOL * ((domain[1] - domain[0]) if domain else 1.0)
    bp = list(u.breakpoints)
    vals = list(u.values)
    if domain is not None:
        a, b = domain
        while bp and bp[0] <= a + tol:
            bp.pop(0)
            vals.pop(0)
        while bp and bp[-1] >= b - tol:
            bp.pop()
            vals.pop()
    out_bp: list[float] = []
    out_v: list[float] = [vals[0]] if vals else []
    for x, v in zip(bp, vals[1:]):
        if out_bp and x - out_bp[-1] <= tol:
            # facet between the two breakpoints has zero width
            out_v[-1] = v
            if len(out_v) >= 2 and out_v[-1] == out_v[-2]:
                out_v.pop()
                out_bp.pop()
            continue
        if v == out_v[-1]:
            continue
        out_bp.append(x)
        out_v.append(v)
    return PiecewiseConstantFn(np.asarray(out_bp), np.asarray(out_v))


def tv_k_energy(u: PiecewiseConstantFn, p: JumpPenalty, lo: float | None = None,
                hi: float | None = None) -> float:
    """Sum of K over the jumps of u lying strictly inside (lo, hi)."""
    sizes = u.jump_sizes
    mask = np.ones(sizes.size, dtype=bool)
    if lo is not None:
        mask &= u.breakpoints > lo
    if hi is not None:
        mask &= u.breakpoints < hi
    sizes = sizes[mask & (sizes > 0)]
    return float(np.sum(eval_penalty(p, sizes))) if sizes.size else 0.0


def squared_error(u: PiecewiseConstantFn, g: Signal, lo: float | None = None,
                  hi: float | None = None) -> float:
    """Exact int_lo^hi (u - g)^2 under g's interpolation rule."""
    lo = g.a if lo is None else float(lo)
    hi = g.b if hi is None else float(hi)
    if lo < g.a - g.position_tol or hi > g.b + g.position_tol or hi < lo:
        raise ValidationError(f"interval [{lo}, {hi}] outside the signal domain [{g.a}, {g.b}]")
    if hi == lo:
        return 0.0
    t0, t1, y0, y1 = g.segments
    inner = u.breakpoints[(u.breakpoints > lo) & (u.breakpoints < hi)]
    knots = t0[(t0 > lo) & (t0 < hi)]
    pts = np.unique(np.concatenate([[lo, hi], inner, knots]))
    x0, x1 = pts[:-1], pts[1:]
    mid = 0.5 * (x0 + x1)
    v = u(mid)
    k = g._segment_index(mid)
    slope = (y1[k] - y0[k]) / (t1[k] - t0[k])
    d0 = v - (y0[k] + slope * (x0 - t0[k]))
    d1 = v - (y0[k] + slope * (x1 - t0[k]))
    return float(np.sum((x1 - x0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0))


def fidelity(u: PiecewiseConstantFn, g: Signal, lo: float | None = None,
             hi: float | None = None) -> float:
    """(lambda/2) int (u - g)^2, exact for the declared interpolation."""
    if u.breakpoints.size and (u.breakpoints[0] < g.a - g.position_tol
                               or u.breakpoints[-1] > g.b + g.position_tol):
        raise ValidationError("candidate has breakpoints outside the signal domain")
    return 0.5 * g.lam * squared_error(u, g, lo, hi)


def total_energy(u: PiecewiseConstantFn, g: Signal, p: JumpPenalty,
                 lo: float | None = None, hi: float | None = None) -> EnergyBreakdown:
    return EnergyBreakdown(tv_k=tv_k_energy(u, p, lo, hi), fidelity=fidelity(u, g, lo, hi))
