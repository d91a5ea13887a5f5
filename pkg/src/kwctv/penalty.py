"""Jump penalties K(rho): closed forms, penalties derived from a single-well
potential, and grid certification of the constants that control jump budgets.

A penalty charges ``K(rho)`` for a jump of height ``rho``. Three kinds exist:

* ``LINEAR``: ``K(rho) = rho`` (classical total variation, no strict subadditivity);
* ``RHO_OVER_ONE_PLUS_RHO``: ``K(rho) = rho / (1 + rho)``;
* ``FROM_POTENTIAL``: ``K(rho) = min_xi (s xi_+^2 rho + 2 G(xi))`` tabulated on nodes,
  where ``G(xi) = |int_1^xi sqrt(F)|`` for a single-well potential ``F``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from ._numerics import adaptive_integrals, gauss_legendre, golden_section
from .errors import CertificationError, DomainError, RangeError, ValidationError

DEFAULT_SAFETY = 0.99


class PenaltyKind(enum.Enum):
    LINEAR = "linear"
    RHO_OVER_ONE_PLUS_RHO = "rho-over-1+rho"
    FROM_POTENTIAL = "from-potential"


@dataclass(frozen=True, eq=False)
class JumpPenalty:
    kind: PenaltyKind
    s: float = 1.0
    rho_nodes: np.ndarray | None = None
    k_nodes: np.ndarray | None = None
    xi_nodes: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if not self.s > 0:
            raise ValidationError(f"weight s must be positive, got {self.s}")
        if self.kind is PenaltyKind.FROM_POTENTIAL:
            if self.rho_nodes is None or self.k_nodes is None:
                raise ValidationError("tabulated penalty needs rho_nodes and k_nodes")
            rho = np.array(self.rho_nodes, dtype=float)
            k = np.array(self.k_nodes, dtype=float)
            if rho.ndim != 1 or rho.shape != k.shape or rho.size < 2:
                raise ValidationError("rho_nodes and k_nodes must be 1-D arrays of equal length >= 2")
            if rho[0] != 0.0 or k[0] != 0.0:
                raise ValidationError("table must start at (0, 0)")
            if np.any(np.diff(rho) <= 0):
                raise ValidationError("rho_nodes must be strictly increasing")
            if np.any(np.diff(k) <= 0):
                raise ValidationError("tabulated K is not strictly increasing")
            # xi = 1 is always admissible, so K(rho) <= s rho
            if np.any(k > self.s * rho * (1 + 1e-12) + 1e-15):
                raise ValidationError("tabulated K exceeds s * rho somewhere")
            for arr in (rho, k):
                arr.setflags(write=False)
            object.__setattr__(self, "rho_nodes", rho)
            object.__setattr__(self, "k_nodes", k)

    @classmethod
    def linear(cls) -> "JumpPenalty":
        return cls(PenaltyKind.LINEAR, label="linear")

    @classmethod
    def rho_over_one_plus_rho(cls) -> "JumpPenalty":
        return cls(PenaltyKind.RHO_OVER_ONE_PLUS_RHO, label="rho-over-1+rho")

    @property
    def rho_max(self) -> float:
        if self.kind is PenaltyKind.FROM_POTENTIAL:
            return float(self.rho_nodes[-1])
        return math.inf

    def __call__(self, rho):
        return eval_penalty(self, rho)


def eval_penalty(p: JumpPenalty, rho):
    """K(rho) for a scalar or array of nonnegative jump sizes."""
    arr = np.asarray(rho, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("jump size must be nonnegative")
    if p.kind is PenaltyKind.LINEAR:
        out = arr.copy()
    elif p.kind is PenaltyKind.RHO_OVER_ONE_PLUS_RHO:
        out = arr / (1.0 + arr)
    else:
        if np.any(arr > p.rho_max * (1 + 1e-12)):
            raise RangeError(f"jump size exceeds tabulated range [0, {p.rho_max}]")
        out = np.interp(arr, p.rho_nodes, p.k_nodes)
    out = np.where(arr == 0.0, 0.0, out)
    return float(out) if np.ndim(rho) == 0 else out


def subadditivity_gap(p: JumpPenalty, rho1, rho2):
    """K(rho1) + K(rho2) - K(rho1 + rho2)."""
    r1 = np.asarray(rho1, dtype=float)
    r2 = np.asarray(rho2, dtype=float)
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise DomainError("jump sizes must be nonnegative")
    out = eval_penalty(p, r1) + eval_penalty(p, r2) - eval_penalty(p, r1 + r2)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------- potentials


@dataclass(frozen=True, eq=False)
class Potential:
    """Single-well potential F on [0, x_max] with its only zero at x = 1.

    ``func`` must be vectorised. ``G`` is tabulated on ``[0, 1]`` with spacing
    ``xi_step``; segment integrals of sqrt(F) are adaptive to ``quad_rtol``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    x_max: float = 2.0
    name: str = "custom"
    xi_step: float = 1e-4
    quad_rtol: float = 1e-10

    @classmethod
    def quadratic_well(cls, **kw) -> "Potential":
        return cls(lambda x: (np.asarray(x) - 1.0) ** 2, name="quadratic-well", **kw)

    @classmethod
    def abs_power(cls, m: float, **kw) -> "Potential":
        if not m > 0:
            raise ValidationError(f"exponent must be positive, got {m}")
        return cls(lambda x: np.abs(np.asarray(x) - 1.0) ** m, name=f"abs-power:{m:g}", **kw)

    @classmethod
    def from_table(cls, x: Sequence[float], f: Sequence[float], name: str = "table", **kw) -> "Potential":
        xs = np.asarray(x, dtype=float)
        fs = np.asarray(f, dtype=float)
        if xs.ndim != 1 or xs.shape != fs.shape or xs.size < 2:
            raise ValidationError("potential table needs matching 1-D x and F columns")
        if np.any(np.diff(xs) <= 0):
            raise ValidationError("potential table x values must be strictly increasing")
        if xs[0] > 0.0 or xs[-1] < 1.0:
            raise ValidationError("potential table must cover [0, 1]")
        kw.setdefault("x_max", float(xs[-1]))
        return cls(lambda t: np.interp(t, xs, fs), name=name, **kw)

    @classmethod
    def named(cls, spec: str, **kw) -> "Potential":
        """Built-ins: ``quadratic-well`` and ``abs-power:<m>``."""
        if spec == "quadratic-well":
            return cls.quadratic_well(**kw)
        if spec.startswith("abs-power:"):
            try:
                m = float(spec.split(":", 1)[1])
            except ValueError as exc:
                raise ValidationError(f"bad exponent in {spec!r}") from exc
            return cls.abs_power(m, **kw)
        raise ValidationError(f"unknown built-in potential {spec!r}")

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def sqrt_f(self, x):
        return np.sqrt(np.maximum(self(x), 0.0))

    @cached_property
    def xi_grid(self) -> np.ndarray:
        n = int(round(1.0 / self.xi_step))
        return np.linspace(0.0, 1.0, n + 1)

    @cached_property
    def g_table(self) -> np.ndarray:
        """G at every node of ``xi_grid`` (G(1) = 0)."""
        xi = self.xi_grid
        seg = adaptive_integrals(self.sqrt_f, xi[:-1], xi[1:], rtol=self.quad_rtol)
        g = np.zeros_like(xi)
        g[:-1] = np.cumsum(seg[::-1])[::-1]
        return g

    def G(self, xi):
        """|int_1^xi sqrt(F)| for xi in [0, 1]."""
        x = np.clip(np.asarray(xi, dtype=float), 0.0, 1.0)
        grid = self.xi_grid
        k = np.minimum(np.searchsorted(grid, x, side="right"), grid.size - 1)
        out = self.g_table[k] + gauss_legendre(self.sqrt_f, x, grid[k])
        return float(out) if np.ndim(xi) == 0 else out

    def check(self) -> list[str]:
        """Sampled invariant checks; returns the names of failing checks."""
        failures = []
        xs = np.linspace(0.0, self.x_max, int(round(self.x_max / self.xi_step)) + 1)
        fx = self(xs)
        if not np.all(np.isfinite(fx)):
            failures.append("F finite")
        if np.any(fx < -1e-14):
            failures.append("F >= 0")
        if abs(float(self(1.0))) > 1e-12:
            failures.append("F(1) = 0")
        away = np.abs(xs - 1.0) > 1e-12
        if np.any(fx[away] <= 0):
            failures.append("F > 0 away from 1")
        inner = fx[(xs >= 0.0) & (xs <= 1.0)]
        if np.any(np.diff(inner) >= 0):
            failures.append("F strictly decreasing on (0, 1)")
        return failures


def _require_valid(F: Potential) -> None:
    failures = F.check()
    if failures:
        raise ValidationError("potential invariant violated: " + ", ".join(failures))


def build_from_potential(F: Potential, s: float = 1.0, rho_max: float = 10.0,
                         tol: float = 1e-12, rho_step: float = 0.01,
                         rho_nodes: Sequence[float] | None = None) -> JumpPenalty:
    """Tabulate K(rho) = min over xi in [0, 1] of (s xi^2 rho + 2 G(xi)).

    Each node is seeded on the G grid and then refined by golden-section
    search on the two neighbouring grid cells.
    """
    _require_valid(F)
    if not s > 0 or not tol > 0:
        raise ValidationError("s and tol must be positive")
    if rho_nodes is None:
        n = int(round(rho_max / rho_step))
        rho = np.linspace(0.0, rho_max, n + 1)
    else:
        rho = np.asarray(rho_nodes, dtype=float)
        if rho[0] != 0.0:
            rho = np.concatenate([[0.0], rho])
    xi = F.xi_grid
    two_g = 2.0 * F.g_table
    k_vals = np.zeros_like(rho)
    xi_best = np.ones_like(rho)

    pos = np.flatnonzero(rho > 0)
    for chunk in np.array_split(pos, max(1, pos.size // 64)):
        if chunk.size == 0:
            continue
        r = rho[chunk]
        obj = s * xi[None, :] ** 2 * r[:, None] + two_g[None, :]
        k = np.argmin(obj, axis=1)
        seed = obj[np.arange(chunk.size), k]
        lo = xi[np.maximum(k - 1, 0)]
        hi = xi[np.minimum(k + 1, xi.size - 1)]
        x_ref, f_ref = golden_section(lambda t: s * t * t * r + 2.0 * F.G(t), lo, hi, tol=tol)
        better = f_ref < seed
        k_vals[chunk] = np.where(better, f_ref, seed)
        xi_best[chunk] = np.where(better, x_ref, xi[k])
    return JumpPenalty(PenaltyKind.FROM_POTENTIAL, s=s, rho_nodes=rho, k_nodes=k_vals,
                       xi_nodes=xi_best, label=f"potential:{F.name}")


# --------------------------------------------------------------------------- certification


@dataclass(frozen=True)
class PenaltyCertificate:
    M: float
    c_M: float
    C_M: float
    grid_resolution: float
    safety_factor: float = DEFAULT_SAFETY

    @property
    def A_M(self) -> float:
        return min(self.c_M / self.M, 2.0 * self.C_M)

    def to_dict(self) -> dict:
        return {"M": self.M, "c_M": self.c_M, "C_M": self.C_M, "A_M": self.A_M,
                "grid_resolution": self.grid_resolution, "safety_factor": self.safety_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "PenaltyCertificate":
        return cls(M=d["M"], c_M=d["c_M"], C_M=d["C_M"], grid_resolution=d["grid_resolution"],
                   safety_factor=d.get("safety_factor", DEFAULT_SAFETY))


def certification_grid(M: float, grid_step: float) -> np.ndarray:
    """Points k*grid_step in (0, M], plus M itself when it is off the lattice."""
    n = int(math.floor(M / grid_step + 1e-9))
    pts = grid_step * np.arange(1, n + 1)
    if n == 0 or M - pts[-1] > 1e-12 * M:
        pts = np.append(pts, M)
    return pts


def certify(p: JumpPenalty, M: float, grid_step: float = 0.01,
            safety: float = DEFAULT_SAFETY) -> PenaltyCertificate:
    if not M > 0 or not grid_step > 0:
        raise ValidationError("M and grid_step must be positive")
    if not 0 < safety <= 1:
        raise ValidationError("safety factor must lie in (0, 1]")
    if M > p.rho_max:
        raise RangeError(f"M = {M} exceeds tabulated range {p.rho_max}")
    rho = certification_grid(M, grid_step)
    c_raw = float(np.min(eval_penalty(p, rho) / rho))

    i, j = np.triu_indices(rho.size)
    ok = rho[i] + rho[j] <= M * (1 + 1e-12)
    r1 = np.concatenate([rho[i][ok], [M / 2]])
    r2 = np.concatenate([rho[j][ok], [M / 2]])
    C_raw = float(np.min(subadditivity_gap(p, r1, r2) / (r1 * r2)))

    if not c_raw > 0:
        raise CertificationError(f"linear lower bound c_M is nonpositive ({c_raw:g})")
    if not C_raw > 1e-12:
        raise CertificationError(
            f"(K2) certification failed: strict subadditivity constant C_M is nonpositive ({C_raw:g})")
    return PenaltyCertificate(M=float(M), c_M=safety * c_raw, C_M=safety * C_raw,
                              grid_resolution=float(grid_step), safety_factor=float(safety))


@dataclass
class LowerGapReport:
    passed: bool
    worst_margin: float
    worst_rho: float
    failures: list[float] = field(default_factory=list)


def lower_gap_margin(p: JumpPenalty, C: float, rho):
    """rho - K(rho) - C rho^2 / 2."""
    r = np.asarray(rho, dtype=float)
    return r - eval_penalty(p, r) - 0.5 * C * r * r


def check_lower_gap(p: JumpPenalty, cert: PenaltyCertificate,
                    grid_step: float | None = None) -> LowerGapReport:
    """Check rho - K(rho) >= C_M rho^2 / 2 on the grid in (0, M]."""
    rho = certification_grid(cert.M, grid_step or cert.grid_resolution)
    margin = lower_gap_margin(p, cert.C_M, rho)
    k = int(np.argmin(margin))
    bad = rho[margin < 0]
    return LowerGapReport(passed=bad.size == 0, worst_margin=float(margin[k]),
                          worst_rho=float(rho[k]), failures=bad.tolist())


# --------------------------------------------------------------------------- potential audit


@dataclass
class PotentialReport:
    probe_steps: list[float]
    derivative_ratios: list[float]
    energy_ratios: list[float]
    derivative_slope: float
    energy_slope: float
    limsup_estimate: float
    liminf_estimate: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _loglog_slope(h: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log h over the three smallest probes."""
    order = np.argsort(h)[:3]
    lh, ly = np.log(h[order]), np.log(np.maximum(y[order], 1e-300))
    if np.ptp(lh) == 0:
        return 0.0
    return float(np.polyfit(lh, ly, 1)[0])


def verify_potential(F: Potential, probe_steps: Sequence[float] | None = None,
                     slope_tol: float = 0.05) -> PotentialReport:
    """Grid evidence that K built from ``F`` is strictly subadditive near 0.

    Two quantities are probed at x = 1 - h for shrinking h:

    * ``F'(x) / (x - 1)`` by central differences; it must stay bounded;
    * ``int_x^1 sqrt(F) / F(x)``; it must stay away from zero.

    "Bounded" and "away from zero" are judged by the log-log slope over the
    three smallest probes: divergence shows up as a slope below ``-slope_tol``
    (first ratio), decay to zero as a slope above ``+slope_tol`` (second).
    """
    _require_valid(F)
    h = np.asarray(probe_steps if probe_steps is not None else 10.0 ** -np.arange(1, 7), dtype=float)
    if np.any(h <= 0) or np.any(h >= 1):
        raise ValidationError("probe steps must lie in (0, 1)")
    x = 1.0 - h
    dx = 1e-3 * h
    deriv = (F(x + dx) - F(x - dx)) / (2.0 * dx)
    d_ratio = deriv / (x - 1.0)
    integ = adaptive_integrals(F.sqrt_f, x, np.ones_like(x), rtol=1e-12)
    e_ratio = integ / F(x)
    d_slope = _loglog_slope(h, np.abs(d_ratio))
    e_slope = _loglog_slope(h, e_ratio)
    passed = bool(np.all(np.isfinite(d_ratio)) and np.all(d_ratio >= 0)
                  and d_slope >= -slope_tol and e_slope <= slope_tol)
    return PotentialReport(probe_steps=h.tolist(), derivative_ratios=d_ratio.tolist(),
                           energy_ratios=e_ratio.tolist(), derivative_slope=d_slope,
                           energy_slope=e_slope, limsup_estimate=float(np.max(d_ratio)),
                           liminf_estimate=float(np.min(e_ratio)), passed=passed)
