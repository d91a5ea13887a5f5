"""Classical ROF baseline: exact discrete 1-D total variation denoising.

Solves  min_u  sum_i |u_{i+1} - u_i| + (lambda/2) h sum_i (u_i - g_i)^2
with Condat's direct algorithm (L. Condat, "A direct algorithm for 1D total
variation denoising", IEEE SPL 2013). Dividing by lambda*h turns the problem into
the standard form  (1/2)||u - g||^2 + mu ||Du||_1  with mu = 1 / (lambda h).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .penalty import JumpPenalty
from .signal import EnergyBreakdown, PiecewiseConstantFn, Signal, total_energy


def tv_denoise(y: np.ndarray, mu: float) -> np.ndarray:
    """Condat's taut-string style direct method for (1/2)||x - y||^2 + mu ||Dx||_1."""
    y = np.asarray(y, dtype=float)
    n = y.size
    x = np.empty(n)
    if n == 0:
        return x
    if mu <= 0 or n == 1:
        x[:] = y
        return x
    k = k0 = kplus = kminus = 0
    umin, umax = mu, -mu
    vmin, vmax = y[0] - mu, y[0] + mu
    twomu = 2.0 * mu
    while True:
        while k == n - 1:
            if umin < 0.0:
                x[k0:kminus + 1] = vmin
                k0 = kminus + 1
                k = kminus = k0
                vmin = y[k]
                umin = mu
                umax = vmin + umin - vmax
            elif umax > 0.0:
                x[k0:kplus + 1] = vmax
                k0 = kplus + 1
                k = kplus = k0
                vmax = y[k]
                umax = -mu
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                x[k0:k + 1] = vmin
                return x
        umin += y[k + 1] - vmin
        if umin < -mu:
            x[k0:kminus + 1] = vmin
            k0 = kminus + 1
            k = kplus = kminus = k0
            vmin = y[k]
            vmax = vmin + twomu
            umin, umax = mu, -mu
            continue
        umax += y[k + 1] - vmax
        if umax > mu:
            x[k0:kplus + 1] = vmax
            k0 = kplus + 1
            k = kplus = kminus = k0
            vmax = y[k]
            vmin = vmax - twomu
            umin, umax = mu, -mu
            continue
        k += 1
        if umin >= mu:
            kminus = k
            vmin += (umin - mu) / (kminus - k0 + 1)
            umin = mu
        if umax <= -mu:
            kplus = k
            vmax += (umax + mu) / (kplus - k0 + 1)
            umax = -mu


@dataclass(frozen=True, eq=False)
class RofSolution:
    cell_values: np.ndarray
    u: PiecewiseConstantFn
    objective: float
    energy: EnergyBreakdown


def rof_objective(cell_values: np.ndarray, g: Signal) -> float:
    cv = np.asarray(cell_values, dtype=float)
    return float(np.sum(np.abs(np.diff(cv))) + 0.5 * g.lam * g.h * np.sum((cv - g.samples) ** 2))


def solve_rof(g: Signal) -> RofSolution:
    """Unique minimiser of the discrete ROF energy on g's cells."""
    cv = tv_denoise(g.samples, 1.0 / (g.lam * g.h))
    u = PiecewiseConstantFn.from_cells(g, cv)
    return RofSolution(cell_values=cv, u=u, objective=rof_objective(cv, g),
                       energy=total_energy(u, g, JumpPenalty.linear()))


def max_jump(u: PiecewiseConstantFn, tol: float = 0.0) -> float:
    """Largest jump of u; jumps no larger than ``tol`` count as zero."""
    sizes = u.jump_sizes
    if sizes.size == 0:
        return 0.0
    m = float(sizes.max())
    return m if m > tol else 0.0
