"""Small vectorised numerical kernels: Gauss-Legendre quadrature and golden-section search."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def gauss_legendre(f: Callable[[np.ndarray], np.ndarray], lo, hi) -> np.ndarray:
    """Fixed 10-point rule on every interval [lo_i, hi_i] at once."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[..., None] + half[..., None] * _GL_NODES
    return half * (f(x) @ _GL_WEIGHTS)


def adaptive_integrals(f, lo, hi, rtol: float = 1e-10, atol: float = 1e-16,
                       max_depth: int = 40) -> np.ndarray:
    """Integrate ``f`` over each interval, bisecting until whole and halved rules agree.

    ``f`` must accept arrays of any shape. Intervals that still disagree at
    ``max_depth`` keep their finest estimate.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    out = np.zeros(lo.shape)
    owner = np.arange(lo.size)
    a, b = lo.ravel().copy(), hi.ravel().copy()
    whole = gauss_legendre(f, a, b)
    for _ in range(max_depth):
        if owner.size == 0:
            break
        m = 0.5 * (a + b)
        left = gauss_legendre(f, a, m)
        right = gauss_legendre(f, m, b)
        fine = left + right
        done = np.abs(fine - whole) <= np.maximum(atol, rtol * np.abs(fine))
        np.add.at(out.ravel(), owner[done], fine[done])
        keep = ~done
        owner = np.concatenate([owner[keep], owner[keep]])
        a, b = np.concatenate([a[keep], m[keep]]), np.concatenate([m[keep], b[keep]])
        whole = np.concatenate([left[keep], right[keep]])
    if owner.size:
        np.add.at(out.ravel(), owner, whole)
    return out


def golden_section(f: Callable[[np.ndarray], np.ndarray], lo, hi,
                   tol: float = 1e-12, max_iter: int = 200):
    """Minimise a unimodal ``f`` on many brackets simultaneously.

    Returns ``(x, f(x))`` arrays. ``f`` is evaluated on arrays shaped like ``lo``.
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            break
        left = fc <= fd
        # left: keep [a, d], old c becomes the new d; else keep [c, b], old d becomes the new c
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_next = np.where(left, b - INV_PHI * (b - a), d)
        d_next = np.where(left, c, a + INV_PHI * (b - a))
        fp = f(np.where(left, c_next, d_next))
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_next, d_next
    x = 0.5 * (a + b)
    return x, f(x)
