"""Small deterministic numeric search utilities shared across modules.

Everything here is dependency-light and purely functional: golden-section
maximization on a bracket, monotone bisection, simplex grids, and a
coordinate-ascent refiner over the probability simplex.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, Iterable

import numpy as np

from .errors import ConvergenceError

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0  # 1/phi
INV_PHI2 = (3.0 - np.sqrt(5.0)) / 2.0  # 1/phi^2


def golden_max(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    width: float = 1e-10,
    max_iter: int = 500,
) -> tuple[float, float, tuple[float, float]]:
    """Maximize a unimodal f on [lo, hi] by golden-section search.

    Returns (x_star, f(x_star), final_bracket). Deterministic; shrinks the
    bracket below `width` (or exhausts max_iter, which for sane brackets
    never happens before the width stop).
    """
    a, b = float(lo), float(hi)
    h = b - a
    if h <= width:
        x = 0.5 * (a + b)
        return x, f(x), (a, b)
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if h <= width:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + INV_PHI * h
            fd = f(d)
    if fc >= fd:
        x, fx = c, fc
    else:
        x, fx = d, fd
    return x, fx, (a, b)


def bisect_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 300,
) -> float:
    """Root of a monotone increasing f on [lo, hi] with f(lo) <= 0 <= f(hi)."""
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise ConvergenceError(
            f"bisection bracket does not straddle the root: f({lo})={flo}, f({hi})={fhi}"
        )
    a, b = float(lo), float(hi)
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if abs(fm) <= tol and (b - a) <= max(tol, 1e-15 * max(abs(a), abs(b), 1.0)):
            return m
        if fm < 0:
            a = m
        else:
            b = m
        if (b - a) <= tol * max(1.0, abs(a)):
            break
    return 0.5 * (a + b)


def simplex_grid(k: int, resolution: int) -> np.ndarray:
    """All compositions with denominator `resolution` on the k-simplex.

    Returns an array of shape (n_points, k) with rows summing to 1.
    n_points = C(resolution + k - 1, k - 1); callers guard the blow-up.
    """
    if k == 1:
        return np.ones((1, 1))
    pts = []
    # stars and bars: positions of k-1 bars among resolution + k - 1 slots
    for bars in combinations(range(resolution + k - 1), k - 1):
        prev = -1
        counts = []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(resolution + k - 1 - prev - 1)
        pts.append(counts)
    return np.asarray(pts, dtype=float) / float(resolution)


def refine_simplex_max(
    f: Callable[[np.ndarray], float],
    p0: np.ndarray,
    f0: float | None = None,
    step0: float = 0.02,
    min_step: float = 1e-9,
    feasible: Callable[[np.ndarray], bool] | None = None,
) -> tuple[np.ndarray, float]:
    """Coordinate ascent with shrinking steps on the probability simplex.

    Moves mass between coordinate pairs (p + s(e_i - e_j)), halving the step
    whenever no move improves. Stops below `min_step`. `feasible` can veto
    candidates (used to stay inside constraint sets like {E_SP >= nu}).
    """
    p = np.asarray(p0, dtype=float).copy()
    k = p.size
    best = f(p) if f0 is None else f0
    step = step0
    while step >= min_step:
        improved = False
        for i in range(k):
            for j in range(k):
                if i == j or p[j] < step - 1e-15:
                    continue
                q = p.copy()
                q[i] += step
                q[j] -= step
                if q[j] < 0:
                    continue
                q /= q.sum()
                if feasible is not None and not feasible(q):
                    continue
                val = f(q)
                if val > best + 1e-15:
                    p, best = q, val
                    improved = True
        if not improved:
            step *= 0.5
    return p, best


def strictly_increasing(xs: Iterable[float]) -> bool:
    xs = list(xs)
    return all(b > a for a, b in zip(xs, xs[1:]))
