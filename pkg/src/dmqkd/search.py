"""Bounded scalar search helpers: golden-section maximization and boundary bisection."""

from __future__ import annotations

import math
from typing import Callable

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f: Callable[[float], float], a: float, b: float, tol: float, max_iter: int = 200):
    """Maximize ``f`` on ``[a, b]`` assuming unimodality there.

    Returns ``(x, f(x), evaluations)``. The endpoints are compared against the
    interior optimum so a monotone ``f`` returns the right edge value.
    """
    if b < a:
        a, b = b, a
    fa, fb = f(a), f(b)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    evals = 4
    lo, hi = a, b
    while hi - lo > tol and evals < max_iter:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
        evals += 1
    best = max([(f1, x1), (f2, x2), (fa, a), (fb, b)], key=lambda t: t[0])
    return best[1], best[0], evals


def bisect_boundary(ok: Callable[[float], bool], inside: float, outside: float, tol: float, max_iter: int = 200) -> float:
    """Last point where ``ok`` holds on the segment from ``inside`` towards ``outside``."""
    for _ in range(max_iter):
        if abs(outside - inside) <= tol:
            break
        mid = 0.5 * (inside + outside)
        if ok(mid):
            inside = mid
        else:
            outside = mid
    return inside


def grid(a: float, b: float, n: int) -> list[float]:
    if n < 2 or a == b:
        return [0.5 * (a + b)]
    step = (b - a) / (n - 1)
    return [a + k * step for k in range(n)]
