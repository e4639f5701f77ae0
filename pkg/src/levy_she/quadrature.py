"""Thin wrappers around QUADPACK (``scipy.integrate.quad``).

``integrate`` splits an interval at known kinks/jumps of the integrand;
``integrate_halfline`` integrates over ``[0, inf)`` by dyadic chunks and
truncates once the estimated remainder is negligible.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable, Iterable, Optional

from scipy import integrate as _si

from .errors import NumericFailure

EPSREL = 1e-10
LIMIT = 400


def _quad(fn, a, b, epsrel, epsabs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _si.IntegrationWarning)
        val, err = _si.quad(fn, a, b, epsrel=epsrel, epsabs=epsabs, limit=LIMIT)
    if not math.isfinite(val):
        raise NumericFailure(f"quadrature returned {val} on [{a}, {b}]")
    return val, err


def integrate(
    fn: Callable[[float], float],
    a: float,
    b: float,
    points: Iterable[float] = (),
    epsrel: float = EPSREL,
    epsabs: float = 0.0,
) -> float:
    """Integrate ``fn`` over ``[a, b]``; ``a``/``b`` may be infinite.

    Interior ``points`` become hard split points, which is what QUADPACK
    needs to handle jump discontinuities cleanly.
    """
    if b <= a:
        return 0.0
    cuts = sorted({p for p in points if a < p < b and math.isfinite(p)})
    edges = [a, *cuts, b]
    if math.isinf(a) and math.isinf(b) and not cuts:
        edges = [a, 0.0, b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = _quad(fn, lo, hi, epsrel, epsabs)
        total += val
    return total


def integrate_halfline(
    fn: Callable[[float], float],
    breaks: Iterable[float] = (),
    tol: float = 1e-12,
    tail_bound: Optional[Callable[[float], float]] = None,
    epsrel: float = EPSREL,
    max_chunks: int = 1100,
) -> float:
    """Integrate a nonnegative ``fn`` over ``[0, inf)``.

    Chunks are ``[0,1], [1,2], [2,4], ...`` refined at ``breaks``. After the
    last break the loop stops when either ``tail_bound(U)`` (a rigorous bound
    on the remainder beyond ``U``) or a geometric extrapolation from the last
    two chunks falls below ``tol`` times the running value.
    """
    breaks = sorted(b for b in breaks if b > 0 and math.isfinite(b))
    last_break = breaks[-1] if breaks else 0.0
    total = 0.0
    lo = 0.0
    hi = 1.0
    prev_chunk = None
    for _ in range(max_chunks):
        pts = [p for p in breaks if lo < p < hi]
        chunk = integrate(fn, lo, hi, pts, epsrel=epsrel)
        total += chunk
        if hi > last_break and total > 0.0:
            if tail_bound is not None:
                if tail_bound(hi) <= tol * total:
                    return total
            elif prev_chunk is not None and prev_chunk > 0.0:
                q = chunk / prev_chunk
                if chunk <= tol * total and q < 1.0:
                    if chunk * q / (1.0 - q) <= tol * total:
                        return total
        elif hi > last_break and total == 0.0 and tail_bound is not None:
            if tail_bound(hi) == 0.0:
                return 0.0
        prev_chunk = chunk if hi > last_break else None
        lo, hi = hi, 2.0 * hi
    raise NumericFailure("half-line integral did not meet its truncation tolerance")
