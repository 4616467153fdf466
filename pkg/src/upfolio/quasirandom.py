"""Deterministic low-discrepancy sequences on the unit cube and the simplex.

These are used wherever the library needs a fixed, platform-independent point
set (metric evaluation grids, atom clouds). No RNG state is involved: point k
of a sequence is a pure function of k.
"""

from __future__ import annotations

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def van_der_corput(count: int, base: int = 2, start: int = 1) -> np.ndarray:
    """Radical-inverse sequence in (0, 1) for indices start..start+count-1."""
    out = np.empty(count)
    for j in range(count):
        k = start + j
        x, denom = 0.0, 1.0
        while k > 0:
            k, digit = divmod(k, base)
            denom *= base
            x += digit / denom
        out[j] = x
    return out


def halton(count: int, dim: int, start: int = 1) -> np.ndarray:
    """Halton points in (0, 1)^dim using the first `dim` prime bases."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports at most {len(_PRIMES)} dimensions")
    cols = [van_der_corput(count, base=_PRIMES[d], start=start) for d in range(dim)]
    return np.stack(cols, axis=1)


def halton_simplex(count: int, n: int, start: int = 1) -> np.ndarray:
    """Low-discrepancy points on the closed unit simplex in R^n.

    Halton points in the (n-1)-cube are mapped through the sorted-spacings
    transform, which carries the uniform cube measure to the uniform simplex
    measure.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.ones((count, 1))
    u = np.sort(halton(count, n - 1, start=start), axis=1)
    padded = np.hstack([np.zeros((count, 1)), u, np.ones((count, 1))])
    return np.diff(padded, axis=1)


def shrunk_simplex_points(count: int, n: int, floor: float, start: int = 1) -> np.ndarray:
    """Low-discrepancy points on {p in simplex : p_i >= floor}.

    Requires n * floor <= 1. For n * floor == 1 every point is the barycenter.
    """
    if floor < 0 or n * floor > 1 + 1e-15:
        raise ValueError(f"floor {floor} incompatible with dimension {n}")
    scale = 1.0 - n * floor
    return floor + scale * halton_simplex(count, n, start=start)
