"""Market-weight paths on the simplex.

A market is a finite sequence of weight vectors in the open unit simplex with
componentwise step ratios bounded in [1/M, M]. Paths are stored in log space:
the adversarial two-stock path drives one coordinate below the smallest
positive double long before interesting horizons are reached, while its log
stays comfortably finite and every step ratio remains exact as a difference of
logs. Alongside the paths this module maintains the empirical measure of
consecutive weight pairs, the basic object the growth-rate machinery
integrates against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import SimplexError
from .tables import write_csv

# Coordinate floor defining the numerically "open" simplex for validated
# input points. Analytic path generators may go below it (see MarketPath).
OPEN_FLOOR = 1e-12

# Simplex sum tolerances: strict for constructed points, lenient for user
# input (accepted points are renormalized to machine precision).
SUM_TOL_STRICT = 1e-12
SUM_TOL_INPUT = 1e-9


def _as_coords(values, *, name: str = "point") -> np.ndarray:
    coords = np.asarray(values, dtype=float)
    if coords.ndim != 1 or coords.size < 2:
        raise SimplexError(f"{name} must be a 1-d vector with n >= 2, got shape {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise SimplexError(f"{name} has non-finite coordinates")
    return coords


@dataclass(frozen=True)
class SimplexPoint:
    """A weight vector on the unit simplex.

    The closed variant allows zero coordinates (portfolio weights); the open
    variant additionally requires every coordinate >= OPEN_FLOOR (market
    weights).
    """

    coords: np.ndarray
    open_: bool = False

    def __post_init__(self):
        coords = _as_coords(self.coords)
        if coords.min() < 0:
            raise SimplexError(f"negative coordinate {coords.min()}")
        if self.open_ and coords.min() < OPEN_FLOOR:
            raise SimplexError(f"coordinate {coords.min()} below open-simplex floor {OPEN_FLOOR}")
        if abs(coords.sum() - 1.0) > SUM_TOL_STRICT:
            raise SimplexError(f"coordinates sum to {coords.sum()!r}, not 1")
        coords = coords.copy()
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.size


def barycenter(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


class MarketPath:
    """A market-weight path with verified bounded relative returns.

    Log coordinates are the source of truth; `coords` is their exponential.
    `bound_M` is computed from the path itself (the bound is not an input:
    the investor does not know it), as the smallest M with all step ratios in
    [1/M, M]. Instances are immutable and safe to share across workers.
    """

    def __init__(self, log_coords: np.ndarray, *, state_index: np.ndarray | None = None,
                 states: np.ndarray | None = None):
        log_coords = np.array(log_coords, dtype=float)  # own the storage
        if log_coords.ndim != 2 or log_coords.shape[0] < 2 or log_coords.shape[1] < 2:
            raise SimplexError(f"path needs >= 2 points of dimension >= 2, got {log_coords.shape}")
        if not np.all(np.isfinite(log_coords)):
            raise SimplexError("path has non-finite log coordinates")
        coords = np.exp(log_coords)
        sums = coords.sum(axis=1)
        bad = np.abs(sums - 1.0) > SUM_TOL_INPUT
        if bad.any():
            t = int(np.argmax(bad))
            raise SimplexError(f"point at t={t} sums to {sums[t]!r}")
        self._log_coords = log_coords
        self._log_coords.flags.writeable = False
        self._coords = coords
        self._coords.flags.writeable = False
        self._log_steps = np.diff(log_coords, axis=0)
        self._log_steps.flags.writeable = False
        self.bound_M = float(np.exp(np.abs(self._log_steps).max()))
        # Assumption check per step against the stored bound (holds by
        # construction of bound_M; kept as a guard on the arithmetic).
        assert np.all(np.abs(self._log_steps) <= math.log(self.bound_M) + 1e-12)
        self._state_index = state_index if state_index is None else np.asarray(state_index, dtype=np.intp)
        self._states = states
        self._log_states = None
        self._pair_encoding = None

    @classmethod
    def from_points(cls, points) -> "MarketPath":
        """Validate raw points (open simplex, lenient sums) into a path."""
        rows = []
        n = None
        for i, p in enumerate(points):
            coords = p.coords if isinstance(p, SimplexPoint) else _as_coords(p, name=f"point {i}")
            if n is None:
                n = coords.size
            elif coords.size != n:
                raise SimplexError(f"point {i} has dimension {coords.size}, expected {n}")
            s = coords.sum()
            if abs(s - 1.0) > SUM_TOL_INPUT:
                raise SimplexError(f"point {i} sums to {s!r}")
            coords = coords / s
            if coords.min() < OPEN_FLOOR:
                raise SimplexError(f"point {i} has coordinate {coords.min()} below {OPEN_FLOOR}")
            rows.append(np.log(coords))
        if not rows:
            raise SimplexError("empty point list")
        if len(rows) < 2:
            raise SimplexError("a market path needs at least 2 points")
        return cls(np.stack(rows))

    # -- basic geometry ---------------------------------------------------
    @property
    def n(self) -> int:
        return self._log_coords.shape[1]

    @property
    def horizon(self) -> int:
        """Number of steps (path has horizon + 1 points)."""
        return self._log_coords.shape[0] - 1

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    @property
    def log_coords(self) -> np.ndarray:
        return self._log_coords

    @property
    def log_steps(self) -> np.ndarray:
        """log mu(t+1) - log mu(t), shape (horizon, n)."""
        return self._log_steps

    @property
    def step_ratios(self) -> np.ndarray:
        return np.exp(self._log_steps)

    @property
    def points(self) -> list[SimplexPoint]:
        return [SimplexPoint(row) for row in self._coords]

    def subpath(self, start: int, stop: int | None = None) -> "MarketPath":
        """Path restricted to points start..stop (inclusive)."""
        stop = self.horizon if stop is None else stop
        if not (0 <= start < stop <= self.horizon):
            raise ValueError(f"invalid subpath [{start}, {stop}]")
        idx = None if self._state_index is None else self._state_index[start:stop + 1]
        return MarketPath(self._log_coords[start:stop + 1].copy(),
                          state_index=idx, states=self._states)

    # -- state structure ---------------------------------------------------
    def unique_states(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct visited points (first-seen order) and per-time index.

        Distinctness is exact bitwise equality of coordinate rows, which is
        the right notion here: grid generators reuse the same float vectors.
        """
        if self._state_index is None:
            seen: dict[bytes, int] = {}
            index = np.empty(self._log_coords.shape[0], dtype=np.intp)
            order = []
            for t, row in enumerate(self._log_coords):
                key = row.tobytes()
                if key not in seen:
                    seen[key] = len(order)
                    order.append(t)
                index[t] = seen[key]
            picks = np.asarray(order, dtype=np.intp)
            self._states = self._coords[picks]
            self._log_states = self._log_coords[picks]
            self._state_index = index
        elif self._states is None:
            raise AssertionError("state_index without states")
        return self._states, self._state_index

    def unique_log_states(self) -> np.ndarray:
        """Exact log coordinates of unique_states()[0] (no exp/log round trip)."""
        self.unique_states()
        if self._log_states is None:
            self._log_states = np.log(self._states)
        return self._log_states

    def pair_encoding(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distinct consecutive-state pairs and the per-step pair id.

        Returns (pair_p_index, pair_q_index, step_pair_id) where the first two
        index into unique_states()[0].
        """
        if self._pair_encoding is None:
            _, idx = self.unique_states()
            k = int(idx.max()) + 1
            codes = idx[:-1] * k + idx[1:]
            uniq, step_ids = np.unique(codes, return_inverse=True)
            self._pair_encoding = (uniq // k, uniq % k, step_ids)
        return self._pair_encoding


def validate_path(points) -> MarketPath:
    """Build a MarketPath from raw open-simplex points, computing bound_M."""
    return MarketPath.from_points(points)


def counterexample_path(delta: float, horizon: int) -> MarketPath:
    """Adversarial two-stock path where stock 2 beats stock 1 by 1 + delta each step.

    Starts at (1/2, 1/2); each step divides through by 1 + delta * mu_2 so the
    second-stock ratio exceeds the first by exactly the factor 1 + delta. The
    recursion runs on a = log mu_1 with mu_2 = 1 - e^a, which keeps the ratio
    identity and the coordinate sum exact even when mu_1 underflows linear
    floats. Satisfies the bounded-return assumption with M <= 1 + delta.
    """
    if not (delta > 0) or not math.isfinite(delta):
        raise ValueError(f"delta must be > 0, got {delta}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    logs = np.empty((horizon + 1, 2))
    a = math.log(0.5)
    logs[0] = (a, math.log(0.5))
    for t in range(horizon):
        mu2 = -math.expm1(a)
        a -= math.log1p(delta * mu2)
        logs[t + 1] = (a, math.log1p(-math.exp(a)))
    path = MarketPath(logs)
    assert path.bound_M <= (1.0 + delta) * (1 + 1e-12)
    return path


def markov_grid_path(states, transition, *, seed: int, horizon: int, start: int = 0) -> MarketPath:
    """Simulate a time-homogeneous Markov chain on a finite grid of weights.

    The chain starts at `start` and makes `horizon` transitions. Sampling uses
    numpy's PCG64 generator seeded with `seed`, one uniform draw per step
    inverted through the transition row's cumulative distribution, so paths
    are bit-reproducible across platforms.
    """
    grid = np.array(states, dtype=float)
    if grid.ndim != 2 or grid.shape[0] < 1:
        raise SimplexError(f"grid must be (k, n), got {grid.shape}")
    sums = grid.sum(axis=1)
    if np.abs(sums - 1.0).max() > SUM_TOL_INPUT:
        raise SimplexError(f"grid row sums off by {np.abs(sums - 1.0).max()}")
    # renormalize only rows that would fail the strict check, so grids that
    # are already exact keep their bits (table lookups match elsewhere)
    loose = np.abs(sums - 1.0) > SUM_TOL_STRICT
    grid[loose] /= sums[loose, None]
    for row in grid:
        SimplexPoint(row, open_=True)
    k = grid.shape[0]
    trans = np.asarray(transition, dtype=float)
    if trans.shape != (k, k):
        raise ValueError(f"transition must be ({k}, {k}), got {trans.shape}")
    if trans.min() < 0:
        raise ValueError("transition has negative entries")
    row_sums = trans.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > SUM_TOL_INPUT:
        raise ValueError(f"transition row sums off by {np.abs(row_sums - 1.0).max()}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not (0 <= start < k):
        raise ValueError(f"start index {start} out of range")
    cum = np.cumsum(trans / row_sums[:, None], axis=1)
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.random(horizon)
    index = np.empty(horizon + 1, dtype=np.intp)
    index[0] = start
    for t in range(horizon):
        index[t + 1] = min(int(np.searchsorted(cum[index[t]], draws[t], side="right")), k - 1)
    log_grid = np.log(grid)
    return MarketPath(log_grid[index], state_index=index, states=grid)


class PairMeasure:
    """A discrete probability measure on consecutive weight pairs.

    Atoms carry both linear and log coordinates; duplicates coming from
    paths are merged with summed weights, which leaves integrals unchanged.
    """

    def __init__(self, p_coords, q_coords, weights, *, log_p=None, log_q=None):
        p = np.array(p_coords, dtype=float)
        q = np.array(q_coords, dtype=float)
        w = np.array(weights, dtype=float)
        if p.ndim != 2 or p.shape != q.shape or w.shape != (p.shape[0],):
            raise ValueError(f"inconsistent atom shapes {p.shape}, {q.shape}, {w.shape}")
        if p.shape[0] == 0:
            raise ValueError("pair measure needs at least one atom")
        if w.min() < 0:
            raise ValueError(f"negative weight {w.min()}")
        if abs(w.sum() - 1.0) > SUM_TOL_STRICT:
            raise ValueError(f"weights sum to {w.sum()!r}")
        if p.min() <= 0 or q.min() <= 0:
            raise SimplexError("pair atoms must have positive coordinates")
        self.p_coords = p
        self.q_coords = q
        self.weights = w
        self.log_p = np.log(p) if log_p is None else np.asarray(log_p, dtype=float)
        self.log_q = np.log(q) if log_q is None else np.asarray(log_q, dtype=float)
        for arr in (self.p_coords, self.q_coords, self.weights, self.log_p, self.log_q):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.p_coords.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def log_ratios(self) -> np.ndarray:
        return self.log_q - self.log_p

    @property
    def ratios(self) -> np.ndarray:
        return np.exp(self.log_q - self.log_p)

    def ratio_bound(self) -> float:
        """Smallest M with all atom ratios in [1/M, M]."""
        return float(np.exp(np.abs(self.log_q - self.log_p).max()))

    @property
    def atoms(self) -> list[tuple[SimplexPoint, SimplexPoint, float]]:
        return [(SimplexPoint(p), SimplexPoint(q), float(w))
                for p, q, w in zip(self.p_coords, self.q_coords, self.weights)]


def empirical_pair_measure(path: MarketPath, t: int) -> PairMeasure:
    """Empirical measure of (mu(s), mu(s+1)) over s = 0..t-1, weight 1/t each.

    Duplicate pairs are merged with summed weights.
    """
    if not (1 <= t <= path.horizon):
        raise ValueError(f"t must be in [1, {path.horizon}], got {t}")
    pair_p, pair_q, step_ids = path.pair_encoding()
    counts = np.bincount(step_ids[:t], minlength=pair_p.size)
    keep = counts > 0
    states, _ = path.unique_states()
    log_states = path.unique_log_states()
    pi, qi = pair_p[keep], pair_q[keep]
    return PairMeasure(states[pi], states[qi], counts[keep] / t,
                       log_p=log_states[pi], log_q=log_states[qi])


def write_path_csv(path: MarketPath, file) -> None:
    """CSV schema: t,mu_1,...,mu_n at full double precision."""
    header = ["t"] + [f"mu_{i + 1}" for i in range(path.n)]
    write_csv(file, header, ((t, *row) for t, row in enumerate(path.coords)))


def write_pair_measure_csv(pm: PairMeasure, file) -> None:
    """CSV schema: p_1..p_n,q_1..q_n,weight."""
    header = [f"p_{i + 1}" for i in range(pm.n)] + [f"q_{i + 1}" for i in range(pm.n)] + ["weight"]
    rows = ((*p, *q, w) for p, q, w in zip(pm.p_coords, pm.q_coords, pm.weights))
    write_csv(file, header, rows)
