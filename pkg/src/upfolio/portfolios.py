"""Portfolio maps and the relative-value engine.

A portfolio map assigns a closed-simplex weight vector to each market-weight
vector. Relative values (wealth divided by the market portfolio's wealth) are
accumulated in log space: horizons up to 1e6 with per-step returns near the
ratio bound overflow linear doubles, their logs do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import PortfolioError, SimplexError
from .market import MarketPath, PairMeasure, SimplexPoint
from .tables import write_csv

# Weight vectors off the closed simplex by more than this are logic errors;
# anything smaller is float noise and gets reprojected.
PROJECTION_TOL = 1e-9


class PortfolioMap:
    """Deterministic map from market weights to closed-simplex weights.

    Subclasses implement `weights_many` on an (m, n) array of points; the
    same input must always produce bit-identical output.
    """

    label: str = "portfolio"

    def weights_many(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def weights(self, point) -> np.ndarray:
        p = point.coords if isinstance(point, SimplexPoint) else np.asarray(point, dtype=float)
        return self.weights_many(p[None, :])[0]

    def __repr__(self):
        return f"<{type(self).__name__} {self.label!r}>"


def project_weights(raw: np.ndarray, label: str = "portfolio") -> np.ndarray:
    """Snap near-simplex weight rows onto the closed simplex.

    Violations within PROJECTION_TOL (small negatives, sums slightly off 1)
    are float noise: clip and renormalize. Larger violations raise, so logic
    bugs do not get silently projected away.
    """
    w = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(w)):
        raise PortfolioError(f"{label}: non-finite weights")
    low = w.min()
    if low < -PROJECTION_TOL:
        raise PortfolioError(f"{label}: weight {low} below -{PROJECTION_TOL}")
    sums = w.sum(axis=-1)
    if np.abs(sums - 1.0).max() > PROJECTION_TOL:
        raise PortfolioError(f"{label}: weight sum off by {np.abs(sums - 1.0).max()}")
    if low < 0:
        w = np.maximum(w, 0.0)
        sums = w.sum(axis=-1)
    return w / sums[..., None]


class MarketMap(PortfolioMap):
    """The market portfolio: the identity map."""

    label = "market"

    def weights_many(self, points):
        return np.array(points, dtype=float)


@dataclass(frozen=True)
class ConstantMap(PortfolioMap):
    """Constant-weighted (constantly rebalanced) portfolio."""

    target: np.ndarray
    name: str = ""

    def __post_init__(self):
        w = project_weights(np.asarray(self.target, dtype=float), "constant map")
        w.flags.writeable = False
        object.__setattr__(self, "target", w)

    @property
    def label(self) -> str:
        return self.name or "crp(" + ",".join(format(x, ".6g") for x in self.target) + ")"

    def weights_many(self, points):
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(self.target, points.shape).copy()


class TableMap(PortfolioMap):
    """Portfolio map defined on a finite set of states by a lookup table.

    States are matched by exact bitwise equality of coordinate rows; points
    outside the table fall back to `default` (uniform unless given), the
    usual constant extension of a finite-state map.
    """

    def __init__(self, states, table, *, default=None, label: str = "table"):
        states = np.asarray(states, dtype=float)
        table = np.asarray(table, dtype=float)
        if states.shape != table.shape or states.ndim != 2:
            raise PortfolioError(f"states {states.shape} and table {table.shape} must match")
        self._states = states
        self._table = project_weights(table, label)
        n = states.shape[1]
        self._default = (np.full(n, 1.0 / n) if default is None
                         else project_weights(np.asarray(default, dtype=float), label))
        self._lookup = {row.tobytes(): i for i, row in enumerate(states)}
        self.label = label

    @property
    def states(self) -> np.ndarray:
        return self._states

    @property
    def table(self) -> np.ndarray:
        return self._table

    def weights_many(self, points):
        points = np.asarray(points, dtype=float)
        out = np.empty_like(points)
        for i, row in enumerate(points):
            j = self._lookup.get(row.tobytes())
            out[i] = self._default if j is None else self._table[j]
        return out


class BlendMap(PortfolioMap):
    """Pointwise convex combination of portfolio maps."""

    def __init__(self, maps, lambdas, label: str | None = None):
        lam = np.asarray(lambdas, dtype=float)
        if len(maps) != lam.size or lam.size == 0:
            raise PortfolioError("maps and lambdas must align and be nonempty")
        if lam.min() < 0 or abs(lam.sum() - 1.0) > PROJECTION_TOL:
            raise PortfolioError(f"blend coefficients invalid: {lam}")
        self.maps = list(maps)
        self.lambdas = lam / lam.sum()
        self.label = label or "blend(" + "+".join(m.label for m in maps) + ")"

    def weights_many(self, points):
        acc = self.lambdas[0] * self.maps[0].weights_many(points)
        for lam, m in zip(self.lambdas[1:], self.maps[1:]):
            acc = acc + lam * m.weights_many(points)
        return acc


def market_portfolio() -> MarketMap:
    return MarketMap()


def constant_map(weights, name: str = "") -> ConstantMap:
    return ConstantMap(np.asarray(weights, dtype=float), name)


def vertex_map(i: int, n: int) -> ConstantMap:
    w = np.zeros(n)
    w[i] = 1.0
    return ConstantMap(w, name=f"stock{i + 1}")


@dataclass(frozen=True)
class ValueSeries:
    """Relative-value series V(0..T) with V(0) = 1, held in log space.

    `values` is the exponential of `log_values`; on long horizons it may
    round to 0 or inf while the logs remain exact, which is why the logs are
    the canonical field.
    """

    log_values: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.log_values, dtype=float)
        if lv.ndim != 1 or lv.size < 1 or lv[0] != 0.0 or not np.all(np.isfinite(lv)):
            raise PortfolioError(f"invalid log-value series (len {lv.size})")
        lv = lv.copy()
        lv.flags.writeable = False
        object.__setattr__(self, "log_values", lv)

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def horizon(self) -> int:
        return self.log_values.size - 1

    def final_value(self) -> float:
        return float(np.exp(self.log_values[-1]))


def checked_weights(pi: PortfolioMap, points: np.ndarray) -> np.ndarray:
    return project_weights(pi.weights_many(points), pi.label)


def step_log_returns(pi: PortfolioMap, path: MarketPath) -> np.ndarray:
    """log(pi(mu(t)) . mu(t+1)/mu(t)) for every step t."""
    w = checked_weights(pi, path.coords[:-1])
    returns = np.einsum("ti,ti->t", w, path.step_ratios)
    if returns.min() <= 0:
        t = int(np.argmin(returns))
        raise PortfolioError(f"{pi.label}: nonpositive return {returns[t]} at step {t}")
    return np.log(returns)


def relative_value(pi: PortfolioMap, path: MarketPath) -> ValueSeries:
    """Wealth of pi relative to the market along the path, V(0) = 1."""
    steps = step_log_returns(pi, path)
    log_values = np.concatenate([[0.0], np.cumsum(steps)])
    return ValueSeries(log_values)


def log_return_kernel(pi: PortfolioMap, p, q) -> float:
    """One-step log relative return of pi on the pair (p, q)."""
    p = p.coords if isinstance(p, SimplexPoint) else np.asarray(p, dtype=float)
    q = q.coords if isinstance(q, SimplexPoint) else np.asarray(q, dtype=float)
    if p.min() <= 0 or q.min() <= 0:
        raise SimplexError("pair must have positive coordinates")
    w = checked_weights(pi, p[None, :])[0]
    value = float(w @ (q / p))
    if value <= 0:
        raise PortfolioError(f"{pi.label}: nonpositive return argument {value}")
    return float(np.log(value))


def kernel_on_measure(pi: PortfolioMap, pm: PairMeasure) -> np.ndarray:
    """Log-return kernel of pi at every atom of a pair measure."""
    w = checked_weights(pi, pm.p_coords)
    returns = np.einsum("ai,ai->a", w, pm.ratios)
    if returns.min() <= 0:
        raise PortfolioError(f"{pi.label}: nonpositive return on a pair atom")
    return np.log(returns)


def growth_rate_via_empirical(pi: PortfolioMap, pm: PairMeasure) -> float:
    """Integral of the log-return kernel against a pair measure.

    Against the empirical measure of a path at time t this equals
    (1/t) log V_pi(t) exactly.
    """
    return float(pm.weights @ kernel_on_measure(pi, pm))


def best_in_hindsight(family, path: MarketPath, t: int) -> tuple[int, float]:
    """(index, V*) of the best family member at horizon t; ties -> lowest index."""
    if len(family) == 0:
        raise PortfolioError("empty family")
    if not (0 <= t <= path.horizon):
        raise ValueError(f"t must be in [0, {path.horizon}]")
    logs = np.array([relative_value(pi, path).log_values[t] for pi in family])
    idx = int(np.argmax(logs))
    return idx, float(np.exp(logs[idx]))


def write_value_series_csv(series: ValueSeries, file) -> None:
    """CSV schema: t,V,logV."""
    rows = ((t, np.exp(lv), lv) for t, lv in enumerate(series.log_values))
    write_csv(file, ["t", "V", "logV"], rows)


def write_family_report_csv(family, path: MarketPath, t: int, file) -> None:
    """CSV schema: label,t,logV,growth_rate (growth_rate = logV / t)."""
    rows = []
    for pi in family:
        lv = float(relative_value(pi, path).log_values[t])
        rows.append((pi.label, t, lv, lv / t if t > 0 else 0.0))
    write_csv(file, ["label", "t", "logV", "growth_rate"], rows)
