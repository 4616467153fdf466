"""Asymptotic growth rates, the log-optimal solver, and concentration diagnostics.

On a finite state space with a limiting pair law, every portfolio map has an
exact asymptotic growth rate (a finite sum of log-return kernels), the best
map solves a concave per-state problem on the simplex, and the wealth mass
away from the optimum decays exponentially with rate W* - W. This module
computes all three and the finite-horizon diagnostics that check them against
simulated paths.

The per-state solver is exponentiated-gradient ascent. For the objective
F(x) = sum_q c_q log(x . r_q) the identity x . grad F(x) = 1 holds at every
feasible x, so max_i g_i - 1 is both the first-order optimality residual and,
by concavity, an upper bound on F* - F(x); iteration stops when it drops
below the tolerance. An independent brute-force grid oracle is provided for
cross-checking: exact enumeration where the grid is small, and an
exact-by-concavity segment search (max over each grid line of a concave
sequence) where full enumeration is too large to touch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import SimplexError, SolverError
from .market import SUM_TOL_INPUT, MarketPath, PairMeasure, SimplexPoint
from .portfolios import PortfolioMap, TableMap, checked_weights
from .tables import write_csv
from .wealth import Prior, evolve


class FiniteStateModel:
    """Finite state set with a joint law on consecutive state pairs.

    Stores the joint as a (k, k) matrix together with its first marginal and
    the conditional successor law, kept consistent by construction.
    """

    def __init__(self, states, joint):
        states = np.array(states, dtype=float)  # own the storage
        if states.ndim != 2 or states.shape[0] < 1:
            raise SimplexError(f"states must be (k, n), got {states.shape}")
        for row in states:
            SimplexPoint(row, open_=True)
        joint = np.array(joint, dtype=float)
        k = states.shape[0]
        if joint.shape != (k, k) or joint.min() < 0:
            raise ValueError(f"joint must be a nonnegative ({k}, {k}) matrix")
        total = joint.sum()
        if abs(total - 1.0) > SUM_TOL_INPUT:
            raise ValueError(f"joint sums to {total!r}")
        self.states = states
        self.joint = joint / total
        self.marginal = self.joint.sum(axis=1)
        self.conditional = np.zeros_like(joint)
        live = self.marginal > 0
        self.conditional[live] = self.joint[live] / self.marginal[live, None]
        # componentwise successor ratios r[p, q, i] = states[q, i] / states[p, i]
        self.ratios = states[None, :, :] / states[:, None, :]
        for arr in (self.states, self.joint, self.marginal, self.conditional, self.ratios):
            arr.flags.writeable = False

    @classmethod
    def from_chain(cls, states, transition) -> "FiniteStateModel":
        """Stationary pair law pi(p) * T(p, q) of an ergodic chain."""
        trans = np.asarray(transition, dtype=float)
        k = trans.shape[0]
        if trans.shape != (k, k) or trans.min() < 0:
            raise ValueError("transition must be a nonnegative square matrix")
        rows = trans.sum(axis=1)
        if np.abs(rows - 1.0).max() > SUM_TOL_INPUT:
            raise ValueError("transition rows must sum to 1")
        trans = trans / rows[:, None]
        a = trans.T - np.eye(k)
        a[-1, :] = 1.0
        b = np.zeros(k)
        b[-1] = 1.0
        stat = np.linalg.solve(a, b)
        if stat.min() < -1e-10:
            raise ValueError("chain has no valid stationary distribution (reducible?)")
        stat = np.maximum(stat, 0.0)
        stat /= stat.sum()
        return cls(states, stat[:, None] * trans)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def pair_measure(self) -> PairMeasure:
        p_idx, q_idx = np.nonzero(self.joint)
        return PairMeasure(self.states[p_idx], self.states[q_idx], self.joint[p_idx, q_idx])


def growth_rate(pi: PortfolioMap, model: FiniteStateModel) -> float:
    """Exact asymptotic growth rate: the joint-law average of the log-return kernel."""
    w = checked_weights(pi, model.states)
    total = 0.0
    for p, q in zip(*np.nonzero(model.joint)):
        total += model.joint[p, q] * np.log(w[p] @ model.ratios[p, q])
    return float(total)


# -- per-state concave maximization -----------------------------------------

def expected_log_return(x: np.ndarray, ratios: np.ndarray, probs: np.ndarray) -> float:
    return float(probs @ np.log(ratios @ x))


def log_optimal_weights(ratios, probs, *, tol: float = 1e-10, max_iter: int = 100_000,
                        step: float = 0.5) -> tuple[np.ndarray, dict]:
    """Maximize sum_q probs_q * log(x . ratios_q) over the closed simplex.

    Multiplicative-weights ascent with a monotone safeguard: the step shrinks
    when a move would lower the objective and creeps back up otherwise.
    Terminates when the optimality residual max_i g_i - x . g (an upper bound
    on the objective gap, by concavity) falls below `tol`.
    """
    ratios = np.asarray(ratios, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if ratios.ndim != 2 or probs.shape != (ratios.shape[0],):
        raise ValueError(f"bad shapes: ratios {ratios.shape}, probs {probs.shape}")
    if ratios.min() <= 0 or probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("ratios must be positive and probs a distribution")
    probs = probs / probs.sum()
    n = ratios.shape[1]
    x = np.full(n, 1.0 / n)
    value = expected_log_return(x, ratios, probs)
    eta = step
    gap = np.inf
    for iteration in range(max_iter):
        u = ratios @ x
        g = (probs / u) @ ratios
        gap = float(g.max() - x @ g)
        if gap < tol:
            return x, {"objective": value, "residual": gap, "iterations": iteration}
        cand = x * np.exp(eta * (g - 1.0))
        cand /= cand.sum()
        cand_value = expected_log_return(cand, ratios, probs)
        # tolerance absorbs float noise on the objective plateau near the optimum
        if cand_value >= value - 1e-13 * max(1.0, abs(value)):
            x, value = cand, cand_value
            eta = min(eta * 1.1, 8.0)
        else:
            eta = max(eta * 0.5, 1e-3)
    raise SolverError(f"no convergence after {max_iter} iterations "
                      f"(residual {gap:.3e}, tol {tol:.1e}, step {eta:.3e})")


# -- brute-force grid oracle -------------------------------------------------

def _grid_objective(points_int: np.ndarray, steps: int, ratios, probs) -> np.ndarray:
    x = points_int / steps
    return np.log(x @ ratios.T) @ probs


def _grid_max_full(ratios, probs, steps: int) -> tuple[float, np.ndarray]:
    n = ratios.shape[1]

    def expand(prefix_rows):
        # append one coordinate to every row, in all feasible amounts
        out = []
        for row in prefix_rows:
            rest = steps - row.sum()
            block = np.tile(row, (rest + 1, 1))
            out.append(np.hstack([block, np.arange(rest + 1)[:, None]]))
        return np.vstack(out)

    rows = np.zeros((1, 0), dtype=int)
    for _ in range(n - 1):
        rows = expand(rows)
    rows = np.hstack([rows, (steps - rows.sum(axis=1))[:, None]])
    values = _grid_objective(rows, steps, ratios, probs)
    best = int(np.argmax(values))
    return float(values[best]), rows[best] / steps


def _grid_max_concave(ratios, probs, steps: int) -> tuple[float, np.ndarray]:
    """Exact grid max using concavity along each grid line.

    Grid points are grouped by their first n-2 coordinates; on each group the
    objective is a concave sequence in the next coordinate, so a ternary
    search over the integer segment finds its maximum exactly. All segments
    are searched in lockstep. Along a segment the inner products are affine
    in the search coordinate, so they are precomputed once per segment and
    only the logs remain in the loop.
    """
    n = ratios.shape[1]
    prefixes = np.zeros((1, 0), dtype=int)
    for _ in range(n - 2):
        out = []
        for row in prefixes:
            rest = steps - row.sum()
            block = np.tile(row, (rest + 1, 1))
            out.append(np.hstack([block, np.arange(rest + 1)[:, None]]))
        prefixes = np.vstack(out)
    rest = steps - prefixes.sum(axis=1)
    # x . r_q = (base_q + z * slope_q) / steps along segment z = 0..rest
    base = prefixes @ ratios[:, : n - 2].T + rest[:, None] * ratios[None, :, -1]
    slope = ratios[:, n - 2] - ratios[:, n - 1]
    log_steps = np.log(steps)

    def evaluate(b, z):
        return np.log(b + z[:, None] * slope[None, :]) @ probs - log_steps

    # segments converge after O(log rest) steps; compress to the survivors
    ids = np.arange(rest.size)
    lo = np.zeros(rest.size, dtype=int)
    hi = rest.copy()
    act_base = base
    best_val, best_id, best_z = -np.inf, 0, 0
    while ids.size:
        width = hi - lo
        done = width <= 3
        if done.any():
            d_lo, d_hi, d_base, d_ids = lo[done], hi[done], act_base[done], ids[done]
            for off in range(4):
                z = np.minimum(d_lo + off, d_hi)
                vals = evaluate(d_base, z)
                j = int(np.argmax(vals))
                if vals[j] > best_val:
                    best_val, best_id, best_z = float(vals[j]), int(d_ids[j]), int(z[j])
            keep = ~done
            ids, lo, hi, act_base = ids[keep], lo[keep], hi[keep], act_base[keep]
            if not ids.size:
                break
            width = hi - lo
        third = width // 3
        m1 = lo + third
        m2 = hi - third
        f1 = evaluate(act_base, m1)
        f2 = evaluate(act_base, m2)
        lo = np.where(f1 < f2, m1 + 1, np.where(f1 == f2, m1, lo))
        hi = np.where(f1 > f2, m2 - 1, np.where(f1 == f2, m2, hi))
    point = np.hstack([prefixes[best_id], best_z, rest[best_id] - best_z])
    # report the objective computed the same way as the full method
    value = float(_grid_objective(point[None, :], steps, ratios, probs)[0])
    return value, point / steps


def grid_log_return_max(ratios, probs, *, resolution: float = 1e-3,
                        method: str = "auto") -> tuple[float, np.ndarray]:
    """Maximum of the expected log return over the uniform simplex grid.

    `method`: "full" enumerates every grid point; "concave" uses the exact
    segment search; "auto" enumerates when the grid has at most ~2e6 points.
    Both methods return the exact grid maximum.
    """
    ratios = np.asarray(ratios, dtype=float)
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    steps = round(1.0 / resolution)
    n = ratios.shape[1]
    if method == "auto":
        from math import comb
        method = "full" if n == 2 or comb(steps + n - 1, n - 1) <= 2_000_000 else "concave"
    if method == "full":
        return _grid_max_full(ratios, probs, steps)
    if method == "concave":
        if n < 3:
            return _grid_max_full(ratios, probs, steps)
        return _grid_max_concave(ratios, probs, steps)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class LogOptimalResult:
    """Per-state solutions of the log-optimal problem on a finite-state model."""

    portfolio: TableMap
    objectives: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    grid_objectives: np.ndarray | None = None
    grid_points: list = field(default_factory=list)


def log_optimal(model: FiniteStateModel, *, tol: float = 1e-10, max_iter: int = 100_000,
                cross_check: bool = False, resolution: float = 1e-3) -> LogOptimalResult:
    """Solve the per-state expected-log-return problem for every charged state.

    States with zero marginal mass (never the current state under the pair
    law) get uniform weights. The step size is 0.5 scaled down by the state
    count. With cross_check=True the grid oracle's maximum and argmax are
    recorded per state for comparison.
    """
    k = model.size
    table = np.full((k, model.n), 1.0 / model.n)
    objectives = np.zeros(k)
    residuals = np.zeros(k)
    iterations = np.zeros(k, dtype=int)
    grid_objectives = np.zeros(k) if cross_check else None
    grid_points: list = []
    step = 0.5 / k
    for p in range(k):
        if model.marginal[p] <= 0:
            grid_points.append(None)
            continue
        support = np.nonzero(model.conditional[p])[0]
        ratios = model.ratios[p, support]
        probs = model.conditional[p, support]
        x, info = log_optimal_weights(ratios, probs, tol=tol, max_iter=max_iter, step=step)
        table[p] = x
        objectives[p] = info["objective"]
        residuals[p] = info["residual"]
        iterations[p] = info["iterations"]
        if cross_check:
            value, point = grid_log_return_max(ratios, probs, resolution=resolution)
            grid_objectives[p] = value
            grid_points.append(point)
        else:
            grid_points.append(None)
    portfolio = TableMap(model.states, table, label="log_optimal")
    return LogOptimalResult(portfolio=portfolio, objectives=objectives, residuals=residuals,
                            iterations=iterations, grid_objectives=grid_objectives,
                            grid_points=grid_points)


def alternating_gap_model(gap: float) -> FiniteStateModel:
    """Two-state alternating model where the balanced map beats the market by `gap`.

    On the deterministic cycle A <-> B with A the barycenter, the market
    portfolio grows at rate 0 while the balanced constant map grows at
    (1/2) log((2 + rho + 1/rho) / 4) with rho = b / (1 - b). Solving for rho
    pins the growth gap exactly, giving a scenario whose rate function is
    known in closed form.
    """
    if not (gap > 0):
        raise ValueError(f"gap must be positive, got {gap}")
    c = 4.0 * np.exp(2.0 * gap) - 2.0
    rho = (c + np.sqrt(c * c - 4.0)) / 2.0
    b = rho / (1.0 + rho)
    states = np.array([[0.5, 0.5], [b, 1.0 - b]])
    joint = np.array([[0.0, 0.5], [0.5, 0.0]])
    return FiniteStateModel(states, joint)


# -- growth and rate tables ---------------------------------------------------

@dataclass(frozen=True)
class GrowthProfile:
    """Per-member growth rates W and rate-function values I = W* - W."""

    labels: tuple
    growth: np.ndarray
    rate: np.ndarray

    @property
    def best(self) -> float:
        return float(self.growth.max())

    def rows(self):
        return list(zip(self.labels, self.growth, self.rate))


def rate_profile(family, model: FiniteStateModel) -> GrowthProfile:
    if len(family) == 0:
        raise ValueError("empty family")
    growth = np.array([growth_rate(pi, model) for pi in family])
    best = growth.max()
    return GrowthProfile(labels=tuple(pi.label for pi in family),
                         growth=growth, rate=best - growth)


# -- finite-horizon diagnostics ----------------------------------------------

@dataclass(frozen=True)
class ConcentrationRow:
    t: int
    set_mass: float
    empirical_rate: float
    target_rate: float


def concentration_diagnostic(prior: Prior, path: MarketPath, rate_threshold: float,
                             horizons, model: FiniteStateModel | None = None
                             ) -> list[ConcentrationRow]:
    """Mass and decay rate of the sub-threshold set F = {W_hat <= W* - eps}.

    Member growth estimates W_hat come from the exact model when one is
    given, otherwise from the longest requested horizon. The empirical rate
    -(1/t) log nu_t(F) should approach the smallest rate-function value on F;
    an empty F is reported with zero mass and NaN rates, not an error.
    """
    horizons = sorted(set(int(t) for t in horizons))
    if not horizons or horizons[0] < 1:
        raise ValueError("horizons must be positive")
    evo = evolve(prior, path, horizons[-1])
    if model is not None:
        estimates = np.array([growth_rate(m, model) for m in prior.maps])
    else:
        estimates = evo.log_values[:, horizons[-1]] / horizons[-1]
    best = estimates.max()
    sub = estimates <= best - rate_threshold
    target = float(best - estimates[sub].max()) if sub.any() else np.nan
    log_prior = np.log(prior.lambdas)
    rows = []
    for t in horizons:
        if not sub.any():
            rows.append(ConcentrationRow(t, 0.0, np.nan, np.nan))
            continue
        log_mass = float(logsumexp(log_prior[sub] + evo.log_values[sub, t])
                         - evo.log_mixture[t])
        rows.append(ConcentrationRow(t, float(np.exp(log_mass)), -log_mass / t, target))
    return rows


@dataclass(frozen=True)
class SupErrorRow:
    t: int
    sup_error: float


def glivenko_cantelli_diagnostic(family, path: MarketPath, horizons,
                                 model: FiniteStateModel | None = None) -> list[SupErrorRow]:
    """Worst-member gap between finite-horizon growth and its reference value.

    The reference is the exact model growth rate when a model is given,
    otherwise the estimate at the full path horizon. Finite-horizon estimates
    are computed through the empirical pair measure, which matches the
    path-accumulated value identically.
    """
    if len(family) == 0:
        raise ValueError("empty family")
    horizons = sorted(set(int(t) for t in horizons))
    if not horizons or horizons[0] < 1 or horizons[-1] > path.horizon:
        raise ValueError(f"horizons must lie in [1, {path.horizon}]")
    states, _ = path.unique_states()
    pair_p, pair_q, step_ids = path.pair_encoding()
    ratios = states[pair_q] / states[pair_p]
    kernels = np.empty((len(family), pair_p.size))
    for a, pi in enumerate(family):
        w = checked_weights(pi, states)
        kernels[a] = np.log(np.einsum("ki,ki->k", w[pair_p], ratios))
    if model is not None:
        reference = np.array([growth_rate(pi, model) for pi in family])
    else:
        counts = np.bincount(step_ids[: path.horizon], minlength=pair_p.size)
        reference = kernels @ counts / path.horizon
    rows = []
    for t in horizons:
        counts = np.bincount(step_ids[:t], minlength=pair_p.size)
        estimates = kernels @ counts / t
        rows.append(SupErrorRow(t, float(np.abs(estimates - reference).max())))
    return rows


# -- delimited artifacts ------------------------------------------------------

def write_concentration_csv(rows, file) -> None:
    """CSV schema: t,set_mass,empirical_rate,target_rate."""
    write_csv(file, ["t", "set_mass", "empirical_rate", "target_rate"],
              ((r.t, r.set_mass, r.empirical_rate, r.target_rate) for r in rows))


def write_sup_error_csv(rows, file) -> None:
    """CSV schema: t,sup_error."""
    write_csv(file, ["t", "sup_error"], ((r.t, r.sup_error) for r in rows))


def write_rate_profile_csv(profile: GrowthProfile, file) -> None:
    """CSV schema: label,growth_rate,rate_I."""
    write_csv(file, ["label", "growth_rate", "rate_I"], profile.rows())
