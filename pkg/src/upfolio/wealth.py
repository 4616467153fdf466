"""Wealth distributions over portfolio families and the mixture portfolio.

Distributing initial wealth over a family of portfolio maps and letting each
member run defines a measure-valued process: the posterior weight of a member
is proportional to its initial weight times its realized relative value. The
posterior mean of the members' current weight vectors is the mixture
portfolio; trading it sequentially reproduces the buy-and-hold mixture value
exactly, and `cover_value_identity_check` measures how far floating point
strays from that identity.

All posterior arithmetic runs on log weights with log-sum-exp reductions:
wealth concentrates exponentially and linear weights underflow long before
interesting horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import PortfolioError
from .fgp import dense_generator_family, portfolio_from_generator
from .market import MarketPath, SimplexPoint, counterexample_path
from .portfolios import ConstantMap, ValueSeries, checked_weights, project_weights
from .quasirandom import halton_simplex
from .tables import write_csv


@dataclass(frozen=True)
class Prior:
    """Initial distribution over a finite family of portfolio maps."""

    maps: tuple
    lambdas: np.ndarray

    def __post_init__(self):
        if len(self.maps) == 0:
            raise PortfolioError("prior needs at least one atom")
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.shape != (len(self.maps),) or lam.min() < 0:
            raise PortfolioError("prior weights must be nonnegative and align with maps")
        if abs(lam.sum() - 1.0) > 1e-9:
            raise PortfolioError(f"prior weights sum to {lam.sum()!r}")
        lam = lam / lam.sum()
        lam.flags.writeable = False
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "lambdas", lam)

    @property
    def size(self) -> int:
        return len(self.maps)

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.maps]


def uniform_prior(maps) -> Prior:
    maps = list(maps)
    return Prior(tuple(maps), np.full(len(maps), 1.0 / len(maps)))


def constant_cloud_prior(count: int, n: int) -> Prior:
    """Equal-weight cloud of constant-weighted maps on low-discrepancy points.

    A deterministic stand-in for a continuous uniform prior on the simplex.
    """
    pts = halton_simplex(count, n, start=1)
    maps = [ConstantMap(row, name=f"crp{k:04d}") for k, row in enumerate(pts)]
    return uniform_prior(maps)


def dense_fgp_prior(count: int, n: int) -> Prior:
    """Prior on the countable dense generator schedule with weights prop. to 2^-k."""
    pairs = dense_generator_family(count, n)
    maps = tuple(portfolio_from_generator(gen) for gen, _ in pairs)
    lams = np.array([lam for _, lam in pairs])
    return Prior(maps, lams)


@dataclass(frozen=True)
class WealthDistribution:
    """Snapshot of the family's wealth distribution at one horizon."""

    prior: Prior
    t: int
    log_values: np.ndarray
    posterior: np.ndarray
    log_mixture_value: float

    def posterior_weight(self, i: int) -> float:
        return float(self.posterior[i])


class WealthEvolution:
    """Per-atom value paths plus everything derived from them.

    Materializing one WealthDistribution per step is wasteful at long
    horizons; this object holds the (atoms, horizon + 1) log-value matrix and
    builds snapshots, posterior paths, mixture values, and the sequentially
    traded mixture on demand.
    """

    def __init__(self, prior: Prior, path: MarketPath, horizon: int):
        if not (1 <= horizon <= path.horizon):
            raise ValueError(f"horizon must be in [1, {path.horizon}]")
        self.prior = prior
        self.path = path
        self.horizon = horizon
        states, index = path.unique_states()
        self._states = states
        self._index = index[: horizon + 1]
        # per-atom weights at each distinct state, then per-step log returns
        self._weight_table = np.stack([checked_weights(m, states) for m in prior.maps])
        ratios = path.step_ratios[:horizon]
        returns = np.empty((prior.size, horizon))
        for s in range(states.shape[0]):
            mask = self._index[:-1] == s
            if mask.any():
                returns[:, mask] = self._weight_table[:, s, :] @ ratios[mask].T
        if returns.min() <= 0:
            raise PortfolioError("nonpositive per-step return in the family")
        self.log_values = np.hstack([np.zeros((prior.size, 1)),
                                     np.cumsum(np.log(returns), axis=1)])
        self._log_prior = np.log(prior.lambdas)
        self.log_mixture = logsumexp(self.log_values + self._log_prior[:, None], axis=0)
        self._posteriors = None
        self._cover = None

    # -- posterior ---------------------------------------------------------
    def posterior_matrix(self) -> np.ndarray:
        """Posterior weights, one column per horizon 0..T."""
        if self._posteriors is None:
            logw = self._log_prior[:, None] + self.log_values - self.log_mixture[None, :]
            self._posteriors = np.exp(logw)
        return self._posteriors

    def wealth_distribution(self, t: int) -> WealthDistribution:
        if not (0 <= t <= self.horizon):
            raise ValueError(f"t must be in [0, {self.horizon}]")
        return WealthDistribution(prior=self.prior, t=t,
                                  log_values=self.log_values[:, t].copy(),
                                  posterior=self.posterior_matrix()[:, t].copy(),
                                  log_mixture_value=float(self.log_mixture[t]))

    def distributions(self) -> list[WealthDistribution]:
        return [self.wealth_distribution(t) for t in range(self.horizon + 1)]

    # -- mixture and best --------------------------------------------------
    def mixture_value_series(self) -> ValueSeries:
        return ValueSeries(self.log_mixture.copy())

    def best_log_values(self) -> np.ndarray:
        """log V*(t): the best family member in hindsight at each horizon."""
        return self.log_values.max(axis=0)

    # -- sequentially traded mixture ----------------------------------------
    def cover_weight_series(self) -> np.ndarray:
        """Posterior-mean weight vector actually traded at each step t = 0..T-1."""
        if self._cover is None:
            nu = self.posterior_matrix()[:, :-1]
            out = np.empty((self.horizon, self._states.shape[1]))
            for s in range(self._states.shape[0]):
                mask = self._index[:-1] == s
                if mask.any():
                    out[mask] = nu[:, mask].T @ self._weight_table[:, s, :]
            self._cover = project_weights(out, "cover portfolio")
        return self._cover

    def sequential_cover_log_values(self) -> np.ndarray:
        """Relative value of trading the posterior-mean portfolio step by step."""
        pi_hat = self.cover_weight_series()
        returns = np.einsum("ti,ti->t", pi_hat, self.path.step_ratios[: self.horizon])
        return np.hstack([0.0, np.cumsum(np.log(returns))])


def evolve(prior: Prior, path: MarketPath, horizon: int) -> WealthEvolution:
    """Run the family along the path, accumulating per-atom log values."""
    return WealthEvolution(prior, path, horizon)


def cover_portfolio(wd: WealthDistribution, current) -> np.ndarray:
    """Posterior mean of member weights at the current market weight."""
    p = current.coords if isinstance(current, SimplexPoint) else np.asarray(current, dtype=float)
    w = np.stack([checked_weights(m, p[None, :])[0] for m in wd.prior.maps])
    return project_weights(wd.posterior @ w, "cover portfolio")


def cover_value_identity_check(prior: Prior, path: MarketPath, horizon: int) -> float:
    """max_t |log mixture value - log sequentially traded value| over 0..T.

    The two are identical in exact arithmetic; the return value is pure
    floating-point drift and the contract is < 1e-10 at desk scales.
    """
    evo = evolve(prior, path, horizon)
    return float(np.abs(evo.log_mixture - evo.sequential_cover_log_values()).max())


# -- the adversarial product-uniform family --------------------------------

@dataclass(frozen=True)
class CounterexampleCover:
    """Mixture value of the product-uniform family on the adversarial path.

    The prior is uniform over all maps on the visited states, independently
    per state. The path never revisits a state, so the traded posterior mean
    is the fresh uniform mean (1/2, 1/2) every step and the mixture value has
    the closed form (mu_2(t)/mu_2(0)) * (1 - delta/(2(1+delta)))^t. The
    sequential simulation must agree with the closed form to 1e-12 relative
    per step; `per_step_gap` records the worst observed disagreement.
    """

    delta: float
    path: MarketPath
    mixture: ValueSeries
    sim_log_values: np.ndarray
    best_log_values: np.ndarray
    per_step_gap: float
    limit_rate: float


def counterexample_cover_value(delta: float, horizon: int) -> CounterexampleCover:
    path = counterexample_path(delta, horizon)
    log_r2 = path.log_steps[:, 1]
    log_keep = math.log1p(-0.5 * delta / (1.0 + delta))
    closed_steps = log_r2 + log_keep
    # sequential simulation: trade (1/2, 1/2) at every (never revisited) state
    step_returns = 0.5 * path.step_ratios.sum(axis=1)
    sim_steps = np.log(step_returns)
    rel = np.abs(np.expm1(sim_steps - closed_steps))
    gap = float(rel.max())
    if gap > 1e-12:
        raise AssertionError(f"sequential simulation off closed form by {gap}")
    mixture = ValueSeries(np.hstack([0.0, np.cumsum(closed_steps)]))
    best = path.log_coords[:, 1] - path.log_coords[0, 1]
    return CounterexampleCover(delta=delta, path=path, mixture=mixture,
                               sim_log_values=np.hstack([0.0, np.cumsum(sim_steps)]),
                               best_log_values=best, per_step_gap=gap,
                               limit_rate=log_keep)


def counterexample_cylinder_log_masses(delta: float, t: int, cylinders) -> np.ndarray:
    """log nu_t(C) for cylinder sets over visited coordinates, analytically.

    A cylinder constrains the weight of stock 2 at finitely many visited
    states s < t to intervals [a, b]. Under the product-uniform prior the
    coordinates are independent, so unconstrained coordinates cancel and each
    constrained one contributes the ratio of truncated to full moments of
    f(x) = 1 - (1 - x) * delta/(1 + delta) under x ~ U[0, 1].
    """
    if not (delta > 0):
        raise ValueError("delta must be > 0")
    c = delta / (1.0 + delta)
    full = 1.0 - c / 2.0
    out = np.empty(len(cylinders))
    for j, constraints in enumerate(cylinders):
        seen = set()
        log_mass = 0.0
        for s, a, b in constraints:
            if not (0 <= s < t):
                raise ValueError(f"constrained coordinate {s} not visited before t={t}")
            if s in seen:
                raise ValueError(f"coordinate {s} constrained twice")
            seen.add(s)
            if not (0.0 <= a < b <= 1.0):
                raise ValueError(f"invalid interval [{a}, {b}]")
            part = (1.0 - c) * (b - a) + 0.5 * c * (b * b - a * a)
            log_mass += math.log(part / full)
        out[j] = log_mass
    return out


# -- delimited artifacts ----------------------------------------------------

def write_evolution_trace_csv(evo: WealthEvolution, file, horizons=None) -> None:
    """CSV schema: t,V_hat,V_star,log_ratio,pi_hat_1..pi_hat_n.

    log_ratio is log(V_hat / V_star); the linear value columns may round to
    0 or inf on long horizons, the log column never does.
    """
    ts = range(evo.horizon + 1) if horizons is None else sorted(set(int(t) for t in horizons))
    pi_hat = evo.cover_weight_series()
    best = evo.best_log_values()
    n = evo.path.n
    header = ["t", "V_hat", "V_star", "log_ratio"] + [f"pi_hat_{i + 1}" for i in range(n)]

    def rows():
        for t in ts:
            if not (0 <= t <= evo.horizon):
                raise ValueError(f"horizon {t} outside [0, {evo.horizon}]")
            weights = pi_hat[t] if t < evo.horizon else np.full(n, math.nan)
            yield (t, math.exp(evo.log_mixture[t]) if evo.log_mixture[t] < 709 else math.inf,
                   math.exp(best[t]) if best[t] < 709 else math.inf,
                   evo.log_mixture[t] - best[t], *weights)

    write_csv(file, header, rows())


def write_posterior_snapshot_csv(wd: WealthDistribution, file) -> None:
    """CSV schema: label,lambda0,nu_t,logV_t."""
    rows = zip(wd.prior.labels, wd.prior.lambdas, wd.posterior, wd.log_values)
    write_csv(file, ["label", "lambda0", "nu_t", "logV_t"], rows)
