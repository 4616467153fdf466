"""Wealth distributions, the mixture portfolio identity, and the adversarial family."""

import math

import numpy as np
import pytest

from upfolio import (MarketPath, PortfolioError, Prior, constant_cloud_prior,
                     constant_map, counterexample_cover_value,
                     counterexample_cylinder_log_masses, counterexample_path,
                     cover_portfolio, cover_value_identity_check, dense_fgp_prior,
                     evolve, market_portfolio, markov_grid_path, uniform_prior,
                     vertex_map)
from upfolio.wealth import write_evolution_trace_csv, write_posterior_snapshot_csv

GRID = np.array([[0.35, 0.65], [0.5, 0.5], [0.65, 0.35]])
TRANS = np.array([[0.1, 0.6, 0.3], [0.3, 0.4, 0.3], [0.5, 0.2, 0.3]])


def chain(seed=1, horizon=300):
    return markov_grid_path(GRID, TRANS, seed=seed, horizon=horizon)


class TestPrior:
    def test_weights_normalized(self):
        prior = Prior((market_portfolio(), vertex_map(0, 2)), np.array([0.5, 0.5]))
        assert abs(prior.lambdas.sum() - 1) < 1e-15

    def test_rejects_empty(self):
        with pytest.raises(PortfolioError):
            Prior((), np.array([]))

    def test_rejects_bad_weights(self):
        with pytest.raises(PortfolioError):
            Prior((market_portfolio(),), np.array([0.5]))

    def test_cloud_prior_shapes(self):
        prior = constant_cloud_prior(50, 3)
        assert prior.size == 50
        assert abs(prior.lambdas.sum() - 1) < 1e-12

    def test_dense_prior_weights_halve(self):
        prior = dense_fgp_prior(6, 2)
        assert np.allclose(prior.lambdas[:-1] / prior.lambdas[1:], 2.0)


class TestEvolve:
    def test_two_atom_posterior_arithmetic(self):
        # lambdas (1/2, 1/2), values (2, 1) -> posterior (2/3, 1/3)
        path = MarketPath(np.log([[0.25, 0.75], [0.5, 0.5]]))
        doubling = vertex_map(0, 2)   # V(1) = 0.5/0.25 = 2
        flat = market_portfolio()     # V(1) = 1
        evo = evolve(uniform_prior([doubling, flat]), path, 1)
        wd = evo.wealth_distribution(1)
        assert np.allclose(wd.posterior, [2 / 3, 1 / 3], atol=1e-14)

    def test_identity_prior_is_stationary(self):
        prior = uniform_prior([market_portfolio()])
        evo = evolve(prior, chain(), 300)
        assert np.abs(evo.log_mixture).max() < 1e-12
        assert np.allclose(evo.posterior_matrix(), 1.0)

    def test_posterior_columns_sum_to_one(self):
        evo = evolve(constant_cloud_prior(20, 2), chain(2), 200)
        sums = evo.posterior_matrix().sum(axis=0)
        assert np.abs(sums - 1).max() < 1e-12

    def test_density_proportional_to_value(self):
        prior = uniform_prior([constant_map([0.2, 0.8]), constant_map([0.7, 0.3])])
        evo = evolve(prior, chain(3), 150)
        t = 150
        dens = evo.posterior_matrix()[:, t] / prior.lambdas
        ratio = np.log(dens) - (evo.log_values[:, t] - evo.log_mixture[t])
        assert np.abs(ratio).max() < 1e-12

    def test_time_consistency(self):
        # evolving 0 -> s then s -> t matches evolving 0 -> t on log weights
        prior = constant_cloud_prior(12, 2)
        path = chain(4, horizon=120)
        s, t = 50, 120
        evo_full = evolve(prior, path, t)
        nu_s = evo_full.posterior_matrix()[:, s]
        restarted = Prior(prior.maps, nu_s)
        evo_tail = evolve(restarted, path.subpath(s, t), t - s)
        lhs = np.log(evo_tail.posterior_matrix()[:, t - s])
        rhs = np.log(evo_full.posterior_matrix()[:, t])
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_monotone_likelihood(self):
        prior = uniform_prior([vertex_map(0, 2), vertex_map(1, 2), market_portfolio()])
        evo = evolve(prior, chain(5), 200)
        t = 200
        lv = evo.log_values[:, t]
        nu = evo.posterior_matrix()[:, t]
        for i in range(3):
            for j in range(3):
                if lv[i] > lv[j]:
                    assert nu[i] > nu[j]

    def test_mixture_below_best(self):
        evo = evolve(constant_cloud_prior(30, 2), chain(6), 250)
        assert np.all(evo.log_mixture <= evo.best_log_values() + 1e-12)

    def test_rejects_horizon_overflow(self):
        with pytest.raises(ValueError):
            evolve(constant_cloud_prior(3, 2), chain(7, horizon=10), 11)

    def test_posterior_drift_on_adversarial_path(self):
        # Monte Carlo product-uniform family: at a visited state the mean
        # posterior weight of stock 2 is E[x f(x)] / E[f(x)] with
        # f(x) = 1 - (1 - x) c, a closed form from the per-step factorization.
        from upfolio.portfolios import TableMap

        delta, horizon, atoms = 0.2, 60, 20_000
        path = counterexample_path(delta, horizon)
        states = path.coords
        rng = np.random.default_rng(99)
        draws = rng.uniform(size=(atoms, horizon))
        maps = [TableMap(states[:horizon], np.column_stack([1 - row, row]),
                         label=f"mc{a}") for a, row in enumerate(draws)]
        evo = evolve(uniform_prior(maps), path, horizon)
        nu = evo.posterior_matrix()[:, horizon]
        s = 10  # any visited coordinate
        mean_weight = float(nu @ draws[:, s])
        c = delta / (1 + delta)
        closed = ((1 - c) / 2 + c / 3) / (1 - c / 2)
        assert mean_weight == pytest.approx(closed, abs=0.01)
        assert closed > 0.5  # mass drifts toward the better stock


class TestCoverPortfolio:
    def test_convex_combination(self):
        prior = uniform_prior([constant_map([1.0, 0.0]), constant_map([0.0, 1.0])])
        path = MarketPath(np.log([[0.25, 0.75], [0.5, 0.5]]))
        evo = evolve(prior, path, 1)
        wd = evo.wealth_distribution(1)
        # posterior here is (2, 1)/3 because stock-1 doubles
        expect = wd.posterior[0] * np.array([1.0, 0.0]) + wd.posterior[1] * np.array([0.0, 1.0])
        assert np.allclose(cover_portfolio(wd, [0.5, 0.5]), expect, atol=1e-14)

    def test_single_atom(self):
        prior = uniform_prior([constant_map([0.3, 0.7])])
        evo = evolve(prior, chain(8), 50)
        wd = evo.wealth_distribution(25)
        assert np.allclose(cover_portfolio(wd, GRID[0]), [0.3, 0.7], atol=1e-14)

    def test_time_zero_uniform_vertices(self):
        prior = uniform_prior([vertex_map(0, 2), vertex_map(1, 2)])
        evo = evolve(prior, chain(9), 10)
        wd = evo.wealth_distribution(0)
        assert np.allclose(cover_portfolio(wd, GRID[1]), [0.5, 0.5], atol=1e-15)


class TestCoverValueIdentity:
    def test_one_step_gap_is_zero(self):
        prior = uniform_prior([vertex_map(0, 2), constant_map([0.4, 0.6])])
        path = MarketPath(np.log([[0.25, 0.75], [0.5, 0.5]]))
        assert cover_value_identity_check(prior, path, 1) < 1e-15

    def test_single_atom_gap(self):
        prior = uniform_prior([constant_map([0.25, 0.75])])
        assert cover_value_identity_check(prior, chain(10), 300) < 1e-12

    def test_fgp_prior_long_markov_path(self):
        prior = dense_fgp_prior(50, 2)
        path = markov_grid_path(GRID[:2], np.full((2, 2), 0.5), seed=11, horizon=1000)
        assert cover_value_identity_check(prior, path, 1000) < 1e-10


class TestAdversarialCover:
    def test_per_step_factor_eleven_twelfths(self):
        cc = counterexample_cover_value(0.2, 5)
        # mixture per-step factor relative to mu_2 growth is 11/12
        steps = np.diff(cc.mixture.log_values) - cc.path.log_steps[:, 1]
        assert np.allclose(steps, math.log(11 / 12), atol=1e-14)

    def test_limit_rate_closed_form(self):
        for delta in (0.2, 0.6, 0.05):
            cc = counterexample_cover_value(delta, 10)
            assert cc.limit_rate == pytest.approx(math.log(1 - delta / (2 * (1 + delta))),
                                                  abs=1e-15)

    def test_rate_vanishes_as_delta_to_zero(self):
        rates = [counterexample_cover_value(d, 5).limit_rate for d in (0.4, 0.2, 0.1, 0.05)]
        assert all(r < 0 for r in rates)
        assert rates == sorted(rates)  # increasing toward 0
        assert abs(rates[-1]) < abs(rates[0])

    def test_simulation_matches_closed_form(self):
        cc = counterexample_cover_value(0.2, 2000)
        assert cc.per_step_gap < 1e-12
        drift = np.abs(cc.sim_log_values - cc.mixture.log_values).max()
        assert drift < 1e-10

    def test_best_is_second_stock(self):
        cc = counterexample_cover_value(0.2, 100)
        path = cc.path
        direct = np.array([0.0] + [
            np.log(path.coords[t, 1] / path.coords[0, 1]) for t in range(1, 101)])
        assert np.allclose(cc.best_log_values, direct, atol=1e-12)


class TestCylinderMasses:
    def test_unconstrained_cylinder_has_full_mass(self):
        masses = counterexample_cylinder_log_masses(0.2, 100, [[]])
        assert masses[0] == 0.0

    def test_full_interval_constraint_is_free(self):
        masses = counterexample_cylinder_log_masses(0.2, 100, [[(3, 0.0, 1.0)]])
        assert masses[0] == pytest.approx(0.0, abs=1e-15)

    def test_monte_carlo_oracle(self):
        # sample the per-coordinate posterior density f(x) prop. 1 - (1-x) c
        delta, t = 0.3, 50
        cyl = [(0, 0.2, 0.7), (5, 0.5, 1.0)]
        rng = np.random.default_rng(123)
        c = delta / (1 + delta)
        x = rng.uniform(size=(200_000, len(cyl)))
        weights = np.prod(1 - (1 - x) * c, axis=1)
        inside = np.ones(len(x), dtype=bool)
        for j, (_, a, b) in enumerate(cyl):
            inside &= (x[:, j] >= a) & (x[:, j] <= b)
        oracle = (weights * inside).mean() / weights.mean()
        result = float(np.exp(counterexample_cylinder_log_masses(delta, t, [cyl])[0]))
        assert result == pytest.approx(oracle, rel=0.02)

    def test_rate_scales_like_one_over_t(self):
        cyl = [[(0, 0.1, 0.4), (2, 0.3, 0.9)]]
        m1 = counterexample_cylinder_log_masses(0.2, 100, cyl)[0]
        m2 = counterexample_cylinder_log_masses(0.2, 10_000, cyl)[0]
        assert m1 == m2  # mass independent of t once coordinates are visited
        assert abs(m2 / 10_000) < abs(m1 / 100)

    def test_rejects_unvisited_and_duplicate_coordinates(self):
        with pytest.raises(ValueError):
            counterexample_cylinder_log_masses(0.2, 5, [[(7, 0.1, 0.9)]])
        with pytest.raises(ValueError):
            counterexample_cylinder_log_masses(0.2, 5, [[(1, 0.1, 0.5), (1, 0.6, 0.9)]])


class TestCsv:
    def test_trace_schema(self, tmp_path):
        evo = evolve(constant_cloud_prior(5, 2), chain(12, horizon=20), 20)
        out = tmp_path / "trace.csv"
        write_evolution_trace_csv(evo, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "t,V_hat,V_star,log_ratio,pi_hat_1,pi_hat_2"
        assert len(lines) == 22

    def test_snapshot_schema(self, tmp_path):
        evo = evolve(constant_cloud_prior(4, 2), chain(13, horizon=10), 10)
        out = tmp_path / "snap.csv"
        write_posterior_snapshot_csv(evo.wealth_distribution(10), out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "label,lambda0,nu_t,logV_t"
        assert len(lines) == 5
