"""Finite-state models, growth rates, the log-optimal solver, and diagnostics."""

import math

import numpy as np
import pytest

from upfolio import (FiniteStateModel, SolverError, concentration_diagnostic,
                     constant_map, dense_fgp_prior, glivenko_cantelli_diagnostic,
                     grid_log_return_max, growth_rate, log_optimal, log_optimal_weights,
                     market_portfolio, markov_grid_path, rate_profile, relative_value,
                     uniform_prior, vertex_map)
from upfolio.ldp import (alternating_gap_model, write_concentration_csv,
                         write_rate_profile_csv, write_sup_error_csv)

ALT_STATES = np.array([[0.4, 0.6], [0.6, 0.4]])
ALT_JOINT = np.array([[0.0, 0.5], [0.5, 0.0]])  # deterministic alternation
exact_gap_model = alternating_gap_model


class TestFiniteStateModel:
    def test_marginal_conditional_consistency(self):
        rng = np.random.default_rng(0)
        states = 0.1 + 0.7 * rng.dirichlet(np.ones(3), size=4)
        joint = rng.dirichlet(np.ones(16)).reshape(4, 4)
        model = FiniteStateModel(states, joint)
        rebuilt = model.marginal[:, None] * model.conditional
        assert np.abs(rebuilt - model.joint).max() < 1e-12

    def test_from_chain_matches_stationary(self):
        trans = np.array([[0.2, 0.8], [0.6, 0.4]])
        model = FiniteStateModel.from_chain(ALT_STATES, trans)
        stat = model.marginal
        assert np.allclose(stat @ trans, stat, atol=1e-12)

    def test_pair_measure_roundtrip(self):
        model = FiniteStateModel(ALT_STATES, ALT_JOINT)
        pm = model.pair_measure()
        assert pm.size == 2
        assert abs(pm.weights.sum() - 1) < 1e-12


class TestGrowthRate:
    def test_market_portfolio_zero(self):
        model = FiniteStateModel(ALT_STATES, ALT_JOINT)
        assert growth_rate(market_portfolio(), model) == pytest.approx(0.0, abs=1e-15)

    def test_alternating_vertex_map_cancels(self):
        # ratios multiply to one over the cycle
        model = FiniteStateModel(ALT_STATES, ALT_JOINT)
        assert growth_rate(vertex_map(0, 2), model) == pytest.approx(0.0, abs=1e-14)

    def test_matches_ergodic_simulation(self):
        trans = np.array([[0.3, 0.7], [0.6, 0.4]])
        model = FiniteStateModel.from_chain(ALT_STATES, trans)
        path = markov_grid_path(ALT_STATES, trans, seed=5, horizon=100_000)
        for pi in (constant_map([0.5, 0.5]), vertex_map(1, 2)):
            exact = growth_rate(pi, model)
            simulated = relative_value(pi, path).log_values[-1] / path.horizon
            assert abs(exact - simulated) < 1e-3

    def test_concave_in_the_map(self):
        # W(lam a + (1-lam) b) >= lam W(a) + (1-lam) W(b)
        rng = np.random.default_rng(1)
        model = FiniteStateModel.from_chain(ALT_STATES, np.array([[0.5, 0.5], [0.7, 0.3]]))
        from upfolio import BlendMap
        for _ in range(20):
            wa, wb = rng.dirichlet([1, 1]), rng.dirichlet([1, 1])
            lam = rng.uniform(0.1, 0.9)
            a, b = constant_map(wa), constant_map(wb)
            mix = BlendMap([a, b], [lam, 1 - lam])
            lhs = growth_rate(mix, model)
            rhs = lam * growth_rate(a, model) + (1 - lam) * growth_rate(b, model)
            assert lhs >= rhs - 1e-12


class TestLogOptimalKernel:
    def test_single_outcome_picks_best_ratio(self):
        x, info = log_optimal_weights([[1.3, 0.9]], [1.0])
        assert x[0] > 1 - 1e-9
        assert info["objective"] == pytest.approx(math.log(1.3), abs=1e-9)

    def test_symmetric_two_outcomes(self):
        x, _ = log_optimal_weights([[1.25, 0.8], [0.8, 1.25]], [0.5, 0.5])
        assert np.allclose(x, [0.5, 0.5], atol=1e-6)

    def test_degenerate_unit_ratios(self):
        x, info = log_optimal_weights([[1.0, 1.0, 1.0]], [1.0])
        assert info["objective"] == pytest.approx(0.0, abs=1e-15)
        assert info["iterations"] == 0

    def test_kkt_residual_below_tolerance(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            m, n = int(rng.integers(1, 5)), int(rng.integers(2, 5))
            ratios = rng.uniform(0.6, 1.6, (m, n))
            probs = rng.dirichlet(np.ones(m))
            x, info = log_optimal_weights(ratios, probs)
            assert info["residual"] < 1e-10
            assert x.min() >= 0 and abs(x.sum() - 1) < 1e-12

    def test_nonconvergence_raises(self):
        # vertex solution needs many multiplicative steps; 2 are not enough
        with pytest.raises(SolverError):
            log_optimal_weights([[1.3, 0.9]], [1.0], max_iter=2)


class TestGridOracle:
    def test_methods_agree(self):
        rng = np.random.default_rng(3)
        for n, res in [(2, 1e-3), (3, 1 / 200), (4, 1 / 40)]:
            for _ in range(5):
                ratios = rng.uniform(0.6, 1.6, (int(rng.integers(1, 4)), n))
                probs = rng.dirichlet(np.ones(ratios.shape[0]))
                vf, _ = grid_log_return_max(ratios, probs, resolution=res, method="full")
                vc, _ = grid_log_return_max(ratios, probs, resolution=res, method="concave")
                assert abs(vf - vc) < 1e-12

    def test_solver_beats_grid(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            ratios = rng.uniform(0.7, 1.5, (3, 3))
            probs = rng.dirichlet(np.ones(3))
            x, info = log_optimal_weights(ratios, probs)
            grid_val, _ = grid_log_return_max(ratios, probs, resolution=1e-3)
            assert info["objective"] >= grid_val - 1e-8


class TestLogOptimalOnModels:
    def test_symmetric_model_balanced(self):
        # state with two equally likely symmetric successors
        states = np.array([[0.5, 0.5], [0.625, 0.375], [0.375, 0.625]])
        joint = np.array([[0, 0.25, 0.25], [0.25, 0, 0], [0.25, 0, 0]])
        model = FiniteStateModel(states, joint)
        result = log_optimal(model, cross_check=True)
        assert np.allclose(result.portfolio.table[0], [0.5, 0.5], atol=1e-6)
        assert np.all(result.objectives >= result.grid_objectives - 1e-8)

    def test_degenerate_self_loop(self):
        states = np.array([[0.3, 0.7]])
        model = FiniteStateModel(states, np.array([[1.0]]))
        result = log_optimal(model, cross_check=True)
        assert result.objectives[0] == pytest.approx(0.0, abs=1e-14)
        assert result.grid_objectives[0] == pytest.approx(0.0, abs=1e-14)

    def test_solved_map_beats_family_on_model(self):
        model = FiniteStateModel.from_chain(ALT_STATES, np.array([[0.4, 0.6], [0.7, 0.3]]))
        result = log_optimal(model)
        best = growth_rate(result.portfolio, model)
        for w in ([0.5, 0.5], [1, 0], [0, 1], [0.3, 0.7]):
            assert best >= growth_rate(constant_map(np.asarray(w, float)), model) - 1e-9


class TestRateProfile:
    def test_rates_nonnegative_with_zero_minimum(self):
        model = FiniteStateModel.from_chain(ALT_STATES, np.array([[0.5, 0.5], [0.6, 0.4]]))
        family = [market_portfolio(), constant_map([0.5, 0.5]), vertex_map(0, 2)]
        profile = rate_profile(family, model)
        assert profile.rate.min() == 0.0
        assert np.all(profile.rate >= 0)

    def test_singleton_family(self):
        model = FiniteStateModel(ALT_STATES, ALT_JOINT)
        profile = rate_profile([vertex_map(1, 2)], model)
        assert profile.rate[0] == 0.0

    def test_relabeling_equivariance(self):
        model = FiniteStateModel.from_chain(ALT_STATES, np.array([[0.2, 0.8], [0.5, 0.5]]))
        family = [market_portfolio(), constant_map([0.3, 0.7]), vertex_map(1, 2)]
        profile = rate_profile(family, model)
        flipped = rate_profile(family[::-1], model)
        assert np.allclose(profile.growth[::-1], flipped.growth)
        assert np.allclose(profile.rate[::-1], flipped.rate)

    def test_two_constant_maps_on_symmetric_model(self):
        # balanced map strictly beats a vertex map on the symmetric alternation
        model = FiniteStateModel(ALT_STATES, ALT_JOINT)
        profile = rate_profile([constant_map([0.5, 0.5]), vertex_map(0, 2)], model)
        w_bal = 0.5 * (math.log(0.5 * (0.6 / 0.4 + 0.4 / 0.6))
                       + math.log(0.5 * (0.4 / 0.6 + 0.6 / 0.4)))
        assert profile.growth[0] == pytest.approx(w_bal, abs=1e-12)
        assert profile.rate[1] == pytest.approx(w_bal, abs=1e-12)


class TestExactGapConstruction:
    def test_growth_gap_is_exact(self):
        model = exact_gap_model(0.05)
        w1 = growth_rate(constant_map([0.5, 0.5]), model)
        w2 = growth_rate(market_portfolio(), model)
        assert w1 - w2 == pytest.approx(0.05, abs=1e-12)


class TestConcentrationDiagnostic:
    def _two_atom_setup(self, gap=0.05, horizon=10_000):
        model = exact_gap_model(gap)
        path = markov_grid_path(model.states, [[0, 1.0], [1.0, 0]], seed=1, horizon=horizon)
        prior = uniform_prior([constant_map([0.5, 0.5]), market_portfolio()])
        return model, path, prior

    def test_two_atom_rate_matches_gap(self):
        model, path, prior = self._two_atom_setup()
        rows = concentration_diagnostic(prior, path, 0.025, [100, 1000, 10_000], model=model)
        final = rows[-1]
        assert final.target_rate == pytest.approx(0.05, abs=1e-12)
        assert abs(final.empirical_rate - 0.05) < 0.01

    def test_two_atom_closed_form_posterior(self):
        # nu_t(market) = 0.5 / (0.5 V(t) + 0.5) with V the balanced-map value
        model, path, prior = self._two_atom_setup()
        t = 10_000
        rows = concentration_diagnostic(prior, path, 0.025, [t], model=model)
        log_v = relative_value(constant_map([0.5, 0.5]), path).log_values[t]
        closed = -np.logaddexp(0.0, log_v)  # log(1 / (1 + V))
        assert rows[0].set_mass == pytest.approx(float(np.exp(closed)), rel=1e-10)
        assert math.log(rows[0].set_mass) == pytest.approx(closed, abs=1e-10)

    def test_threshold_capturing_everything_gives_zero_rate(self):
        model, path, prior = self._two_atom_setup()
        rows = concentration_diagnostic(prior, path, 0.0, [1000], model=model)
        assert rows[0].set_mass == pytest.approx(1.0, abs=1e-12)
        assert rows[0].empirical_rate == pytest.approx(0.0, abs=1e-12)

    def test_empty_set_reported_not_raised(self):
        model, path, prior = self._two_atom_setup()
        rows = concentration_diagnostic(prior, path, 10.0, [1000], model=model)
        assert rows[0].set_mass == 0.0
        assert math.isnan(rows[0].empirical_rate)


class TestGlivenkoCantelli:
    def test_constant_path_zero_error(self):
        path = markov_grid_path([[0.5, 0.5]], [[1.0]], seed=1, horizon=100)
        family = [market_portfolio(), constant_map([0.2, 0.8])]
        rows = glivenko_cantelli_diagnostic(family, path, [10, 100])
        assert all(r.sup_error < 1e-14 for r in rows)

    def test_matches_direct_growth_estimates(self):
        trans = np.array([[0.5, 0.5], [0.5, 0.5]])
        path = markov_grid_path(ALT_STATES, trans, seed=9, horizon=2000)
        model = FiniteStateModel.from_chain(ALT_STATES, trans)
        family = [constant_map([0.5, 0.5]), vertex_map(0, 2)]
        rows = glivenko_cantelli_diagnostic(family, path, [500, 2000], model=model)
        for row in rows:
            direct = max(
                abs(relative_value(pi, path).log_values[row.t] / row.t - growth_rate(pi, model))
                for pi in family)
            assert row.sup_error == pytest.approx(direct, rel=1e-10)

    def test_error_decreases_on_ergodic_chain(self):
        trans = np.array([[0.5, 0.5], [0.5, 0.5]])
        path = markov_grid_path(ALT_STATES, trans, seed=10, horizon=100_000)
        model = FiniteStateModel.from_chain(ALT_STATES, trans)
        family = [m for m, _ in
                  [(constant_map([w, 1 - w]), None) for w in np.linspace(0.05, 0.95, 10)]]
        rows = glivenko_cantelli_diagnostic(family, path, [1000, 100_000], model=model)
        assert rows[-1].sup_error < rows[0].sup_error

    def test_single_member_reduces_to_pointwise(self):
        trans = np.array([[0.4, 0.6], [0.6, 0.4]])
        path = markov_grid_path(ALT_STATES, trans, seed=11, horizon=3000)
        rows = glivenko_cantelli_diagnostic([constant_map([0.6, 0.4])], path, [3000])
        assert rows[0].sup_error < 1e-14  # reference defaults to the same horizon


class TestCsv:
    def test_concentration_schema(self, tmp_path):
        model = exact_gap_model(0.05)
        path = markov_grid_path(model.states, [[0, 1.0], [1.0, 0]], seed=1, horizon=100)
        prior = uniform_prior([constant_map([0.5, 0.5]), market_portfolio()])
        rows = concentration_diagnostic(prior, path, 0.02, [10, 100], model=model)
        out = tmp_path / "conc.csv"
        write_concentration_csv(rows, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "t,set_mass,empirical_rate,target_rate"
        assert len(lines) == 3

    def test_sup_error_schema(self, tmp_path):
        path = markov_grid_path([[0.5, 0.5]], [[1.0]], seed=1, horizon=20)
        rows = glivenko_cantelli_diagnostic([market_portfolio()], path, [10, 20])
        out = tmp_path / "gc.csv"
        write_sup_error_csv(rows, out)
        assert out.read_text().splitlines()[0] == "t,sup_error"

    def test_rate_profile_schema(self, tmp_path):
        model = FiniteStateModel(ALT_STATES, ALT_JOINT)
        profile = rate_profile([market_portfolio()], model)
        out = tmp_path / "profile.csv"
        write_rate_profile_csv(profile, out)
        assert out.read_text().splitlines()[0] == "label,growth_rate,rate_I"
