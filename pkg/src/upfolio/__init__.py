"""Universal portfolios over families of portfolio maps.

Discrete-time, pathwise toolkit: simplex market paths with bounded relative
returns, portfolio maps and relative values, functionally generated
portfolios, wealth distributions with the mixture (posterior-mean) portfolio,
and large-deviation / uniform-convergence diagnostics, plus an experiment CLI.
"""

from .exceptions import (ConfigError, GeneratorError, PortfolioError, SimplexError,
                         SolverError, UpfolioError)
from .fgp import (FgInequalityReport, FgPortfolio, GeneratingFunction, GeometricMean,
                  LogBlend, MinAffine, dense_generator_family, eval_generator,
                  generator_distance, generator_from_json, generator_to_json,
                  portfolio_from_generator, supergradient_log, tent_generator,
                  verify_fg_inequality)
from .ldp import (FiniteStateModel, GrowthProfile, LogOptimalResult,
                  concentration_diagnostic, glivenko_cantelli_diagnostic,
                  grid_log_return_max, growth_rate, log_optimal, log_optimal_weights,
                  rate_profile)
from .market import (MarketPath, PairMeasure, SimplexPoint, barycenter,
                     counterexample_path, empirical_pair_measure, markov_grid_path,
                     validate_path)
from .portfolios import (BlendMap, ConstantMap, MarketMap, PortfolioMap, TableMap,
                         ValueSeries, best_in_hindsight, constant_map,
                         growth_rate_via_empirical, log_return_kernel, market_portfolio,
                         relative_value, vertex_map)
from .wealth import (CounterexampleCover, Prior, WealthDistribution, WealthEvolution,
                     constant_cloud_prior, counterexample_cover_value,
                     counterexample_cylinder_log_masses, cover_portfolio,
                     cover_value_identity_check, dense_fgp_prior, evolve, uniform_prior)

__version__ = "0.1.0"
