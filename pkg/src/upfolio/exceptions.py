"""Exception types shared across the package."""


class UpfolioError(Exception):
    """Base class for all library errors."""


class SimplexError(UpfolioError, ValueError):
    """A vector failed simplex validation (sign, sum, dimension, or interior floor)."""


class PortfolioError(UpfolioError, ValueError):
    """A portfolio map produced or received an invalid weight vector."""


class GeneratorError(UpfolioError, ValueError):
    """A generating function is invalid (nonpositive, malformed, or misused)."""


class SolverError(UpfolioError, RuntimeError):
    """An iterative solver failed to converge within its iteration budget."""


class ConfigError(UpfolioError, ValueError):
    """An experiment configuration is missing, malformed, or inconsistent."""
