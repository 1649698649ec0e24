"""Exception hierarchy for rdlasso."""


class RdlassoError(Exception):
    """Base class for all rdlasso errors."""


class ConfigError(RdlassoError):
    """Invalid configuration, column mapping, or option value."""


class MissingColumn(ConfigError):
    """A mapped column is absent from the input file."""


class NonNumericCell(ConfigError):
    """A mapped cell could not be parsed as a number."""


class EmptyAfterFiltering(ConfigError):
    """No rows survived complete-case filtering."""


class NumericalError(RdlassoError):
    """Base class for numerical failures during estimation."""


class RankDeficient(NumericalError):
    """Weighted design matrix is singular beyond tolerance.

    Usually signals a too-small bandwidth or collinear covariates.
    """


class TooFewObservations(NumericalError):
    """Not enough observations inside the bandwidth to identify the fit."""


class DegenerateCovariate(NumericalError):
    """A covariate has (numerically) zero local scale, so its penalty
    loading is undefined."""


class DegenerateDensity(NumericalError):
    """Estimated running-variable density at the cutoff is not positive."""


class NonpositiveVariance(NumericalError):
    """A residual variance needed for a standard error is not positive."""


class NonfiniteQuantile(NumericalError):
    """Normal quantile in a penalty rule is undefined (e.g. no covariates)."""


class NotConverged(NumericalError):
    """Solver hit its iteration cap before reaching tolerance."""


class WeakJump(NumericalError):
    """First-stage jump is too close to zero for a reliable ratio estimate."""


class NotPositiveDefinite(NumericalError):
    """Requested simulation covariance matrix is not positive definite."""


class EmptyEffectiveSample(NumericalError):
    """A chosen bandwidth leaves no observations near the cutoff."""
