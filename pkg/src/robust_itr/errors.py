"""Exception types shared across the package."""


class SchemaError(ValueError):
    """Input data or configuration does not match the expected layout."""


class SolverError(RuntimeError):
    """Base class for optimisation failures."""


class SingularDesignError(SolverError):
    """The design matrix is rank deficient beyond what the ridge floor can repair."""


class DivergenceError(SolverError):
    """The objective became non-finite during optimisation."""


class EstimatorError(RuntimeError):
    """A value estimator is undefined on the supplied data."""


class UndefinedValueError(ValueError):
    """A population value does not exist, e.g. the mean under Cauchy errors."""


class ScenarioError(ValueError):
    """Invalid combination of simulation scenario settings."""
