"""Exception types raised across the package."""


class PeridivError(Exception):
    """Base class for all package-specific errors."""


class ModelFileError(PeridivError):
    """Malformed model specification file (bad key, bad value, missing pair)."""


class PoleError(PeridivError):
    """Laplace exponent evaluated at a pole theta = -beta_i."""


class NearMultipleRoots(PeridivError):
    """Clustered polynomial roots; the partial-fraction form degenerates."""


class NoPositiveRealRoot(PeridivError):
    """No strictly positive real root found; the model is invalid."""


class BracketNotFound(PeridivError):
    """A bracketing search exhausted its expansion budget without a sign change."""


class PreconditionViolated(PeridivError):
    """An operation was called outside its documented domain."""


class SingularSystem(PeridivError):
    """The 2x2 valuation system is numerically singular (indicates a bug)."""


class SolverError(PeridivError):
    """A solver postcondition failed; indicates a numerical problem."""


class ConfigError(PeridivError):
    """Simulation or CLI configuration violates an invariant."""
