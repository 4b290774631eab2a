"""Exception hierarchy.

Everything raised on bad input derives from :class:`ModelError`, so callers
(and the CLI) can separate model problems from configuration problems.
"""


class ModelError(ValueError):
    """Invalid or unsupported model input."""


class NegativeOffDiagonal(ModelError):
    pass


class RowSumNonzero(ModelError):
    pass


class Reducible(ModelError):
    pass


class SingularBeyondNullspace(ModelError):
    pass


class RhsNotOrthogonal(ModelError):
    pass


class SolveFailed(ModelError):
    pass


class WeightsNotNormalized(ModelError):
    pass


class Unstable(ModelError):
    """Traffic intensity is at or above one."""


class EmptyProbInconsistent(ModelError):
    """Empty probabilities violate the aggregate capacity identity."""


class NotCritical(ModelError):
    pass


class MissingEstimate(ModelError):
    pass


class TooFewSamples(ValueError):
    pass


class ConfigError(ValueError):
    """Malformed experiment configuration (CLI exit code 2)."""
