"""Exception types shared across the package."""


class ConsenslabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidTopologyError(ConsenslabError):
    """Graph construction rejected: self-loop or node index out of range."""


class InvalidParameterError(ConsenslabError):
    """A numeric parameter violates its domain (e.g. nonpositive variance)."""


class EpsilonBoundError(InvalidParameterError):
    """Consensus step size outside the admissible interval.

    Carries the open interval ``(0, upper)`` that would have been accepted.
    """

    def __init__(self, epsilon: float, upper: float):
        self.epsilon = epsilon
        self.upper = upper
        super().__init__(
            f"step size epsilon={epsilon!r} outside the admissible interval "
            f"(0, {upper!r})"
        )


class DegenerateWeightsError(ConsenslabError):
    """Weight rule produced an all-zero (or undefined) weight vector."""


class InvalidMomentsError(ConsenslabError):
    """Statistic moments unusable (nonpositive variance)."""


class EnumerationLimitError(ConsenslabError):
    """Byzantine subset enumeration would exceed the hard cap (2^N1 terms)."""


class WeightUndefinedError(ConsenslabError):
    """Adaptive weight formula hit a zero denominator for a node."""


class ConfigError(ConsenslabError):
    """Scenario configuration file is malformed or inconsistent."""
