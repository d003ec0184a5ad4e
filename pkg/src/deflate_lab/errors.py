"""Exception hierarchy shared by every module."""


class DeflateError(Exception):
    """Base class for all library errors."""


class ParameterError(DeflateError, ValueError):
    """An argument lies outside its documented domain."""


class DimensionError(ParameterError):
    pass


class DomainError(ParameterError):
    pass


class ConfigError(ParameterError):
    pass


class ScheduleError(ParameterError):
    pass


class DegenerateInputError(DeflateError):
    """Rank-deficient data, e.g. X without full row rank."""


class DegenerateGapError(DeflateError):
    """Singular values tie where the theory needs a strict gap."""


class NonuniqueFitError(DegenerateGapError):
    """The top singular triplet of a target is not unique."""


class NumericError(DeflateError, FloatingPointError):
    pass


class WarmStartError(NumericError):
    """Warm start has a'Ma too small to divide by; re-randomize and retry."""


class DivergenceError(NumericError):
    """Factored gradient descent blew up. ``pair`` holds the last iterate."""

    def __init__(self, message, pair=None, objective=None):
        super().__init__(message)
        self.pair = pair
        self.objective = objective


class SubroutineError(DeflateError):
    """A rank-1 call failed inside a deflation engine at component k, round l."""

    def __init__(self, k, round_, cause):
        super().__init__(f"component {k} failed at round {round_}: {cause}")
        self.k = k
        self.round = round_
        self.cause = cause


class NoFitError(DeflateError):
    """A trajectory never enters geometric decay."""
