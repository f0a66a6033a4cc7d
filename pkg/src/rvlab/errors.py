"""Exception types raised across the package."""


class RvlabError(Exception):
    """Base class for all package errors."""


class DomainError(RvlabError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(RvlabError, ValueError):
    """A law spec or experiment configuration is inconsistent."""


class UndefinedRatioError(RvlabError):
    """An empirical ratio has no denominator exceedances."""

    def __init__(self, message, k_num=0, n_num=0, k_den=0, n_den=0):
        super().__init__(message)
        self.k_num = k_num
        self.n_num = n_num
        self.k_den = k_den
        self.n_den = n_den


class InsufficientDataError(RvlabError):
    """Too few observations above a threshold to estimate anything."""

    def __init__(self, message, count=0):
        super().__init__(message)
        self.count = count


class DegenerateLawError(RvlabError):
    """A derived law has no mass (e.g. every product is the zero matrix)."""


class RegimeError(RvlabError):
    """The model is outside the regime where the requested quantity exists."""


class ExperimentError(RvlabError):
    """Wraps a module error raised while running a configured experiment."""

    def __init__(self, message, config_hash=None):
        super().__init__(message)
        self.config_hash = config_hash
