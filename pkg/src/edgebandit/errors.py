"""Exception hierarchy shared by every module of the package."""


class EdgeBanditError(Exception):
    """Base class for all package errors."""


class ParameterError(EdgeBanditError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DomainError(EdgeBanditError, ValueError):
    """A value lies outside the domain of a function (e.g. context not in [0,1]^D)."""


class UnreachableError(EdgeBanditError):
    """A user is not within coverage of the base station it is evaluated against."""


class ConfigError(EdgeBanditError, ValueError):
    """Invalid scenario / policy configuration."""


class ProtocolError(EdgeBanditError):
    """The slot protocol was violated (e.g. feedback for an unselected SBS)."""


class CapacityError(EdgeBanditError):
    """A combinatorial object would exceed the configured size cap."""


class InfeasibleError(EdgeBanditError):
    """A constrained problem has no feasible solution."""
