class DomainError(ValueError):
    """Argument outside the domain of a constitutive law."""


class ConfigError(ValueError):
    """Invalid configuration or construction parameters."""


class NumericError(ArithmeticError):
    """A numerical procedure failed (quadrature, linear solve, blow-up)."""
