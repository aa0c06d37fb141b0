"""Exception hierarchy shared by the engine, simulators and CLI."""


class QKDError(Exception):
    """Base class for all package errors."""


class ConfigError(QKDError, ValueError):
    """Invalid configuration or command-line usage."""


class DomainError(QKDError, ValueError):
    """A numerical input lies outside the domain of a formula."""


class UndefinedQBERError(DomainError):
    """QBER requested for a basis with zero key-producing events."""


class InsufficientStatisticsError(QKDError):
    """A Monte Carlo estimate has no samples to work with."""
