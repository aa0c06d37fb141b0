"""High-dimensional measurement-device-independent QKD: rate engine and simulators."""

from .errors import (
    ConfigError,
    DomainError,
    InsufficientStatisticsError,
    QKDError,
    UndefinedQBERError,
)
from .model import (
    BasisKind,
    ChannelParams,
    DetectorParams,
    Encoding,
    NoiseParams,
    PhaseModel,
    ProtocolConfig,
    TimingParams,
)

__all__ = [
    "BasisKind",
    "ChannelParams",
    "ConfigError",
    "DetectorParams",
    "DomainError",
    "Encoding",
    "InsufficientStatisticsError",
    "NoiseParams",
    "PhaseModel",
    "ProtocolConfig",
    "QKDError",
    "TimingParams",
    "UndefinedQBERError",
]

__version__ = "0.1.0"
