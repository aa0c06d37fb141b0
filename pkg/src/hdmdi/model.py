"""Domain types, basis construction and Charlie's outcome classification.

Detection modes are addressed as ``(bin, port)`` pairs and flattened to the
integer index ``2 * bin + port``.  In the space encoding ``bin`` is the beam
splitter and ``port`` its output; in the time encoding ``bin`` is the time
slot and ``port`` one of the two detectors behind the single beam splitter.
Detector numbers used in the literature are 1-based: bin ``i`` owns detectors
``2i + 1`` and ``2i + 2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError, DomainError

DEFAULT_LOSS_DB_PER_KM = 0.2
DEFAULT_SIGMA = {"space": 0.325, "time": 0.175}


class Encoding(str, enum.Enum):
    SPACE = "space"
    TIME = "time"


class PhaseModel(str, enum.Enum):
    SPACE_HOMOGENEOUS = "space"
    TIME_WHITE = "time-white"
    TIME_DRIFT = "time-drift"

    @classmethod
    def for_encoding(cls, encoding: Encoding) -> "PhaseModel":
        return cls.SPACE_HOMOGENEOUS if Encoding(encoding) is Encoding.SPACE else cls.TIME_WHITE


class BasisKind(str, enum.Enum):
    Z = "Z"
    X = "X"


class Parity(str, enum.Enum):
    PLUS = "+"
    MINUS = "-"
    INDETERMINATE = "?"


class EventKind(str, enum.Enum):
    VALID = "valid"
    BUNCHED = "bunched"
    SAME_BIN = "same-bin"
    NO_EVENT = "no-event"
    MULTICLICK = "multiclick"


def _check_prob(name: str, value: float, *, open_low=False, open_high=False) -> None:
    lo_ok = value > 0 if open_low else value >= 0
    hi_ok = value < 1 if open_high else value <= 1
    if not (lo_ok and hi_ok):
        raise ConfigError(f"{name} must be a probability, got {value!r}")


@dataclass(frozen=True)
class ChannelParams:
    distance_km: float = 0.0
    loss_db_per_km: float = DEFAULT_LOSS_DB_PER_KM
    efficiency: float = 0.145

    def __post_init__(self):
        if self.distance_km < 0:
            raise ConfigError(f"distance_km must be >= 0, got {self.distance_km}")
        if self.loss_db_per_km < 0:
            raise ConfigError(f"loss_db_per_km must be >= 0, got {self.loss_db_per_km}")
        if not 0 < self.efficiency <= 1:
            raise ConfigError(f"efficiency must lie in (0, 1], got {self.efficiency}")


@dataclass(frozen=True)
class NoiseParams:
    sigma: float = DEFAULT_SIGMA["space"]
    beta_sq: float = 0.85
    phase_model: PhaseModel = PhaseModel.SPACE_HOMOGENEOUS

    def __post_init__(self):
        object.__setattr__(self, "phase_model", PhaseModel(self.phase_model))
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        _check_prob("beta_sq", self.beta_sq)


@dataclass(frozen=True)
class DetectorParams:
    dark_count: float = 1e-6
    dead_time: float = 20e-9

    def __post_init__(self):
        _check_prob("dark_count", self.dark_count, open_high=True)
        if self.dead_time < 0:
            raise ConfigError(f"dead_time must be >= 0, got {self.dead_time}")


@dataclass(frozen=True)
class TimingParams:
    """Pulse spacing in seconds.  ``pulse_sep`` may never undercut ``min_pulse_sep``."""

    pulse_sep: float = 200e-12
    min_pulse_sep: float = 200e-12

    def __post_init__(self):
        if not self.min_pulse_sep > 0:
            raise ConfigError(f"min_pulse_sep must be > 0, got {self.min_pulse_sep}")
        if self.pulse_sep < self.min_pulse_sep:
            raise ConfigError(
                f"pulse_sep ({self.pulse_sep}) is below min_pulse_sep ({self.min_pulse_sep})"
            )


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything needed to evaluate or simulate one operating point.

    Defaults: P_dc = 1e-6, f = 1, |beta|^2 = 0.85, eta = 0.145,
    tau_d = 20 ns, minimum pulse separation 200 ps, 0.2 dB/km fiber.
    """

    dimension: int = 2
    encoding: Encoding = Encoding.SPACE
    basis_prob: float = 0.5
    channel: ChannelParams = field(default_factory=ChannelParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    timing: TimingParams = field(default_factory=TimingParams)
    ec_inefficiency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "encoding", Encoding(self.encoding))
        if int(self.dimension) != self.dimension or self.dimension < 2:
            raise ConfigError(f"dimension must be an integer >= 2, got {self.dimension!r}")
        object.__setattr__(self, "dimension", int(self.dimension))
        _check_prob("basis_prob", self.basis_prob, open_low=True, open_high=True)
        if self.ec_inefficiency < 1:
            raise ConfigError(f"ec_inefficiency must be >= 1, got {self.ec_inefficiency}")

    @classmethod
    def for_encoding(cls, encoding: Encoding | str = Encoding.SPACE, **kwargs) -> "ProtocolConfig":
        """Default operating point with sigma and phase model matched to ``encoding``."""
        encoding = Encoding(encoding)
        noise = kwargs.pop("noise", None) or NoiseParams(
            sigma=DEFAULT_SIGMA[encoding.value],
            phase_model=PhaseModel.for_encoding(encoding),
        )
        return cls(encoding=encoding, noise=noise, **kwargs)

    @property
    def pulses_per_deadtime(self) -> float:
        return self.detector.dead_time / self.timing.pulse_sep

    @property
    def n_detectors(self) -> int:
        return detector_count(self.dimension, self.encoding)

    def replace(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)


def detector_count(dimension: int, encoding: Encoding) -> int:
    return 2 * dimension if Encoding(encoding) is Encoding.SPACE else 2


@dataclass(frozen=True)
class BasisSet:
    kind: BasisKind
    vectors: np.ndarray  # rows are states
    real_flag: bool

    @property
    def dimension(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, index: int) -> np.ndarray:
        return self.vectors[index]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _sylvester(n: int) -> np.ndarray:
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def build_basis(dimension: int, kind: BasisKind | str) -> BasisSet:
    """Return the Z (computational) or X (unbiased) basis for ``dimension``.

    The X basis uses equal real weights (Sylvester-Hadamard signs) when the
    dimension is a power of two, and the Fourier basis otherwise.
    """
    kind = BasisKind(kind)
    if int(dimension) != dimension or dimension < 2:
        raise DomainError(f"invalid dimension {dimension!r}; need an integer >= 2")
    n = int(dimension)
    if kind is BasisKind.Z:
        return BasisSet(kind, np.eye(n, dtype=complex), True)
    if _is_power_of_two(n):
        vectors = _sylvester(n).astype(complex) / np.sqrt(n)
        return BasisSet(kind, vectors, True)
    jk = np.outer(np.arange(n), np.arange(n))
    vectors = np.exp(2j * np.pi * jk / n) / np.sqrt(n)
    return BasisSet(kind, vectors, False)


class DetectionMode(NamedTuple):
    bin: int
    port: int

    @property
    def index(self) -> int:
        return 2 * self.bin + self.port

    @property
    def detector_number(self) -> int:
        return self.index + 1

    @classmethod
    def from_index(cls, index: int) -> "DetectionMode":
        return cls(int(index) // 2, int(index) % 2)

    @classmethod
    def from_detector_number(cls, number: int) -> "DetectionMode":
        return cls.from_index(int(number) - 1)


@dataclass(frozen=True)
class Classification:
    kind: EventKind
    i: int | None = None
    j: int | None = None
    parity: Parity | None = None

    @property
    def is_valid(self) -> bool:
        return self.kind is EventKind.VALID


@dataclass(frozen=True)
class DetectionEvent:
    clicked: frozenset  # mode indices
    classification: Classification


NO_EVENT = Classification(EventKind.NO_EVENT)
BUNCHED = Classification(EventKind.BUNCHED)
SAME_BIN = Classification(EventKind.SAME_BIN)
MULTICLICK = Classification(EventKind.MULTICLICK)


def _mode_index(mode) -> int:
    return mode.index if isinstance(mode, DetectionMode) else int(mode)


def classify_event(clicked: Iterable, dimension: int, encoding: Encoding | None = None) -> Classification:
    """Classify the set of clicked modes announced by Charlie.

    A coincidence in bins ``i < j`` is ``PLUS`` when both clicks share a port
    label and ``MINUS`` otherwise.  A single click (including two photons
    bunched into one mode) is indistinguishable from no event at this level.
    """
    modes = {_mode_index(m) for m in clicked}
    for m in modes:
        if not 0 <= m < 2 * dimension:
            raise DomainError(f"mode index {m} outside 0..{2 * dimension - 1}")
    if len(modes) < 2:
        return NO_EVENT
    if len(modes) > 2:
        return MULTICLICK
    a, b = sorted(modes)
    bin_a, port_a = divmod(a, 2)
    bin_b, port_b = divmod(b, 2)
    if bin_a == bin_b:
        return SAME_BIN
    return Classification(EventKind.VALID, bin_a, bin_b, Parity.PLUS if port_a == port_b else Parity.MINUS)


def expected_parity(a_state, b_state, i: int, j: int, atol: float = 1e-9) -> Parity:
    """Parity of the only coincidence allowed in subspace ``{i, j}`` under ideal interference.

    The coincidence amplitudes in bins ``i, j`` are proportional to
    ``a_i b_j + a_j b_i`` (same port) and ``a_i b_j - a_j b_i`` (opposite
    ports), so the outcome is fixed when ``a_i b_j conj(a_j b_i)`` is real.
    """
    a = np.asarray(a_state, dtype=complex)
    b = np.asarray(b_state, dtype=complex)
    if i == j:
        raise DomainError("expected_parity needs two distinct bins")
    phi = a[i] * b[j] * np.conj(a[j] * b[i])
    mag = abs(phi)
    if mag < atol:
        return Parity.INDETERMINATE
    phi /= mag
    if abs(phi - 1) < atol:
        return Parity.PLUS
    if abs(phi + 1) < atol:
        return Parity.MINUS
    return Parity.INDETERMINATE
