"""Brute-force two-photon output statistics of Charlie's beam-splitter network.

Each bin ``k`` (a beam splitter in the space encoding, a time slot at the
single beam splitter in the time encoding) maps

    Alice:  a_k^dag -> (c_{k,0}^dag + c_{k,1}^dag) / sqrt(2)
    Bob:    b_k^dag -> (c_{k,0}^dag - c_{k,1}^dag) / sqrt(2)

Indistinguishable photons are symmetrized (amplitudes of both orderings add);
distinguishable photons are routed by independent single-photon laws.  The
outcome space is every unordered pair of the 2N modes, including both photons
in the same mode.  Photon loss is handled by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .model import NoiseParams, Parity, PhaseModel, expected_parity

_SIGN = np.array([1.0, -1.0])
_CHUNK = 20_000


@dataclass(frozen=True)
class PhotonState:
    """Nominal bin amplitudes plus channel phases applied as exp(i theta)."""

    amplitudes: np.ndarray
    phases: np.ndarray | None = None
    party: str = "alice"

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if self.phases is not None:
            object.__setattr__(self, "phases", np.asarray(self.phases, dtype=float))
        norm = np.linalg.norm(amps)
        if abs(norm - 1) > 1e-9:
            raise DomainError(f"photon state is not normalized (norm {norm:.12g})")

    @property
    def field(self) -> np.ndarray:
        if self.phases is None:
            return self.amplitudes
        return self.amplitudes * np.exp(1j * self.phases)


def pair_probabilities(alice: np.ndarray, bob: np.ndarray, indistinguishable) -> np.ndarray:
    """Outcome probabilities for a batch of photon pairs.

    ``alice`` and ``bob`` are ``(T, N)`` complex fields.  Returns ``(T, 2N, 2N)``
    with entry ``[t, m, m']`` (``m <= m'``) the probability that the photons
    land in modes ``{m, m'}``; the lower triangle is zero.  Mode index is
    ``2 * bin + port``.
    """
    alice = np.atleast_2d(np.asarray(alice, dtype=complex))
    bob = np.atleast_2d(np.asarray(bob, dtype=complex))
    t, n = alice.shape
    indist = np.broadcast_to(np.asarray(indistinguishable, dtype=bool), (t,))
    a_modes = np.repeat(alice, 2, axis=1) / np.sqrt(2)
    b_modes = (bob[:, :, None] * _SIGN).reshape(t, 2 * n) / np.sqrt(2)

    probs = np.empty((t, 2 * n, 2 * n))
    if indist.any():
        c = a_modes[indist, :, None] * b_modes[indist, None, :]
        probs[indist] = np.abs(c + c.transpose(0, 2, 1)) ** 2
    if (~indist).any():
        q = np.abs(a_modes[~indist, :, None]) ** 2 * np.abs(b_modes[~indist, None, :]) ** 2
        probs[~indist] = q + q.transpose(0, 2, 1)
    # both orderings were summed; the diagonal counted the single outcome twice
    # (indistinguishable: |2c|^2 = 2 * (2|c|^2))
    diag = np.arange(2 * n)
    probs[:, diag, diag] /= 2
    return np.triu(probs)


def single_photon_probabilities(field: np.ndarray) -> np.ndarray:
    """Mode probabilities ``(T, 2N)`` for a lone photon (the other was lost)."""
    field = np.atleast_2d(np.asarray(field, dtype=complex))
    return np.repeat(np.abs(field) ** 2, 2, axis=1) / 2


def parity_table(alice_amps, bob_amps) -> np.ndarray:
    """``(N, N)`` table of +1 / -1 / 0 (indeterminate) expected parities for i < j."""
    n = len(alice_amps)
    table = np.zeros((n, n), dtype=int)
    code = {Parity.PLUS: 1, Parity.MINUS: -1, Parity.INDETERMINATE: 0}
    for i in range(n):
        for j in range(i + 1, n):
            table[i, j] = code[expected_parity(alice_amps, bob_amps, i, j)]
    return table


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probability mass over Charlie's outcome categories.

    ``plus[i, j]`` / ``minus[i, j]`` (``i < j``) are cross-bin coincidences
    with equal / opposite port labels, ``bunched[m]`` is both photons in mode
    ``m`` and ``same_bin[k]`` is one photon in each port of bin ``k``.
    ``expected`` holds the ideal parity per subspace (see ``parity_table``).
    """

    plus: np.ndarray
    minus: np.ndarray
    bunched: np.ndarray
    same_bin: np.ndarray
    expected: np.ndarray
    std_errors: dict = field(default_factory=dict)
    trials: int = 1

    @property
    def dimension(self) -> int:
        return self.plus.shape[0]

    @property
    def correct(self) -> float:
        return float(self.plus[self.expected == 1].sum() + self.minus[self.expected == -1].sum())

    @property
    def wrong(self) -> float:
        return float(self.minus[self.expected == 1].sum() + self.plus[self.expected == -1].sum())

    @property
    def undetermined(self) -> float:
        return float((self.plus + self.minus)[np.triu(self.expected == 0, k=1)].sum())

    @property
    def coincidences(self) -> float:
        return float(np.triu(self.plus + self.minus, k=1).sum())

    @property
    def total_bunched(self) -> float:
        return float(self.bunched.sum())

    @property
    def total_same_bin(self) -> float:
        return float(self.same_bin.sum())

    @property
    def total(self) -> float:
        return self.coincidences + self.total_bunched + self.total_same_bin

    def aggregates(self) -> dict:
        return {
            "correct": self.correct,
            "wrong": self.wrong,
            "undetermined": self.undetermined,
            "bunched": self.total_bunched,
            "same_bin": self.total_same_bin,
            "total": self.total,
        }

    def rows(self):
        """Yield ``(category, i, j, label, mass)`` for every outcome category."""
        n = self.dimension
        for i in range(n):
            for j in range(i + 1, n):
                yield "coincidence", i, j, "+", float(self.plus[i, j])
                yield "coincidence", i, j, "-", float(self.minus[i, j])
        for m in range(2 * n):
            yield "bunched", m // 2, m // 2, f"port{m % 2}", float(self.bunched[m])
        for k in range(n):
            yield "same_bin", k, k, "", float(self.same_bin[k])


def _categorize(probs: np.ndarray):
    """Split ``(T, 2N, 2N)`` pair probabilities into per-trial category arrays."""
    t, m, _ = probs.shape
    n = m // 2
    p5 = probs.reshape(t, n, 2, n, 2)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    plus = (p5[:, :, 0, :, 0] + p5[:, :, 1, :, 1]) * upper
    minus = (p5[:, :, 0, :, 1] + p5[:, :, 1, :, 0]) * upper
    diag = np.arange(m)
    bunched = probs[:, diag, diag]
    bins = np.arange(n)
    same_bin = probs[:, 2 * bins, 2 * bins + 1]
    return plus, minus, bunched, same_bin


def network_output(alice: PhotonState, bob: PhotonState, indistinguishable: bool = True) -> OutcomeDistribution:
    """Exact outcome distribution for one photon pair."""
    if alice.amplitudes.shape != bob.amplitudes.shape:
        raise DomainError("Alice and Bob states must have the same dimension")
    probs = pair_probabilities(alice.field[None], bob.field[None], indistinguishable)
    plus, minus, bunched, same_bin = (x[0] for x in _categorize(probs))
    return OutcomeDistribution(
        plus=plus, minus=minus, bunched=bunched, same_bin=same_bin,
        expected=parity_table(alice.amplitudes, bob.amplitudes),
    )


def sample_phases(rng: np.random.Generator, trials: int, dimension: int, sigma: float,
                  model: PhaseModel) -> np.ndarray:
    """Channel phases ``(trials, N)`` for one party.

    Relative phase theta_i - theta_j has variance sigma^2 (space),
    |i - j| sigma^2 (white time noise) or |i - j|^2 sigma^2 (drift).
    """
    model = PhaseModel(model)
    if sigma == 0:
        return np.zeros((trials, dimension))
    if model is PhaseModel.SPACE_HOMOGENEOUS:
        return rng.normal(0.0, sigma / np.sqrt(2), size=(trials, dimension))
    if model is PhaseModel.TIME_WHITE:
        steps = rng.normal(0.0, sigma, size=(trials, dimension - 1))
        return np.concatenate([np.zeros((trials, 1)), np.cumsum(steps, axis=1)], axis=1)
    drift = rng.normal(0.0, sigma, size=(trials, 1))
    return drift * np.arange(dimension)


def _oracle_chunk(args):
    alice, bob, noise, trials, seed = args
    rng = np.random.default_rng(seed)
    n = alice.shape[0]
    phase_a = sample_phases(rng, trials, n, noise.sigma, noise.phase_model)
    phase_b = sample_phases(rng, trials, n, noise.sigma, noise.phase_model)
    indist = rng.random(trials) < noise.beta_sq
    probs = pair_probabilities(alice * np.exp(1j * phase_a), bob * np.exp(1j * phase_b), indist)
    return _categorize(probs)


def sample_categories(alice_state, bob_state, noise: NoiseParams, trials: int,
                      rng_seed: int = 0, chunk: int = _CHUNK) -> OutcomeDistribution:
    """Average ``network_output`` over sampled channel phases and distinguishability.

    Each trial draws both parties' phases from ``noise.phase_model`` and marks
    the pair indistinguishable with probability ``noise.beta_sq``.  Trials are
    split into fixed-size chunks with independent child seeds, so the result
    depends only on ``rng_seed`` and ``chunk``.  ``std_errors`` holds standard
    errors of the mean for the aggregate categories.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    alice = np.asarray(getattr(alice_state, "amplitudes", alice_state), dtype=complex)
    bob = np.asarray(getattr(bob_state, "amplitudes", bob_state), dtype=complex)
    PhotonState(alice), PhotonState(bob)  # validates normalization
    expected = parity_table(alice, bob)

    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    seeds = np.random.SeedSequence(rng_seed).spawn(len(sizes))
    n = alice.shape[0]
    sums = [np.zeros((n, n)), np.zeros((n, n)), np.zeros(2 * n), np.zeros(n)]
    agg_sum: dict[str, float] = {}
    agg_sq: dict[str, float] = {}
    for size, seed in zip(sizes, seeds):
        parts = _oracle_chunk((alice, bob, noise, size, seed))
        for acc, part in zip(sums, parts):
            acc += part.sum(axis=0)
        plus, minus, bunched, same_bin = parts
        per_trial = {
            "correct": (plus * (expected == 1)).sum(axis=(1, 2)) + (minus * (expected == -1)).sum(axis=(1, 2)),
            "wrong": (minus * (expected == 1)).sum(axis=(1, 2)) + (plus * (expected == -1)).sum(axis=(1, 2)),
            "bunched": bunched.sum(axis=1),
            "same_bin": same_bin.sum(axis=1),
        }
        for key, values in per_trial.items():
            agg_sum[key] = agg_sum.get(key, 0.0) + float(values.sum())
            agg_sq[key] = agg_sq.get(key, 0.0) + float((values**2).sum())

    std_errors = {}
    for key in agg_sum:
        mean = agg_sum[key] / trials
        var = max(agg_sq[key] / trials - mean**2, 0.0)
        std_errors[key] = float(np.sqrt(var * trials / max(trials - 1, 1) / trials))
    plus, minus, bunched, same_bin = (s / trials for s in sums)
    return OutcomeDistribution(plus, minus, bunched, same_bin, expected, std_errors, trials)


def bunching_diagnostic(dimension: int, beta_sq: float, oracle_bunched: float) -> dict:
    """Compare oracle bunching mass with the closed-form P_double = (1 + |beta|^2) / N."""
    closed = (1 + beta_sq) / dimension
    return {
        "oracle_bunched": oracle_bunched,
        "closed_form_p_double": closed,
        "ratio": closed / oracle_bunched if oracle_bunched > 0 else float("inf"),
        "normalized_expectation": (1 + beta_sq) / (2 * dimension),
    }
