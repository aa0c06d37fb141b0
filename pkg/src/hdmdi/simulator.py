"""Event-level Monte Carlo of the protocol: rounds, sessions and dead-time timelines.

A round: both parties pick a basis (Z with probability ``basis_prob``) and a
uniform state, each photon survives with probability P_s, surviving photons are
routed through the beam-splitter network with sampled channel phases and
distinguishability, and every detection mode dark-clicks with probability
P_dc.  Charlie announces coincidences; the parties sift.

Z key bits: for a coincidence in bins ``i < j`` Alice's bit is 0 when she sent
``i`` and Bob's bit is 0 when he sent ``j``, so honest rounds agree.  A party
whose state is not in ``{i, j}`` rejects the announcement and the round is not
sifted.  X rounds are sifted when the announced subspace has a determinate
expected parity, and count as errors when the observed parity differs.

``run_session`` only simulates rounds that can produce two clicks (at least
two photons plus dark clicks); the rest are counted as no-event rounds.  The
number of such rounds is drawn exactly from the multinomial over
(basis pair, surviving photons, dark clicks), so the statistics are those of
the full round-by-round process.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .analytics import (
    RateBreakdown,
    config_survival_prob,
    secret_fraction,
    secret_rate,
)
from .errors import DomainError, InsufficientStatisticsError
from .model import (
    BUNCHED,
    BasisKind,
    DetectionEvent,
    Encoding,
    EventKind,
    Parity,
    ProtocolConfig,
    build_basis,
    classify_event,
    expected_parity,
)
from .twophoton import pair_probabilities, sample_phases, single_photon_probabilities

# two-sided tail mass beyond 3 standard deviations of a normal variate
THREE_SIGMA_TAIL = 2 * sps.norm.sf(3.0)
DEFAULT_CHUNK_ROUNDS = 1 << 22


@dataclass(frozen=True)
class RoundRecord:
    alice_basis: BasisKind
    bob_basis: BasisKind
    alice_index: int
    bob_index: int
    event: DetectionEvent
    sifted: bool
    key_bit_alice: int | None = None
    key_bit_bob: int | None = None
    error_flag: bool | None = None


@dataclass(frozen=True)
class SessionStats:
    rounds_total: int
    rounds_zz: int
    rounds_xx: int
    coincidences: int
    sifted_z: int
    sifted_x: int
    wrong_z: int
    wrong_x: int
    x_indeterminate: int
    eps_z_hat: float | None
    eps_x_hat: float | None
    eps_z_se: float | None
    eps_x_se: float | None
    aborted: bool
    insufficient: bool
    key_length: int
    event_counts: dict = field(default_factory=dict)

    @property
    def sifted_z_fraction(self) -> float:
        return self.sifted_z / self.rounds_zz if self.rounds_zz else float("nan")

    @property
    def sifted_x_fraction(self) -> float:
        return self.sifted_x / self.rounds_xx if self.rounds_xx else float("nan")


@dataclass(frozen=True)
class TimelineStats:
    pulses_sent: int
    slots: int
    dead_fraction: np.ndarray  # per physical detector
    coincidences: int
    deadtime_windows: float
    raw_per_deadtime: float
    dead_slots: int  # slots a detector stays dark after a click


def _state_field(basis, index, rng, config):
    n = config.dimension
    amps = basis[index]
    phases = sample_phases(rng, 1, n, config.noise.sigma, config.noise.phase_model)[0]
    return amps, amps * np.exp(1j * phases)


def _z_bits(i: int, j: int, alice_index: int, bob_index: int):
    """Key bits for announced bins ``i < j``; ``None`` when a party rejects."""
    if alice_index not in (i, j) or bob_index not in (i, j):
        return None, None
    return int(alice_index != i), int(bob_index != j)


def run_round(config: ProtocolConfig, rng: np.random.Generator, p_s: float | None = None) -> RoundRecord:
    """Simulate one protocol round in full, without skipping quiet rounds."""
    n = config.dimension
    if p_s is None:
        p_s = config_survival_prob(config)
    pb = config.basis_prob
    bases = [BasisKind.Z if rng.random() < pb else BasisKind.X for _ in range(2)]
    idx = [int(rng.integers(n)) for _ in range(2)]
    states = [build_basis(n, b) for b in bases]
    (a_amp, a_field), (b_amp, b_field) = (
        _state_field(states[k], idx[k], rng, config) for k in range(2)
    )
    alive = rng.random(2) < p_s
    indist = rng.random() < config.noise.beta_sq

    clicks: set[int] = set()
    bunched = False
    if alive.all():
        probs = pair_probabilities(a_field[None], b_field[None], indist)[0]
        flat = probs.ravel()
        pick = int(rng.choice(flat.size, p=flat / flat.sum()))
        m1, m2 = divmod(pick, 2 * n)
        clicks |= {m1, m2}
        bunched = m1 == m2
    elif alive.any():
        field_ = a_field if alive[0] else b_field
        p = single_photon_probabilities(field_)[0]
        clicks.add(int(rng.choice(2 * n, p=p / p.sum())))
    darks = np.flatnonzero(rng.random(2 * n) < config.detector.dark_count)
    clicks |= set(int(m) for m in darks)

    cls = classify_event(clicks, n, config.encoding)
    if bunched and len(clicks) == 1:
        cls = BUNCHED
    event = DetectionEvent(frozenset(clicks), cls)

    if cls.kind is not EventKind.VALID or bases[0] is not bases[1]:
        return RoundRecord(bases[0], bases[1], idx[0], idx[1], event, False)
    if bases[0] is BasisKind.Z:
        bit_a, bit_b = _z_bits(cls.i, cls.j, idx[0], idx[1])
        if bit_a is None:
            return RoundRecord(bases[0], bases[1], idx[0], idx[1], event, False)
        return RoundRecord(bases[0], bases[1], idx[0], idx[1], event, True, bit_a, bit_b, bit_a != bit_b)
    want = expected_parity(a_amp, b_amp, cls.i, cls.j)
    if want is Parity.INDETERMINATE:
        return RoundRecord(bases[0], bases[1], idx[0], idx[1], event, False)
    return RoundRecord(bases[0], bases[1], idx[0], idx[1], event, True, error_flag=cls.parity is not want)


# --- batched session sampler -------------------------------------------------


def _activity_classes(n: int, p_s: float, p_dc: float):
    """Rows ``(alice_alive, bob_alive, darks)`` and probabilities, active ones flagged."""
    m = np.arange(2 * n + 1)
    dark_pmf = sps.binom.pmf(m, 2 * n, p_dc)
    rows, probs = [], []
    for sa in (0, 1):
        for sb in (0, 1):
            p_photons = (p_s if sa else 1 - p_s) * (p_s if sb else 1 - p_s)
            for k, pk in zip(m, dark_pmf):
                rows.append((sa, sb, int(k)))
                probs.append(p_photons * pk)
    rows = np.array(rows)
    probs = np.array(probs)
    active = rows.sum(axis=1) >= 2
    return rows, probs / probs.sum(), active


def _sample_pairs(probs: np.ndarray, rng: np.random.Generator):
    t, m, _ = probs.shape
    flat = probs.reshape(t, m * m)
    cum = np.cumsum(flat, axis=1)
    u = rng.random(t) * cum[:, -1]
    pick = (cum <= u[:, None]).sum(axis=1)
    pick = np.minimum(pick, m * m - 1)
    return pick // m, pick % m


def _sample_modes(probs: np.ndarray, rng: np.random.Generator):
    cum = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cum[:, -1]
    return np.minimum((cum <= u[:, None]).sum(axis=1), probs.shape[1] - 1)


def _simulate_chunk(args) -> Counter:
    config, p_s, n_rounds, seed = args
    rng = np.random.default_rng(seed)
    n = config.dimension
    pb = config.basis_prob
    counts: Counter = Counter()
    pair_names = [("Z", "Z"), ("Z", "X"), ("X", "Z"), ("X", "X")]
    pair_counts = rng.multinomial(n_rounds, [pb * pb, pb * (1 - pb), (1 - pb) * pb, (1 - pb) ** 2])
    rows, class_probs, active = _activity_classes(n, p_s, config.detector.dark_count)

    bases = {k: build_basis(n, k) for k in BasisKind}
    for (ba, bb), n_pair in zip(pair_names, pair_counts):
        counts[f"rounds_{ba}{bb}".lower()] += int(n_pair)
        class_counts = rng.multinomial(n_pair, class_probs)
        n_active = int(class_counts[active].sum())
        counts["no_event_quiet"] += int(n_pair) - n_active
        if n_active == 0:
            continue
        cls = np.repeat(rows[active], class_counts[active], axis=0)
        sa, sb, n_dark = cls[:, 0].astype(bool), cls[:, 1].astype(bool), cls[:, 2]
        idx_a = rng.integers(n, size=n_active)
        idx_b = rng.integers(n, size=n_active)
        amp_a = bases[BasisKind(ba)].vectors[idx_a]
        amp_b = bases[BasisKind(bb)].vectors[idx_b]
        ph_a = sample_phases(rng, n_active, n, config.noise.sigma, config.noise.phase_model)
        ph_b = sample_phases(rng, n_active, n, config.noise.sigma, config.noise.phase_model)
        field_a = amp_a * np.exp(1j * ph_a)
        field_b = amp_b * np.exp(1j * ph_b)
        indist = rng.random(n_active) < config.noise.beta_sq

        clicks = np.zeros((n_active, 2 * n), dtype=bool)
        rows_idx = np.arange(n_active)
        both = sa & sb
        if both.any():
            m1, m2 = _sample_pairs(pair_probabilities(field_a[both], field_b[both], indist[both]), rng)
            clicks[rows_idx[both], m1] = True
            clicks[rows_idx[both], m2] = True
        for alive, fld in ((sa & ~sb, field_a), (sb & ~sa, field_b)):
            if alive.any():
                modes = _sample_modes(single_photon_probabilities(fld[alive]), rng)
                clicks[rows_idx[alive], modes] = True
        has_dark = n_dark > 0
        if has_dark.any():
            order = np.argsort(rng.random((int(has_dark.sum()), 2 * n)), axis=1)
            keep = np.arange(2 * n)[None, :] < n_dark[has_dark][:, None]
            r = np.repeat(rows_idx[has_dark], n_dark[has_dark])
            clicks[r, order[keep]] = True

        n_clicks = clicks.sum(axis=1)
        two = n_clicks == 2
        counts["no_event_active"] += int((n_clicks < 2).sum())
        counts["multiclick"] += int((n_clicks > 2).sum())
        if not two.any():
            continue
        modes = np.sort(np.argsort(~clicks[two], axis=1, kind="stable")[:, :2], axis=1)
        bin_i, port_i = np.divmod(modes[:, 0], 2)
        bin_j, port_j = np.divmod(modes[:, 1], 2)
        valid = bin_i != bin_j
        counts["same_bin"] += int((~valid).sum())
        counts["coincidences"] += int(valid.sum())
        if ba != bb or not valid.any():
            continue
        i, j = bin_i[valid], bin_j[valid]
        plus = port_i[valid] == port_j[valid]
        ia, ib = idx_a[two][valid], idx_b[two][valid]
        if ba == "Z":
            ok = ((ia == i) | (ia == j)) & ((ib == i) | (ib == j))
            bit_a = ia != i
            bit_b = ib != j
            counts["sifted_z"] += int(ok.sum())
            counts["wrong_z"] += int((ok & (bit_a != bit_b)).sum())
        else:
            a, b = amp_a[two][valid], amp_b[two][valid]
            r = np.arange(len(i))
            phi = a[r, i] * b[r, j] * np.conj(a[r, j] * b[r, i])
            mag = np.abs(phi)
            unit = np.where(mag > 1e-9, phi / np.where(mag > 0, mag, 1), 0)
            want_plus = np.abs(unit - 1) < 1e-9
            want_minus = np.abs(unit + 1) < 1e-9
            det = want_plus | want_minus
            counts["sifted_x"] += int(det.sum())
            counts["x_indeterminate"] += int((~det).sum())
            counts["wrong_x"] += int((det & (plus != want_plus)).sum())
    return counts


def _chunk_sizes(rounds: int, chunk_rounds: int) -> list[int]:
    sizes = [chunk_rounds] * (rounds // chunk_rounds)
    if rounds % chunk_rounds:
        sizes.append(rounds % chunk_rounds)
    return sizes


def _binomial_se(k: int, n: int) -> float | None:
    if n == 0:
        return None
    p = k / n
    return math.sqrt(p * (1 - p) / n)


def run_session(config: ProtocolConfig, rounds: int, abort_threshold: float | None = None,
                rng_seed: int = 0, workers: int = 1, chunk_rounds: int = DEFAULT_CHUNK_ROUNDS,
                p_s: float | None = None) -> SessionStats:
    """Run ``rounds`` protocol rounds and aggregate sifting and error statistics.

    Rounds are split into chunks of ``chunk_rounds`` with child seeds spawned
    from ``rng_seed``; the result is identical for any ``workers`` count.
    Without ``abort_threshold`` the session aborts when the estimated secret
    fraction is not positive; otherwise when ``eps_x_hat`` exceeds it.  The key
    length is ``floor(sifted_z * (1 - H(eps_x) - f H(eps_z)))``, clamped at 0.
    """
    if rounds < 1:
        raise DomainError("rounds must be >= 1")
    if p_s is None:
        p_s = config_survival_prob(config)
    sizes = _chunk_sizes(int(rounds), int(chunk_rounds))
    seeds = np.random.SeedSequence(rng_seed).spawn(len(sizes))
    tasks = [(config, p_s, size, seed) for size, seed in zip(sizes, seeds)]
    total: Counter = Counter()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for c in pool.map(_simulate_chunk, tasks):
                total.update(c)
    else:
        for task in tasks:
            total.update(_simulate_chunk(task))

    sifted_z, sifted_x = total["sifted_z"], total["sifted_x"]
    wrong_z, wrong_x = total["wrong_z"], total["wrong_x"]
    eps_z = wrong_z / sifted_z if sifted_z else None
    eps_x = wrong_x / sifted_x if sifted_x else None
    insufficient = eps_z is None or eps_x is None

    key_length, aborted = 0, False
    if not insufficient:
        fraction = secret_fraction(eps_x, eps_z, config.ec_inefficiency)
        aborted = fraction <= 0 if abort_threshold is None else eps_x > abort_threshold
        if not aborted:
            key_length = max(0, math.floor(sifted_z * fraction))

    events = {
        "no_event": total["no_event_quiet"] + total["no_event_active"],
        "valid": total["coincidences"],
        "same_bin": total["same_bin"],
        "multiclick": total["multiclick"],
    }
    return SessionStats(
        rounds_total=int(rounds),
        rounds_zz=total["rounds_zz"],
        rounds_xx=total["rounds_xx"],
        coincidences=total["coincidences"],
        sifted_z=sifted_z,
        sifted_x=sifted_x,
        wrong_z=wrong_z,
        wrong_x=wrong_x,
        x_indeterminate=total["x_indeterminate"],
        eps_z_hat=eps_z,
        eps_x_hat=eps_x,
        eps_z_se=_binomial_se(wrong_z, sifted_z),
        eps_x_se=_binomial_se(wrong_x, sifted_x),
        aborted=aborted,
        insufficient=insufficient,
        key_length=key_length,
        event_counts=events,
    )


def estimate_rates(stats: SessionStats, config: ProtocolConfig) -> RateBreakdown:
    """Empirical counterpart of ``analytics.rate_breakdown``."""
    if stats.insufficient or not stats.rounds_zz or not stats.rounds_xx:
        raise InsufficientStatisticsError("session has no sifted rounds in one basis")
    if stats.aborted:
        raise DomainError("session aborted; no rate to estimate")
    r_p_z = stats.sifted_z / stats.rounds_zz
    r_p_x = stats.sifted_x / stats.rounds_xx
    return RateBreakdown(
        eps_x=stats.eps_x_hat,
        eps_z=stats.eps_z_hat,
        r_p_z=r_p_z,
        r_p_x=r_p_x,
        r=secret_rate(r_p_z, stats.eps_x_hat, stats.eps_z_hat, config.ec_inefficiency),
        p_s=config_survival_prob(config),
        eps_x_se=stats.eps_x_se,
        eps_z_se=stats.eps_z_se,
        r_p_z_se=_binomial_se(stats.sifted_z, stats.rounds_zz),
        r_p_x_se=_binomial_se(stats.sifted_x, stats.rounds_xx),
    )


@dataclass(frozen=True)
class Agreement:
    z: float
    ok: bool
    expected_count: float
    p_value: float | None = None  # exact test, used when counts are small


def binomial_agreement(k: int, n: int, p0: float, nsigma: float = 3.0,
                       min_variance: float = 9.0) -> Agreement:
    """Is ``k`` successes in ``n`` trials within ``nsigma`` standard errors of ``p0``?

    The standard error is the one implied by ``p0``.  When the expected
    variance ``n p0 (1 - p0)`` is below ``min_variance`` the normal
    approximation is replaced by an exact two-sided binomial test at the
    equivalent tail mass.
    """
    if n <= 0:
        raise InsufficientStatisticsError("no trials to compare")
    var = n * p0 * (1 - p0)
    diff = k - n * p0
    if var > 0:
        z = diff / math.sqrt(var)
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    if var >= min_variance:
        return Agreement(float(z), bool(abs(z) <= nsigma), float(n * p0))
    tail = 2 * sps.norm.sf(nsigma)
    p_value = float(sps.binomtest(int(k), int(n), p0).pvalue) if 0 < p0 < 1 else float(diff == 0)
    return Agreement(float(z), bool(p_value >= tail), float(n * p0), p_value)


# --- dead-time timeline ------------------------------------------------------


def simulate_deadtime_timeline(config: ProtocolConfig, total_pulses: int, rng_seed: int = 0,
                               p_s: float | None = None) -> TimelineStats:
    """Discrete-time detector timeline with non-paralyzable dead time.

    Every qudit is sent in the Z basis.  A detector that registers a click is
    dark for the next ``floor(tau_d / T_p)`` pulse slots; photons and dark
    counts arriving meanwhile are lost and do not extend the dark period.  In
    the time encoding a qudit occupies N consecutive slots read out by two
    physical detectors.  Raw bits are coincidences consistent with both
    parties' states, reported per dead-time window of ``tau_d / T_p`` slots.
    """
    tau_d = config.detector.dead_time
    t_p = config.timing.pulse_sep
    if tau_d <= 0:
        raise DomainError("timeline simulation needs dead_time > 0")
    if p_s is None:
        p_s = config_survival_prob(config)
    n = config.dimension
    time_enc = config.encoding is Encoding.TIME
    qudits = int(total_pulses) // n if time_enc else int(total_pulses)
    if qudits < 1:
        raise DomainError("total_pulses too small for one qudit")
    rng = np.random.default_rng(rng_seed)
    dead_slots = int(math.floor(tau_d / t_p + 1e-9))

    idx_a = rng.integers(n, size=qudits)
    idx_b = rng.integers(n, size=qudits)
    sa = rng.random(qudits) < p_s
    sb = rng.random(qudits) < p_s
    indist = rng.random(qudits) < config.noise.beta_sq
    eye = np.eye(n, dtype=complex)
    clicks = np.zeros((qudits, 2 * n), dtype=bool)
    rows = np.arange(qudits)
    both = sa & sb
    if both.any():
        m1, m2 = _sample_pairs(pair_probabilities(eye[idx_a[both]], eye[idx_b[both]], indist[both]), rng)
        clicks[rows[both], m1] = True
        clicks[rows[both], m2] = True
    for alive, idx in ((sa & ~sb, idx_a), (sb & ~sa, idx_b)):
        if alive.any():
            modes = _sample_modes(single_photon_probabilities(eye[idx[alive]]), rng)
            clicks[rows[alive], modes] = True
    clicks |= rng.random((qudits, 2 * n)) < config.detector.dark_count

    n_phys = 2 if time_enc else 2 * n
    free_at = np.zeros(n_phys, dtype=np.int64)  # first slot the detector is alive again
    dead_total = np.zeros(n_phys, dtype=np.int64)
    slots = qudits * n if time_enc else qudits
    coincidences = 0
    for q in np.flatnonzero(clicks.any(axis=1)):
        registered = []
        for mode in np.flatnonzero(clicks[q]):
            b, port = divmod(int(mode), 2)
            if time_enc:
                det, slot = port, q * n + b
            else:
                det, slot = int(mode), q
            if slot >= free_at[det]:
                registered.append(int(mode))
                free_at[det] = slot + 1 + dead_slots
                dead_total[det] += min(dead_slots, slots - slot - 1)
        cls = classify_event(registered, n)
        if cls.kind is EventKind.VALID and _z_bits(cls.i, cls.j, int(idx_a[q]), int(idx_b[q]))[0] is not None:
            coincidences += 1

    uses_per_window = tau_d / (n * t_p) if time_enc else tau_d / t_p
    windows = qudits / uses_per_window
    return TimelineStats(
        pulses_sent=slots,
        slots=slots,
        dead_fraction=dead_total / slots,
        coincidences=coincidences,
        deadtime_windows=windows,
        raw_per_deadtime=coincidences / windows,
        dead_slots=dead_slots,
    )
