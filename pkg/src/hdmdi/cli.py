"""Command-line front-end: rate sweeps, optimizer queries, Monte Carlo runs and oracle tables.

Every subcommand emits one table, either CSV preceded by ``# key: value``
metadata lines or a single JSON object (``--format object``).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analytics import (
    config_survival_prob,
    dephasing_factor,
    rate_breakdown,
    secret_rate,
    x_outcome_probs,
)
from .errors import ConfigError, DomainError, InsufficientStatisticsError
from .model import (
    DEFAULT_LOSS_DB_PER_KM,
    DEFAULT_SIGMA,
    BasisKind,
    ChannelParams,
    DetectorParams,
    Encoding,
    NoiseParams,
    PhaseModel,
    ProtocolConfig,
    TimingParams,
    build_basis,
)
from .saturation import (
    closed_form_max,
    optimal_dimension,
    optimize_pulse_spacing,
    rate_with_deadtime,
)
from .simulator import binomial_agreement, run_session
from .tables import render
from .twophoton import PhotonState, bunching_diagnostic, network_output, sample_categories

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_INSUFFICIENT = 0, 1, 2, 3

RATES_COLUMNS = [
    "distance_km",
    "dimension",
    "encoding",
    "p_s",
    "f_n",
    "eps_x",
    "eps_z",
    "r_p_bits_per_use",
    "raw_rate_bits_per_s",
    "raw_rate_per_detector_bits_per_s",
    "secret_rate_bits_per_s",
]
OPTIMIZE_COLUMNS = [
    "dimension",
    "optimal_pulse_sep_s",
    "constrained",
    "raw_bits_per_deadtime",
    "raw_rate_bits_per_s",
    "raw_rate_per_detector_bits_per_s",
]
SIMULATE_COLUMNS = ["quantity", "successes", "trials", "estimate", "std_error", "analytic", "z_score", "within_3se"]
ORACLE_COLUMNS = ["category", "bin_i", "bin_j", "label", "mass"]

# settings shared by every subcommand: name -> (type, default); None means derived
PARAMS = {
    "dimension": (int, 2),
    "encoding": (str, "space"),
    "distance_km": (float, 0.0),
    "alpha_db_per_km": (float, DEFAULT_LOSS_DB_PER_KM),
    "eta": (float, 0.145),
    "pdc": (float, 1e-6),
    "sigma": (float, None),
    "beta_sq": (float, 0.85),
    "phase_model": (str, None),
    "dead_time_s": (float, 20e-9),
    "min_pulse_sep_s": (float, 200e-12),
    "pulse_sep_s": (float, None),
    "basis_prob": (float, 0.5),
    "ec_inefficiency": (float, 1.0),
    "rounds": (int, 1_000_000),
    "seed": (int, 0),
    "sweep": (str, None),
    "format": (str, "csv"),
    "output": (str, None),
    "max_dimension": (int, 40),
    "trials": (int, 100_000),
    "alice": (str, "X:0"),
    "bob": (str, "X:0"),
    "abort_threshold": (float, None),
    "workers": (int, 1),
}
SWEEP_VARIABLES = ("distance", "dimension", "pulse_sep", "sigma")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# --- settings ------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    start: float
    stop: float
    steps: int
    scale: str = "lin"

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if self.steps < 2:
            raise ConfigError("sweep needs at least 2 steps")
        if not self.start < self.stop:
            raise ConfigError("sweep needs start < stop")
        if self.scale not in ("lin", "log"):
            raise ConfigError(f"sweep scale must be lin or log, got {self.scale!r}")
        if self.scale == "log" and self.start <= 0:
            raise ConfigError("log sweep needs a positive range")

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        parts = text.split(":")
        if len(parts) not in (4, 5):
            raise ConfigError(f"sweep must look like var:start:stop:steps[:lin|log], got {text!r}")
        try:
            start, stop, steps = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise ConfigError(f"bad sweep numbers in {text!r}") from exc
        return cls(parts[0], start, stop, steps, parts[4] if len(parts) == 5 else "lin")

    def values(self) -> list:
        if self.scale == "log":
            grid = np.geomspace(self.start, self.stop, self.steps)
        else:
            grid = np.linspace(self.start, self.stop, self.steps)
        if self.variable == "dimension":
            return sorted({int(round(v)) for v in grid})
        return [float(v) for v in grid]


def load_config_file(path: str) -> dict:
    """Flat JSON object whose keys are flag names (dashes or underscores)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a single flat object")
    out = {}
    for key, value in doc.items():
        name = key.replace("-", "_").replace(".", "_")
        if name not in PARAMS or name == "config":
            raise ConfigError(f"unknown config key {key!r}")
        kind = PARAMS[name][0]
        try:
            out[name] = None if value is None else kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} has invalid value {value!r}") from exc
    return out


def resolve_settings(flags: dict, config_path: str | None = None) -> dict:
    """Merge defaults, config file and flags, later sources winning."""
    settings = {name: default for name, (_, default) in PARAMS.items()}
    explicit = set()
    if config_path:
        file_values = load_config_file(config_path)
        settings.update(file_values)
        explicit |= set(file_values)
    given = {k: v for k, v in flags.items() if k in PARAMS and v is not None}
    settings.update(given)
    explicit |= set(given)
    settings["_explicit"] = frozenset(explicit)
    return settings


def build_config(settings: dict) -> ProtocolConfig:
    try:
        encoding = Encoding(settings["encoding"])
    except ValueError as exc:
        raise ConfigError(f"encoding must be space or time, got {settings['encoding']!r}") from exc
    sigma = settings["sigma"]
    if sigma is None:
        sigma = DEFAULT_SIGMA[encoding.value]
    try:
        phase_model = PhaseModel(settings["phase_model"] or PhaseModel.for_encoding(encoding))
    except ValueError as exc:
        raise ConfigError(f"unknown phase model {settings['phase_model']!r}") from exc
    min_sep = settings["min_pulse_sep_s"]
    pulse_sep = settings["pulse_sep_s"] if settings["pulse_sep_s"] is not None else min_sep
    return ProtocolConfig(
        dimension=settings["dimension"],
        encoding=encoding,
        basis_prob=settings["basis_prob"],
        channel=ChannelParams(
            distance_km=settings["distance_km"],
            loss_db_per_km=settings["alpha_db_per_km"],
            efficiency=settings["eta"],
        ),
        noise=NoiseParams(sigma=sigma, beta_sq=settings["beta_sq"], phase_model=phase_model),
        detector=DetectorParams(dark_count=settings["pdc"], dead_time=settings["dead_time_s"]),
        timing=TimingParams(pulse_sep=pulse_sep, min_pulse_sep=min_sep),
        ec_inefficiency=settings["ec_inefficiency"],
    )


def _apply_sweep(settings: dict, variable: str, value) -> dict:
    key = {"distance": "distance_km", "dimension": "dimension",
           "pulse_sep": "pulse_sep_s", "sigma": "sigma"}[variable]
    out = dict(settings)
    out[key] = value
    if variable == "pulse_sep":
        # a swept spacing below the hardware floor lowers the floor with it
        out["min_pulse_sep_s"] = min(value, settings["min_pulse_sep_s"])
    return out


def config_meta(config: ProtocolConfig, settings: dict) -> dict:
    alpha_source = "user" if "alpha_db_per_km" in settings["_explicit"] else "default"
    return {
        "hdmdi_version": __version__,
        "encoding": config.encoding,
        "dimension": config.dimension,
        "distance_km": config.channel.distance_km,
        "alpha_db_per_km": config.channel.loss_db_per_km,
        "alpha_db_per_km_source": alpha_source,
        "eta": config.channel.efficiency,
        "pdc": config.detector.dark_count,
        "sigma": config.noise.sigma,
        "phase_model": config.noise.phase_model,
        "beta_sq": config.noise.beta_sq,
        "dead_time_s": config.detector.dead_time,
        "min_pulse_sep_s": config.timing.min_pulse_sep,
        "pulse_sep_s": config.timing.pulse_sep,
        "basis_prob": config.basis_prob,
        "ec_inefficiency": config.ec_inefficiency,
    }


# --- commands --------------------------------------------------------------------


def rates_row(config: ProtocolConfig) -> dict:
    rb = rate_breakdown(config)
    sat = rate_with_deadtime(config, p_s=rb.p_s)
    return {
        "distance_km": config.channel.distance_km,
        "dimension": config.dimension,
        "encoding": config.encoding.value,
        "p_s": rb.p_s,
        "f_n": rb.x_outcomes.f_n,
        "eps_x": rb.eps_x,
        "eps_z": rb.eps_z,
        "r_p_bits_per_use": rb.r_p_z,
        "raw_rate_bits_per_s": sat.raw_rate,
        "raw_rate_per_detector_bits_per_s": sat.raw_rate_per_detector,
        "secret_rate_bits_per_s": secret_rate(sat.raw_rate, rb.eps_x, rb.eps_z, config.ec_inefficiency),
    }


def cmd_rates(settings: dict):
    sweep = SweepSpec.parse(settings["sweep"]) if settings["sweep"] else None
    base = build_config(settings)
    points = [settings] if sweep is None else [_apply_sweep(settings, sweep.variable, v) for v in sweep.values()]
    rows = [rates_row(build_config(p)) for p in points]
    meta = config_meta(base, settings)
    meta["command"] = "rates"
    if sweep is not None:
        meta["sweep"] = settings["sweep"]
    return RATES_COLUMNS, rows, meta, EXIT_OK


def cmd_optimize(settings: dict):
    config = build_config(settings)
    p_s = config_survival_prob(config)
    tau_d, min_sep, enc = config.detector.dead_time, config.timing.min_pulse_sep, config.encoding
    meta = config_meta(config, settings)
    meta["command"] = "optimize"
    meta["p_s"] = p_s
    rows = []
    for n in range(2, max(settings["max_dimension"], 2) + 1):
        sat = rate_with_deadtime(config.replace(dimension=n), p_s=p_s)
        rows.append({
            "dimension": n,
            "optimal_pulse_sep_s": sat.optimal_pulse_sep,
            "constrained": sat.constrained,
            "raw_bits_per_deadtime": sat.raw_bits,
            "raw_rate_bits_per_s": sat.raw_rate,
            "raw_rate_per_detector_bits_per_s": sat.raw_rate_per_detector,
        })
    best = max(rows, key=lambda r: r["raw_rate_per_detector_bits_per_s"])
    if tau_d == 0:
        meta["saturation"] = "inactive"
        meta["n_opt_real"] = 2.0
        meta["n_opt_rounded"] = 2
    else:
        opt = optimize_pulse_spacing(config.dimension, p_s, tau_d, min_sep, enc)
        n_opt = optimal_dimension(p_s, tau_d, min_sep)
        meta["saturation"] = "active"
        meta["optimal_pulse_sep_s"] = opt.pulse_sep
        meta["constrained"] = opt.constrained
        meta["closed_form_max_bits_per_s"] = closed_form_max(config.dimension, p_s, tau_d, enc)
        meta["numeric_max_bits_per_s"] = opt.raw_bits / tau_d
        meta["n_opt_real"] = n_opt
        meta["n_opt_rounded"] = max(2, int(math.floor(n_opt + 0.5)))
    meta["argmax_dimension_per_detector"] = best["dimension"]
    return OPTIMIZE_COLUMNS, rows, meta, EXIT_OK


def _sim_row(name, k, n, estimate, se, analytic):
    row = {"quantity": name, "successes": k, "trials": n, "estimate": estimate, "std_error": se,
           "analytic": analytic, "z_score": None, "within_3se": None}
    if analytic is not None and n:
        agreement = binomial_agreement(k, n, analytic)
        row["z_score"] = agreement.z
        row["within_3se"] = agreement.ok
    return row


def cmd_simulate(settings: dict):
    config = build_config(settings)
    if settings["rounds"] < 1:
        raise ConfigError("rounds must be >= 1")
    stats = run_session(config, settings["rounds"], abort_threshold=settings["abort_threshold"],
                        rng_seed=settings["seed"], workers=settings["workers"])
    rb = rate_breakdown(config)
    # sifted-X fraction is comparable only when every X subspace has a determinate parity
    real_x = build_basis(config.dimension, BasisKind.X).real_flag
    frac_z_se = math.sqrt(rb.r_p_z * (1 - rb.r_p_z) / stats.rounds_zz) if stats.rounds_zz else None
    frac_x_se = math.sqrt(rb.r_p_x * (1 - rb.r_p_x) / stats.rounds_xx) if stats.rounds_xx else None
    rows = [
        _sim_row("eps_z", stats.wrong_z, stats.sifted_z, stats.eps_z_hat, stats.eps_z_se, rb.eps_z),
        _sim_row("eps_x", stats.wrong_x, stats.sifted_x, stats.eps_x_hat, stats.eps_x_se, rb.eps_x),
        _sim_row("sifted_z_fraction", stats.sifted_z, stats.rounds_zz,
                 stats.sifted_z / stats.rounds_zz if stats.rounds_zz else None, frac_z_se, rb.r_p_z),
        _sim_row("sifted_x_fraction", stats.sifted_x, stats.rounds_xx,
                 stats.sifted_x / stats.rounds_xx if stats.rounds_xx else None, frac_x_se,
                 rb.r_p_x if real_x else None),
    ]
    meta = config_meta(config, settings)
    meta.update({
        "command": "simulate",
        "seed": settings["seed"],
        "rounds_total": stats.rounds_total,
        "rounds_zz": stats.rounds_zz,
        "rounds_xx": stats.rounds_xx,
        "coincidences": stats.coincidences,
        "x_indeterminate": stats.x_indeterminate,
        "aborted": stats.aborted,
        "insufficient": stats.insufficient,
        "key_length": stats.key_length,
    })
    for key, value in stats.event_counts.items():
        meta[f"events_{key}"] = value
    code = EXIT_INSUFFICIENT if stats.insufficient else EXIT_OK
    return SIMULATE_COLUMNS, rows, meta, code


def parse_state(text: str, dimension: int) -> np.ndarray:
    """``Z:k`` or ``X:k`` names the k-th vector of that basis."""
    try:
        kind, index = text.split(":")
        basis = build_basis(dimension, BasisKind(kind.upper()))
        index = int(index)
    except ValueError as exc:
        raise ConfigError(f"state must look like Z:k or X:k, got {text!r}") from exc
    if not 0 <= index < dimension:
        raise ConfigError(f"state index {index} out of range for dimension {dimension}")
    return basis[index]


def cmd_oracle(settings: dict):
    config = build_config(settings)
    n, noise = config.dimension, config.noise
    alice, bob = parse_state(settings["alice"], n), parse_state(settings["bob"], n)
    exact = noise.sigma == 0 and noise.beta_sq in (0.0, 1.0)
    if exact:
        dist = network_output(PhotonState(alice), PhotonState(bob, party="bob"),
                              indistinguishable=noise.beta_sq == 1.0)
    else:
        dist = sample_categories(alice, bob, noise, settings["trials"], rng_seed=settings["seed"])
    rows = [dict(zip(ORACLE_COLUMNS, r)) for r in dist.rows()]
    meta = config_meta(config, settings)
    meta.update({"command": "oracle", "alice": settings["alice"], "bob": settings["bob"],
                 "mode": "exact" if exact else "sampled", "trials": dist.trials, "seed": settings["seed"]})
    for key, value in dist.aggregates().items():
        meta[f"mass_{key}"] = value
    for key, value in sorted(dist.std_errors.items()):
        meta[f"se_{key}"] = value
    both_x = settings["alice"].upper().startswith("X") and settings["bob"].upper().startswith("X")
    if both_x:
        xo = x_outcome_probs(n, noise.beta_sq, dephasing_factor(n, noise.sigma, noise.phase_model))
        meta["analytic_p_good"] = xo.p_good
        meta["analytic_p_bad"] = xo.p_bad
        for name, observed, expected in (("correct", dist.correct, xo.p_good), ("wrong", dist.wrong, xo.p_bad)):
            se = dist.std_errors.get(name)
            if se:
                meta[f"z_{name}"] = (observed - expected) / se
        diag = bunching_diagnostic(n, noise.beta_sq, dist.total_bunched)
        for key, value in diag.items():
            meta[f"p_double_{key}"] = value
    return ORACLE_COLUMNS, rows, meta, EXIT_OK


COMMANDS = {
    "rates": (cmd_rates, "analytic QBERs and key rates, optionally swept"),
    "optimize": (cmd_optimize, "dead-time optimum: pulse spacing and dimension"),
    "simulate": (cmd_simulate, "Monte Carlo session with analytic comparison"),
    "oracle": (cmd_oracle, "two-photon outcome distribution"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdmdi", description="High-dimensional MDI-QKD rate and simulation tool.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    for name, (kind, _) in PARAMS.items():
        flag = "--" + name.replace("_", "-")
        common.add_argument(flag, dest=name, type=kind, default=None)
    common.add_argument("--config", dest="config", default=None, help="JSON file of flag values")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def run(argv=None, stdout=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    try:
        args = build_parser().parse_args(argv)
        settings = resolve_settings(vars(args), args.config)
        if settings["format"] not in ("csv", "object"):
            raise ConfigError(f"format must be csv or object, got {settings['format']!r}")
        columns, rows, meta, code = COMMANDS[args.command][0](settings)
        text = render(columns, rows, meta, settings["format"])
        if settings["output"]:
            with open(settings["output"], "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            stdout.write(text)
        if code == EXIT_INSUFFICIENT:
            print("hdmdi: insufficient statistics (no sifted rounds in a basis)", file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"hdmdi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientStatisticsError as exc:
        print(f"hdmdi: insufficient statistics: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (DomainError, ValueError) as exc:
        print(f"hdmdi: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
