"""Batch command-line front end.

Subcommands cover the main pipelines (qfptd, design-pulse, eval-pulse,
classical-fpt, analyze). Every run writes a result file plus a metadata
sidecar carrying the full effective configuration, so outputs are
reproducible byte-for-byte from (config, seed) and self-describing.

Real-time quantities (spontaneous-emission lifetime in seconds, heating
rate in quanta/s) are converted to dimensionless units here and nowhere
else.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classical import ClassicalConfig, classical_moments, simulate_classical_fpt
from .designer import DesignSpec, design_pulse, fidelity_report, objective
from .engine import (
    FptConfig,
    FptdResult,
    SpontEmissionModel,
    escape_probability,
    moments,
    qfptd_ideal,
    qfptd_realistic,
    result_to_csv,
    tail_fit,
)
from .errors import ConfigError, NumericalError, QfptError, TruncationError
from .estimators import (
    escape_with_errors,
    estimate_to_result,
    multinomial_estimate,
    read_trials_csv,
)
from .stepgate import (
    IntensityNoise,
    format_pulse_table,
    perfect_step_measurement,
    read_pulse_table,
)

MAX_SEED = 2 ** 64


def _default_workers() -> int:
    return os.cpu_count() or 1


# --- per-command parameter sets -------------------------------------------------


@dataclass(frozen=True)
class QfptdParams:
    nb: int
    theta: float
    steps: int = 60
    trials: int = 0  # 0 selects the deterministic pipeline
    pulse_table: str | None = None
    noise_sigma_over_w: float = 0.0
    spont_tau_s: float | None = None
    ndot_per_s: float = 86.0
    detection_error: float = 0.0
    seed: int = 0
    n_cut: int | None = None
    mp: int | None = None
    moments: bool = False
    tail_fit_tmin: float | None = None
    workers: int = field(default_factory=_default_workers)
    output_dir: str = "."
    out: str = "qfptd"


@dataclass(frozen=True)
class DesignPulseParams:
    nb: int
    mp: int
    n_range: int = 6
    duration_bound: float | None = None
    restarts: int = 32
    seed: int = 0
    output_dir: str = "."
    out: str = "pulse"


@dataclass(frozen=True)
class EvalPulseParams:
    pulse_table: str
    n_range: int = 6
    noise_sigma_over_w: float = 0.0
    samples: int = 10_000
    seed: int = 0
    output_dir: str = "."
    out: str = "pulse-eval"


@dataclass(frozen=True)
class ClassicalFptParams:
    eb: float
    trials: int
    h0: float = 0.5
    dt: float | None = None
    omega: float = 200.0
    bridge_crossing: bool = False
    seed: int = 0
    workers: int = field(default_factory=_default_workers)
    output_dir: str = "."
    out: str = "classical-fpt"


@dataclass(frozen=True)
class AnalyzeParams:
    trials_csv: str
    theta: float
    steps: int | None = None
    moments: bool = False
    tail_fit_tmin: float | None = None
    output_dir: str = "."
    out: str = "analyze"


_SCHEMAS = {
    "qfptd": QfptdParams,
    "design-pulse": DesignPulseParams,
    "eval-pulse": EvalPulseParams,
    "classical-fpt": ClassicalFptParams,
    "analyze": AnalyzeParams,
}

_REQUIRED = {
    "qfptd": ("nb", "theta"),
    "design-pulse": ("nb", "mp"),
    "eval-pulse": ("pulse_table",),
    "classical-fpt": ("eb", "trials"),
    "analyze": ("trials_csv", "theta"),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: object


def _validate(cfg: RunConfig) -> RunConfig:
    p = cfg.params
    seed = getattr(p, "seed", 0)
    if not 0 <= seed < MAX_SEED:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    for attr in ("pulse_table", "trials_csv"):
        path = getattr(p, attr, None)
        if path is not None and not Path(path).is_file():
            raise ConfigError(f"{attr.replace('_', '-')} file not found: {path}")
    return cfg


def build_config(command: str, values: dict) -> RunConfig:
    """Construct a validated RunConfig; unknown keys are hard errors."""
    if command not in _SCHEMAS:
        raise ConfigError(f"unknown command {command!r}; choose from {sorted(_SCHEMAS)}")
    schema = _SCHEMAS[command]
    names = {f.name for f in dataclasses.fields(schema)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {sorted(unknown)}")
    missing = [k for k in _REQUIRED[command] if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s) for {command}: {missing}")
    try:
        params = schema(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return _validate(RunConfig(command, params))


def parse_config(path) -> RunConfig:
    """Load a JSON run configuration: {"command": ..., <parameters>}."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "command" not in raw:
        raise ConfigError("config must be a JSON object with a 'command' key")
    values = {k: v for k, v in raw.items() if k != "command"}
    return build_config(raw["command"], values)


def config_dict(cfg: RunConfig) -> dict:
    """Effective configuration, round-trippable through parse_config."""
    out = {"command": cfg.command}
    out.update(dataclasses.asdict(cfg.params))
    return out


# --- command implementations ------------------------------------------------------


def _emit(path_prefix: Path, csv_text: str | None, meta: dict, suffix: str = ".csv") -> list[str]:
    path_prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if csv_text is not None:
        data_path = path_prefix.with_suffix(suffix)
        data_path.write_text(csv_text, encoding="utf-8")
        written.append(str(data_path))
    meta_path = path_prefix.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    written.append(str(meta_path))
    return written


def _postprocess(res: FptdResult, p) -> dict:
    extra: dict = {}
    if getattr(p, "moments", False):
        m = moments(res)
        extra["moments"] = {
            "mean": m.mean,
            "second_moment": m.second_moment,
            "censored_fraction": m.censored_fraction,
        }
    tmin = getattr(p, "tail_fit_tmin", None)
    if tmin is not None:
        fit = tail_fit(res, tmin)
        extra["tail_fit"] = {
            "beta": fit.beta,
            "fit_window": list(fit.fit_window),
            "r_squared": fit.r_squared,
            "n_points": fit.n_points,
        }
    return extra


def _select_sequence(path: str, nb: int, mp: int | None):
    seqs = [s for s in read_pulse_table(path) if s.n_b_target == nb]
    if mp is not None:
        seqs = [s for s in seqs if s.m_p == mp]
    if not seqs:
        raise ConfigError(f"no sequence with n_b={nb}" + (f", m_p={mp}" if mp else "") + f" in {path}")
    if len(seqs) > 1:
        raise ConfigError(
            f"{path} has {len(seqs)} sequences with n_b={nb}; disambiguate with --mp "
            f"(available: {sorted(s.m_p for s in seqs)})"
        )
    return seqs[0]


def _run_qfptd(cfg: RunConfig) -> list[str]:
    p: QfptdParams = cfg.params
    fpt_cfg = FptConfig(n_b=p.nb, theta=p.theta, max_steps=p.steps, n_cut=p.n_cut)
    if p.trials == 0:
        res = qfptd_ideal(fpt_cfg)
    else:
        if p.pulse_table is not None:
            meas = _select_sequence(p.pulse_table, p.nb, p.mp)
        else:
            meas = perfect_step_measurement(p.nb, fpt_cfg.space())
        noise = IntensityNoise(p.noise_sigma_over_w) if p.noise_sigma_over_w > 0 else None
        spont = (
            SpontEmissionModel(tau=p.spont_tau_s, ndot=p.ndot_per_s)
            if p.spont_tau_s is not None
            else None
        )
        res = qfptd_realistic(
            fpt_cfg,
            meas,
            trials=p.trials,
            seed=p.seed,
            noise=noise,
            spont=spont,
            detection_error=p.detection_error,
            workers=p.workers,
        )
    meta = {
        "tool": "qfpt",
        "version": __version__,
        "config": config_dict(cfg),
        "results": {
            "mode": res.mode,
            "survivor_remainder": res.survivor_remainder,
            "escape_final": float(escape_probability(res)[-1]),
            **res.meta,
            **_postprocess(res, p),
        },
    }
    return _emit(Path(p.output_dir) / p.out, result_to_csv(res), meta)


def _run_design_pulse(cfg: RunConfig) -> list[str]:
    p: DesignPulseParams = cfg.params
    spec = DesignSpec(
        n_b=p.nb,
        m_p=p.mp,
        n_range=p.n_range,
        duration_bound=p.duration_bound,
        restarts=p.restarts,
        seed=p.seed,
    )
    seq = design_pulse(spec)
    report = fidelity_report(seq, spec)
    meta = {
        "tool": "qfpt",
        "version": __version__,
        "config": config_dict(cfg),
        "results": {
            "objective": objective(seq, spec),
            "noiseless_error": report["noiseless_error"],
            "total_duration": seq.total_duration,
        },
    }
    prefix = Path(p.output_dir) / p.out
    written = _emit(prefix, None, meta)
    table_path = prefix.with_suffix(".txt")
    table_path.write_text(format_pulse_table([seq]), encoding="utf-8")
    return [str(table_path)] + written


def _run_eval_pulse(cfg: RunConfig) -> list[str]:
    p: EvalPulseParams = cfg.params
    seqs = read_pulse_table(p.pulse_table)
    noise = IntensityNoise(p.noise_sigma_over_w) if p.noise_sigma_over_w > 0 else None
    rows = ["n_b,m_p,level,kappa"]
    reports = []
    for seq in seqs:
        spec = DesignSpec(
            n_b=seq.n_b_target,
            m_p=seq.m_p,
            n_range=max(p.n_range, seq.n_b_target + 1),
            seed=p.seed,
            sideband=seq.sideband,
        )
        rep = fidelity_report(seq, spec, noise=noise, samples=p.samples)
        for level, value in enumerate(rep["kappa_profile"]):
            rows.append(f"{seq.n_b_target},{seq.m_p},{level},{value!r}")
        reports.append(
            {
                "n_b": seq.n_b_target,
                "m_p": seq.m_p,
                "noiseless_error": rep["noiseless_error"],
                "noisy_error": rep["noisy_error"],
            }
        )
    meta = {
        "tool": "qfpt",
        "version": __version__,
        "config": config_dict(cfg),
        "results": {"sequences": reports},
    }
    return _emit(Path(p.output_dir) / p.out, "\n".join(rows) + "\n", meta)


def _run_classical(cfg: RunConfig) -> list[str]:
    p: ClassicalFptParams = cfg.params
    ccfg = ClassicalConfig(e_b=p.eb, h0=p.h0, omega=p.omega, dt=p.dt)
    res = simulate_classical_fpt(
        ccfg, trials=p.trials, seed=p.seed, bridge_crossing=p.bridge_crossing, workers=p.workers
    )
    mean_ref, second_ref = classical_moments(ccfg)
    rows = ["trial,fpt"]
    rows.extend(f"{i},{t!r}" for i, t in enumerate(res.samples.tolist()))
    meta = {
        "tool": "qfpt",
        "version": __version__,
        "config": config_dict(cfg),
        "results": {
            "analytic_mean": mean_ref,
            "analytic_second_moment": second_ref,
            "sample_mean": res.mean,
            "sample_second_moment": res.second_moment,
            "mean_stderr": res.mean_stderr,
            "second_stderr": res.second_stderr,
            "censored": res.censored,
            "trials": res.trials,
        },
    }
    return _emit(Path(p.output_dir) / p.out, "\n".join(rows) + "\n", meta)


def _run_analyze(cfg: RunConfig) -> list[str]:
    p: AnalyzeParams = cfg.params
    counts = read_trials_csv(p.trials_csv, max_steps=p.steps)
    est = multinomial_estimate(counts)
    res = estimate_to_result(est, p.theta)
    esc = escape_with_errors(est)
    meta = {
        "tool": "qfpt",
        "version": __version__,
        "config": config_dict(cfg),
        "results": {
            "trials": counts.n,
            "counts": counts.counts.tolist(),
            "censored_fraction": res.survivor_remainder,
            "escape_sigma": esc.sigma.tolist(),
            **_postprocess(res, p),
        },
    }
    return _emit(Path(p.output_dir) / p.out, result_to_csv(res), meta)


_RUNNERS = {
    "qfptd": _run_qfptd,
    "design-pulse": _run_design_pulse,
    "eval-pulse": _run_eval_pulse,
    "classical-fpt": _run_classical,
    "analyze": _run_analyze,
}


def run(cfg: RunConfig) -> list[str]:
    """Dispatch a validated configuration; returns the list of files written."""
    return _RUNNERS[cfg.command](cfg)


# --- argument parsing ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); bad flags are config errors
        raise ConfigError(message)


def _add_common(sub, *, seed=True):
    sub.add_argument("--config", help="JSON config file; explicit flags override it")
    sub.add_argument("--out", help="output file prefix")
    sub.add_argument("--output-dir", dest="output_dir", help="directory for outputs")
    if seed:
        sub.add_argument("--seed", type=int)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qfpt", description="stroboscopic first-passage-time toolkit")
    parser.add_argument("--version", action="version", version=f"qfpt {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    q = subs.add_parser("qfptd", help="first-passage distribution pipelines")
    q.add_argument("--ideal", action="store_true", help="deterministic ideal-projector pipeline")
    q.add_argument("--realistic", action="store_true", help="Monte Carlo measurement model")
    q.add_argument("--nb", type=int)
    q.add_argument("--theta", type=float)
    q.add_argument("--steps", type=int)
    q.add_argument("--trials", type=int)
    q.add_argument("--pulse-table", dest="pulse_table")
    q.add_argument("--mp", type=int, help="select sequence by pulse count")
    q.add_argument("--noise-sigma-over-w", dest="noise_sigma_over_w", type=float)
    q.add_argument("--spont-tau-s", dest="spont_tau_s", type=float)
    q.add_argument("--ndot-per-s", dest="ndot_per_s", type=float)
    q.add_argument(
        "--detection-error",
        dest="detection_error",
        type=float,
        nargs="?",
        const=1e-3,
        help="readout flip probability (bare flag enables the 1e-3 default)",
    )
    q.add_argument("--n-cut", dest="n_cut", type=int)
    q.add_argument("--workers", type=int)
    q.add_argument("--moments", action="store_true", default=None)
    q.add_argument("--tail-fit-tmin", dest="tail_fit_tmin", type=float)
    _add_common(q)

    d = subs.add_parser("design-pulse", help="synthesize a composite step pulse")
    d.add_argument("--nb", type=int)
    d.add_argument("--mp", type=int)
    d.add_argument("--n-range", dest="n_range", type=int)
    d.add_argument("--duration-bound", dest="duration_bound", type=float)
    d.add_argument("--restarts", type=int)
    _add_common(d)

    e = subs.add_parser("eval-pulse", help="score sequences from a pulse table")
    e.add_argument("--pulse-table", dest="pulse_table")
    e.add_argument("--n-range", dest="n_range", type=int)
    e.add_argument("--noise-sigma-over-w", dest="noise_sigma_over_w", type=float)
    e.add_argument("--samples", type=int)
    _add_common(e)

    c = subs.add_parser("classical-fpt", help="noise-driven oscillator escape sampling")
    c.add_argument("--eb", type=float)
    c.add_argument("--h0", type=float)
    c.add_argument("--dt", type=float)
    c.add_argument("--omega", type=float)
    c.add_argument("--trials", type=int)
    c.add_argument("--bridge-crossing", dest="bridge_crossing", action="store_true", default=None)
    c.add_argument("--workers", type=int)
    _add_common(c)

    a = subs.add_parser("analyze", help="estimate a distribution from trial records")
    a.add_argument("--trials-csv", dest="trials_csv")
    a.add_argument("--theta", type=float)
    a.add_argument("--steps", type=int)
    a.add_argument("--moments", action="store_true", default=None)
    a.add_argument("--tail-fit-tmin", dest="tail_fit_tmin", type=float)
    _add_common(a, seed=False)

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    command = args.command
    values: dict = {}
    if getattr(args, "config", None):
        base = parse_config(args.config)
        if base.command != command:
            raise ConfigError(
                f"config file is for {base.command!r} but the {command!r} subcommand was invoked"
            )
        values.update({k: v for k, v in config_dict(base).items() if k != "command"})

    skip = {"command", "config", "ideal", "realistic"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        values[key] = value

    if command == "qfptd":
        ideal = getattr(args, "ideal", False)
        realistic = getattr(args, "realistic", False)
        if ideal and realistic:
            raise ConfigError("--ideal and --realistic are mutually exclusive")
        if ideal:
            values["trials"] = 0
        if realistic and values.get("trials", 0) < 1:
            raise ConfigError("--realistic requires --trials >= 1")
    return build_config(command, values)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = _config_from_args(args)
        written = run(cfg)
        for path in written:
            print(path)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except TruncationError as exc:
        print(f"truncation error: {exc}", file=sys.stderr)
        return TruncationError.exit_code
    except (NumericalError, QfptError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
