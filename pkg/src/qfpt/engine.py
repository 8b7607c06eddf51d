"""Stroboscopic first-passage-time pipelines.

The system heats from the ground state and is interrogated every theta by a
survival/absorption measurement: the deterministic pipeline propagates the
survival-conditioned density matrix exactly, while the Monte Carlo pipeline
draws per-trial trajectories through the realistic measurement model
(composite-pulse Kraus pair, per-shot intensity noise, spontaneous-emission
false brights, classical readout flips). Post-processing lives here too:
escape curves, moments, exponential tail fits, analytic references, and the
spontaneous-emission forward/reconstruction maps.
"""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .fock import DEFAULT_TAIL_CAP, FockSpace, MotionalDensityMatrix
from .heating import evolve_heating_trajectories, heating_propagator
from .stepgate import (
    IntensityNoise,
    PulseSequence,
    StepMeasurement,
    _manifold_blocks,
    sample_rabi_scales,
)

PROB_BALANCE_TOL = 1e-8
MC_CHUNK = 8192


@dataclass(frozen=True)
class FptConfig:
    """Threshold n_b, measurement interval theta, and horizon in steps."""

    n_b: int
    theta: float
    max_steps: int
    n_cut: int | None = None
    tail_cap: float = DEFAULT_TAIL_CAP

    def __post_init__(self):
        if self.n_b < 1:
            raise ConfigError(f"n_b must be >= 1, got {self.n_b}")
        if self.theta <= 0:
            raise ConfigError(f"theta must be > 0, got {self.theta}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")

    def space(self) -> FockSpace:
        if self.n_cut is not None:
            return FockSpace(self.n_cut)
        # between measurements the state only heats for theta, so the
        # cutoff is sized for one interval on top of the threshold
        return FockSpace.for_heating(self.n_b, self.theta)


@dataclass
class FptdResult:
    """First-passage probabilities on the stroboscopic grid i*theta, i = 1..k.

    `survivor_remainder` is the censored mass (no detection within the
    horizon). Deterministic results have trials = 0 and no stderr.
    """

    theta: float
    probs: np.ndarray
    survivor_remainder: float
    mode: str = "deterministic"
    trials: int = 0
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)

    @property
    def max_steps(self) -> int:
        return self.probs.size

    @property
    def times(self) -> np.ndarray:
        return self.theta * np.arange(1, self.probs.size + 1)

    def validate(self, tol: float = PROB_BALANCE_TOL):
        if np.any(self.probs < -tol):
            raise NumericalError("negative first-passage probabilities")
        balance = self.probs.sum() + self.survivor_remainder
        if abs(balance - 1.0) > tol:
            raise NumericalError(f"probabilities and remainder sum to {balance}, not 1")
        return self


def escape_probability(res: FptdResult) -> np.ndarray:
    """Cumulative detection probability E(i*theta); ends at 1 - remainder."""
    return np.cumsum(res.probs)


@dataclass(frozen=True)
class Moments:
    mean: float
    second_moment: float
    censored_fraction: float


def moments(res: FptdResult, censor_warn: float = 1e-3) -> Moments:
    """Grid moments over the detected mass only; censoring is reported, not imputed."""
    t = res.times
    mean = float(np.sum(t * res.probs))
    second = float(np.sum(t * t * res.probs))
    if res.survivor_remainder > censor_warn:
        warnings.warn(
            f"censored fraction {res.survivor_remainder:.2e} exceeds {censor_warn:.0e}; "
            "moments are biased low",
            stacklevel=2,
        )
    return Moments(mean, second, res.survivor_remainder)


def analytic_quantum_moments(n_b: int) -> tuple[float, float]:
    """Continuous-measurement-limit moments from the ground state: (n_b, n_b(3n_b+1)/2)."""
    if n_b < 1:
        raise ConfigError(f"n_b must be >= 1, got {n_b}")
    return float(n_b), float(n_b * (3 * n_b + 1) / 2)


def geometric_reference(theta: float, steps: int) -> FptdResult:
    """Exact n_b = 1 law: detection probability p = theta/(1+theta) per step."""
    if theta <= 0:
        raise ConfigError(f"theta must be > 0, got {theta}")
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    p = theta / (1.0 + theta)
    i = np.arange(1, steps + 1)
    probs = p * (1.0 - p) ** (i - 1)
    return FptdResult(
        theta=theta,
        probs=probs,
        survivor_remainder=float((1.0 - p) ** steps),
        mode="deterministic",
        meta={"family": "geometric", "p": p},
    )


# --- deterministic pipeline ---------------------------------------------------


def qfptd_ideal(cfg: FptConfig) -> FptdResult:
    """Exact pipeline with ideal projectors.

    The survival-conditioned density matrix is kept unnormalized so its
    trace carries the accumulated survival probability; the absorbed weight
    at each step is then directly the unconditional first-passage
    probability (the survival-product formula, evaluated without ever
    dividing by small numbers).
    """
    space = cfg.space()
    d = space.n_cut
    if d <= cfg.n_b:
        raise ConfigError(f"n_cut={d} must exceed n_b={cfg.n_b}")
    prop = heating_propagator(d, cfg.theta)
    surviving = np.arange(d) < cfg.n_b

    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = 1.0
    probs = np.empty(cfg.max_steps)
    for i in range(cfg.max_steps):
        rho = (prop @ rho.reshape(-1)).reshape(d, d)
        state = MotionalDensityMatrix(rho, normalized=False)
        state.check_tail(cfg.tail_cap)
        total = state.trace
        surv_weight = float(np.real(np.diag(rho)[surviving].sum()))
        probs[i] = total - surv_weight
        rho = np.where(np.outer(surviving, surviving), rho, 0.0)
    remainder = float(np.real(np.trace(rho)))
    res = FptdResult(
        theta=cfg.theta,
        probs=probs,
        survivor_remainder=remainder,
        mode="deterministic",
        meta={"n_b": cfg.n_b, "n_cut": d},
    )
    return res.validate()


# --- Monte Carlo pipeline ------------------------------------------------------


@dataclass(frozen=True)
class _McTask:
    """Picklable description of one Monte Carlo chunk."""

    cfg: FptConfig
    meas: object  # PulseSequence | StepMeasurement
    noise: IntensityNoise | None
    spont_survival: float  # per-step dark-survival factor s
    detection_error: float
    state_mode: str
    seed: int
    chunk_index: int
    trials: int


def _dark_amplitudes(task: _McTask, psi: np.ndarray, rng: np.random.Generator):
    """Per-row dark/bright branch amplitudes for the current shot.

    Returns (dark_rows, bright_rows): applying the Kraus pair to each row,
    without normalization.
    """
    d = psi.shape[1]
    if isinstance(task.meas, StepMeasurement):
        dark = psi @ task.meas.k_dark.T
        bright = psi @ task.meas.k_bright.T
        return dark, bright
    seq: PulseSequence = task.meas
    if task.noise is not None and task.noise.sigma_over_w > 0:
        scales = sample_rabi_scales(task.noise, rng, psi.shape[0])
    else:
        scales = np.ones(psi.shape[0])
    u_dd, u_sd = _manifold_blocks(seq, scales, d)
    dark = psi * u_dd
    bright = np.zeros_like(psi)
    bright[:, :-1] = psi[:, 1:] * u_sd[:, 1:]
    return dark, bright


def _run_mc_chunk(task: _McTask) -> np.ndarray:
    """Counts histogram (censored bin first) for one deterministic chunk."""
    cfg = task.cfg
    space = cfg.space()
    d = space.n_cut
    rng = np.random.default_rng(np.random.SeedSequence([task.seed, 0xFB7, task.chunk_index]))
    m = task.trials
    psi = np.zeros((m, d), dtype=complex)
    psi[:, 0] = 1.0
    counts = np.zeros(cfg.max_steps + 1, dtype=np.int64)
    alive = np.arange(m)
    s = task.spont_survival
    eps = task.detection_error

    for step in range(1, cfg.max_steps + 1):
        if alive.size == 0:
            break
        if task.state_mode == "trajectory":
            psi_a = evolve_heating_trajectories(
                psi[alive], cfg.theta, rng, tail_cap=cfg.tail_cap
            )
        else:
            raise ConfigError(f"unknown state_mode {task.state_mode!r}")
        dark_amp, bright_amp = _dark_amplitudes(task, psi_a, rng)
        p_dark = np.clip(np.sum(np.abs(dark_amp) ** 2, axis=1), 0.0, 1.0)

        actual_dark = rng.random(alive.size) < p_dark
        observed_dark = actual_dark.copy()
        if s < 1.0:
            # spontaneous decay during the interval reads as a bright event
            decayed = rng.random(alive.size) < (1.0 - s)
            observed_dark &= ~decayed
        if eps > 0.0:
            flip = rng.random(alive.size) < eps
            observed_dark ^= flip

        ended = ~observed_dark
        counts[step] += int(np.count_nonzero(ended))

        cont = np.nonzero(~ended)[0]
        if cont.size:
            amp = np.where(actual_dark[cont, None], dark_amp[cont], bright_amp[cont])
            norm = np.linalg.norm(amp, axis=1, keepdims=True)
            psi[alive[cont]] = amp / norm
        alive = alive[~ended]

    counts[0] = alive.size
    return counts


def qfptd_realistic(
    cfg: FptConfig,
    meas,
    trials: int,
    seed: int = 0,
    noise: IntensityNoise | None = None,
    spont: "SpontEmissionModel | None" = None,
    detection_error: float = 0.0,
    state_mode: str = "trajectory",
    workers: int = 1,
    chunk_size: int = MC_CHUNK,
) -> FptdResult:
    """Monte Carlo first-passage distribution under the realistic measurement.

    `meas` is either a PulseSequence (required when intensity noise is
    present, so the Kraus pair can be rebuilt at each shot's Rabi scale) or
    a fixed StepMeasurement. Trials are split into fixed-size chunks, each
    with its own seed stream derived from (seed, chunk index), so results
    are identical for any `workers` value.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if not isinstance(meas, (PulseSequence, StepMeasurement)):
        raise ConfigError("meas must be a PulseSequence or StepMeasurement")
    if noise is not None and noise.sigma_over_w > 0 and not isinstance(meas, PulseSequence):
        raise ConfigError("intensity noise requires a PulseSequence measurement")
    if not 0.0 <= detection_error < 1.0:
        raise ConfigError(f"detection_error must be in [0, 1), got {detection_error}")
    if isinstance(meas, StepMeasurement) and meas.n_cut != cfg.space().n_cut:
        raise ConfigError(
            f"measurement dimension {meas.n_cut} != configured n_cut {cfg.space().n_cut}"
        )
    s = 1.0 if spont is None else spont.survival_factor(cfg.theta)

    sizes = [chunk_size] * (trials // chunk_size)
    if trials % chunk_size:
        sizes.append(trials % chunk_size)
    tasks = [
        _McTask(cfg, meas, noise, s, detection_error, state_mode, seed, idx, size)
        for idx, size in enumerate(sizes)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            all_counts = list(pool.map(_run_mc_chunk, tasks))
    else:
        all_counts = [_run_mc_chunk(t) for t in tasks]
    counts = np.sum(all_counts, axis=0)

    probs = counts[1:] / trials
    stderr = np.sqrt(probs * (1.0 - probs) / trials)
    res = FptdResult(
        theta=cfg.theta,
        probs=probs,
        survivor_remainder=float(counts[0] / trials),
        mode="monte-carlo",
        trials=trials,
        stderr=stderr,
        meta={
            "n_b": cfg.n_b,
            "n_cut": cfg.space().n_cut,
            "seed": seed,
            "counts": counts.tolist(),
            "spont_survival": s,
            "detection_error": detection_error,
            "state_mode": state_mode,
        },
    )
    return res.validate()


# --- tail fit -------------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    """Exponential tail parameters from a weighted log-linear fit."""

    beta: float
    fit_window: tuple[float, float]
    r_squared: float
    n_points: int


def tail_fit(res: FptdResult, t_min: float) -> TailFit:
    """Fit ln P(i*theta) ~ -beta * t for t >= t_min, weighting by probability mass."""
    t = res.times
    mask = (t >= t_min) & (res.probs > 0)
    if np.count_nonzero(mask) < 5:
        raise NumericalError(
            f"tail fit needs >= 5 positive points beyond t_min={t_min}, "
            f"found {np.count_nonzero(mask)}"
        )
    x = t[mask]
    y = np.log(res.probs[mask])
    w = res.probs[mask]
    wsum = w.sum()
    xbar = np.sum(w * x) / wsum
    ybar = np.sum(w * y) / wsum
    slope = np.sum(w * (x - xbar) * (y - ybar)) / np.sum(w * (x - xbar) ** 2)
    yhat = ybar + slope * (x - xbar)
    ss_res = float(np.sum(w * (y - yhat) ** 2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return TailFit(
        beta=float(-slope),
        fit_window=(float(x[0]), float(x[-1])),
        r_squared=r2,
        n_points=int(mask.sum()),
    )


# --- spontaneous emission --------------------------------------------------------


@dataclass(frozen=True)
class SpontEmissionModel:
    """Finite upper-state lifetime: decays read as bright at the next measurement.

    tau is the lifetime in seconds; ndot converts the dimensionless interval
    back to wall-clock time. The per-step probability of surviving dark is
    s = exp(-theta / (ndot * tau)).
    """

    tau: float
    ndot: float = 86.0

    def __post_init__(self):
        if self.tau <= 0 or self.ndot <= 0:
            raise ConfigError("tau and ndot must be > 0")

    def survival_factor(self, theta: float) -> float:
        return float(np.exp(-theta / (self.ndot * self.tau)))

    def false_bright_probability(self, theta: float) -> float:
        return 1.0 - self.survival_factor(theta)


def _survival_series(probs: np.ndarray) -> np.ndarray:
    """S_i = P(no detection through step i), including S_0 = 1."""
    return np.concatenate([[1.0], 1.0 - np.cumsum(probs)])


def spont_forward(res: FptdResult, model: SpontEmissionModel) -> FptdResult:
    """Distribution as observed with spontaneous-emission false brights.

    Each surviving step keeps only a fraction s of its mass dark; the
    diverted 1-s lands in that step's detection probability.
    """
    s = model.survival_factor(res.theta)
    surv = _survival_series(res.probs)
    k = res.probs.size
    factors = s ** np.arange(k + 1)
    observed_surv = factors * surv
    probs = observed_surv[:-1] - observed_surv[1:]
    return FptdResult(
        theta=res.theta,
        probs=probs,
        survivor_remainder=float(observed_surv[-1]),
        mode=res.mode,
        trials=res.trials,
        meta={**res.meta, "spont_forward_s": s},
    )


def spont_reconstruct(
    observed: FptdResult, model: SpontEmissionModel, clamp: bool = False
) -> FptdResult:
    """Exact algebraic inverse of spont_forward.

    Negative reconstructed probabilities signal that the observed data are
    inconsistent with the model; they are reported as-is unless `clamp`.
    """
    s = model.survival_factor(observed.theta)
    obs_surv = _survival_series(observed.probs)
    k = observed.probs.size
    surv = obs_surv / (s ** np.arange(k + 1))
    probs = surv[:-1] - surv[1:]
    if np.any(probs < -PROB_BALANCE_TOL):
        warnings.warn(
            f"reconstruction produced negative probabilities (min {probs.min():.3e}); "
            "observed data inconsistent with the spontaneous-emission model",
            stacklevel=2,
        )
        if clamp:
            probs = np.clip(probs, 0.0, None)
            surv_end = 1.0 - probs.sum()
            return FptdResult(
                theta=observed.theta, probs=probs, survivor_remainder=float(surv_end),
                mode=observed.mode, trials=observed.trials,
                meta={**observed.meta, "spont_reconstructed": True, "clamped": True},
            )
    return FptdResult(
        theta=observed.theta,
        probs=probs,
        survivor_remainder=float(surv[-1]),
        mode=observed.mode,
        trials=observed.trials,
        meta={**observed.meta, "spont_reconstructed": True},
    )


# --- serialization ----------------------------------------------------------------


def result_to_csv(res: FptdResult) -> str:
    """Columnar text: step, time, prob, escape, stderr (0 when deterministic)."""
    esc = escape_probability(res)
    err = res.stderr if res.stderr is not None else np.zeros_like(res.probs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "time", "prob", "escape", "stderr"])
    for i in range(res.probs.size):
        writer.writerow(
            [
                i + 1,
                repr(float(res.times[i])),
                repr(float(res.probs[i])),
                repr(float(esc[i])),
                repr(float(err[i])),
            ]
        )
    return buf.getvalue()


def write_result_csv(res: FptdResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(result_to_csv(res))
