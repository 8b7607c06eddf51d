"""Classical counterpart: noise-driven undamped oscillator escaping an energy shell.

Dimensionless units throughout: dx = v dt, dv = -omega^2 x dt + sqrt(2) dW,
so the ensemble energy H = (v^2 + omega^2 x^2)/2 grows at unit rate. Each
trial starts on the H = H0 shell at a uniformly random phase and ends when
H first reaches E_B.

The one-step update is exact: harmonic rotation composed with the exact
Gaussian increment of the linear SDE, so the integrator itself is unbiased
for any dt. What remains is the discrete monitoring of the threshold
(crossings inside a step can be missed); the optional Brownian-bridge
detector removes that bias.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

CLASSICAL_CHUNK = 25_000


@dataclass(frozen=True)
class ClassicalConfig:
    """Energy threshold, initial shell, step size, oscillator frequency.

    omega only sets how finely the phase is resolved; the escape statistics
    reach their averaged limit once many oscillation periods fit into a
    typical first-passage time.
    """

    e_b: float
    h0: float = 0.5
    omega: float = 200.0
    dt: float | None = None
    t_max_factor: float = 80.0  # horizon in units of (e_b - h0)

    def __post_init__(self):
        if self.h0 < 0:
            raise ConfigError(f"h0 must be >= 0, got {self.h0}")
        if self.e_b <= self.h0:
            raise ConfigError(f"need e_b > h0, got e_b={self.e_b}, h0={self.h0}")
        if self.omega <= 0:
            raise ConfigError("omega must be > 0")
        if self.dt is None:
            object.__setattr__(self, "dt", min(1e-4, 0.05 / self.omega))
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory parameters tying the heating rate to the field-noise density."""

    mass: float            # kg
    charge: float          # C
    omega: float           # mode angular frequency, rad/s
    hbar: float = 1.054571817e-34  # J s
    s_xi: float = 0.0      # electric-field noise spectral density, (V/m)^2/Hz

    def __post_init__(self):
        if min(self.mass, self.charge, self.omega, self.hbar) <= 0:
            raise ConfigError("mass, charge, omega, hbar must all be > 0")


def heating_rate_from_noise(p: PhysicalParams) -> float:
    """Quanta per second gained from field noise: e^2 S_xi(omega) / (4 m omega hbar)."""
    if p.s_xi < 0:
        raise ConfigError("spectral density must be >= 0")
    return p.charge ** 2 * p.s_xi / (4.0 * p.mass * p.omega * p.hbar)


def noise_density_for_rate(p: PhysicalParams, ndot: float) -> float:
    """Inverse map: the S_xi that produces a given heating rate."""
    return 4.0 * p.mass * p.omega * p.hbar * ndot / p.charge ** 2


def classical_moments(cfg: ClassicalConfig) -> tuple[float, float]:
    """Stochastic-averaging moments: <T> = dH, <T^2> = dH (H0 + 3 dH / 2)."""
    dh = cfg.e_b - cfg.h0
    return dh, dh * (cfg.h0 + 1.5 * dh)


@dataclass
class ClassicalFptResult:
    samples: np.ndarray
    censored: int
    mean: float
    second_moment: float
    mean_stderr: float
    second_stderr: float

    @property
    def trials(self) -> int:
        return self.samples.size + self.censored


def _step_coefficients(omega: float, dt: float):
    """Exact one-step map: rotation entries and Cholesky factors of the noise."""
    c, s = np.cos(omega * dt), np.sin(omega * dt)
    var_x = (dt - np.sin(2 * omega * dt) / (2 * omega)) / omega ** 2
    var_v = dt + np.sin(2 * omega * dt) / (2 * omega)
    cov_xv = (1.0 - np.cos(2 * omega * dt)) / (2 * omega ** 2)
    l11 = np.sqrt(var_x)
    l21 = cov_xv / l11
    l22 = np.sqrt(max(var_v - l21 * l21, 0.0))
    return c, s, l11, l21, l22


@dataclass(frozen=True)
class _ClassicalTask:
    cfg: ClassicalConfig
    seed: int
    chunk_index: int
    trials: int
    bridge: bool


def _run_classical_chunk(task: _ClassicalTask) -> tuple[np.ndarray, int]:
    cfg = task.cfg
    rng = np.random.default_rng(np.random.SeedSequence([task.seed, 0xC1A, task.chunk_index]))
    m = task.trials
    omega, dt = cfg.omega, cfg.dt
    c, s, l11, l21, l22 = _step_coefficients(omega, dt)

    phase = rng.uniform(0.0, 2.0 * np.pi, m)
    amp = np.sqrt(2.0 * cfg.h0)
    x = amp / omega * np.sin(phase)
    v = amp * np.cos(phase)

    fpt = np.full(m, np.nan)
    h = 0.5 * (v * v + (omega * x) ** 2)
    hit0 = h >= cfg.e_b
    fpt[hit0] = 0.0
    alive = np.nonzero(~hit0)[0]
    x, v, h = x[alive], v[alive], h[alive]
    idx = alive

    max_steps = int(np.ceil(cfg.t_max_factor * (cfg.e_b - cfg.h0) / dt))
    for step in range(1, max_steps + 1):
        if idx.size == 0:
            break
        z1 = rng.standard_normal(idx.size)
        z2 = rng.standard_normal(idx.size)
        xn = c * x + (s / omega) * v + l11 * z1
        vn = -omega * s * x + c * v + l21 * z1 + l22 * z2
        hn = 0.5 * (vn * vn + (omega * xn) ** 2)
        hit = hn >= cfg.e_b
        if task.bridge:
            # Brownian bridge on the energy between step endpoints: excursions
            # above the threshold inside the step would otherwise be missed
            sig2 = 2.0 * np.maximum(0.5 * (v * v + vn * vn), 1e-30) * dt
            gap = (cfg.e_b - h) * (cfg.e_b - hn)
            p_cross = np.exp(-2.0 * np.maximum(gap, 0.0) / sig2)
            hit |= (~hit) & (rng.random(idx.size) < p_cross)
        if hit.any():
            fpt[idx[hit]] = step * dt
            keep = ~hit
            x, v, h, idx = xn[keep], vn[keep], hn[keep], idx[keep]
        else:
            x, v, h = xn, vn, hn
    censored = idx.size
    return fpt[~np.isnan(fpt)], censored


def simulate_classical_fpt(
    cfg: ClassicalConfig,
    trials: int,
    seed: int = 0,
    bridge_crossing: bool = False,
    workers: int = 1,
    chunk_size: int = CLASSICAL_CHUNK,
) -> ClassicalFptResult:
    """Empirical first-passage samples and moments for `trials` independent trials.

    Threshold crossings are detected at step boundaries by default;
    `bridge_crossing=True` additionally scores within-step excursions with
    the Brownian-bridge probability, removing the O(sqrt(dt)) detection
    bias. Chunked seeding makes the result independent of `workers`.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    sizes = [chunk_size] * (trials // chunk_size)
    if trials % chunk_size:
        sizes.append(trials % chunk_size)
    tasks = [
        _ClassicalTask(cfg, seed, i, size, bridge_crossing) for i, size in enumerate(sizes)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_classical_chunk, tasks))
    else:
        parts = [_run_classical_chunk(t) for t in tasks]
    samples = np.concatenate([p[0] for p in parts])
    censored = int(sum(p[1] for p in parts))

    n = samples.size
    mean = float(samples.mean()) if n else float("nan")
    second = float((samples ** 2).mean()) if n else float("nan")
    mean_se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    second_se = float((samples ** 2).std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return ClassicalFptResult(samples, censored, mean, second, mean_se, second_se)
