"""Motional heating by a high-temperature amplitude reservoir.

All times are dimensionless (one quantum gained per unit time on average):
    drho/dt = (1/2)(2 a rho a+ - a+a rho - rho a+a + 2 a+ rho a - a a+ rho - rho a a+)
Three views of the same generator live here: deterministic propagation of
the density matrix, a stochastic jump-trajectory unraveling, and the
continuous-measurement-limit absorbing-boundary solver for first-passage
densities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from .errors import ConfigError, NumericalError, TruncationError
from .fock import (
    DEFAULT_TAIL_CAP,
    FockSpace,
    MotionalDensityMatrix,
    TrajectoryState,
    make_operators,
)

# Jump-probability cap per substep of the first-order unraveling:
# dt <= SUBSTEP_RATE_CAP / <a a+ + a+ a>.
SUBSTEP_RATE_CAP = 0.01

RK4_DT = 1e-3


@dataclass(frozen=True)
class HeatingParams:
    """Heating rate in quanta per second of wall-clock time.

    Only the CLI converts real time to dimensionless time (t = ndot * t');
    every API below this layer is dimensionless with unit rate.
    """

    ndot: float = 86.0

    def __post_init__(self):
        if self.ndot <= 0:
            raise ConfigError(f"ndot must be > 0, got {self.ndot}")


# --- deterministic propagation -------------------------------------------

_LIOUVILLIANS: dict[int, np.ndarray] = {}
_PROPAGATORS: dict[tuple[int, float], np.ndarray] = {}


def _superop(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    # vec(L rho R) = kron(L, R.T) vec(rho) for row-major flattening
    return np.kron(left, right.T)


def liouvillian(n_cut: int) -> np.ndarray:
    """Heating generator on vectorized density matrices, assembled once per n_cut."""
    if n_cut not in _LIOUVILLIANS:
        a, ad, _ = make_operators(FockSpace(n_cut))
        eye = np.eye(n_cut)
        gen = np.zeros((n_cut * n_cut, n_cut * n_cut), dtype=complex)
        for c in (a, ad):
            cdc = c.conj().T @ c
            gen += _superop(c, c.conj().T) - 0.5 * _superop(cdc, eye) - 0.5 * _superop(eye, cdc)
        _LIOUVILLIANS[n_cut] = gen
    return _LIOUVILLIANS[n_cut]


def heating_propagator(n_cut: int, duration: float) -> np.ndarray:
    """exp(L * duration), cached by (n_cut, duration) for stroboscopic reuse."""
    key = (n_cut, float(duration))
    if key not in _PROPAGATORS:
        if len(_PROPAGATORS) > 64:
            _PROPAGATORS.clear()
        _PROPAGATORS[key] = expm(liouvillian(n_cut) * duration)
    return _PROPAGATORS[key]


def _rk4_evolve(rho_vec: np.ndarray, gen: np.ndarray, duration: float, dt: float) -> np.ndarray:
    steps = max(1, int(np.ceil(duration / dt)))
    h = duration / steps
    y = rho_vec
    for _ in range(steps):
        k1 = gen @ y
        k2 = gen @ (y + 0.5 * h * k1)
        k3 = gen @ (y + 0.5 * h * k2)
        k4 = gen @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def evolve_heating_dm(
    rho: MotionalDensityMatrix,
    duration: float,
    method: str = "rk4",
    dt: float = RK4_DT,
    tail_cap: float = DEFAULT_TAIL_CAP,
) -> MotionalDensityMatrix:
    """Propagate a density matrix for `duration` under the heating generator.

    Evolution is linear, so conditioned (unnormalized) inputs are fine.
    `method="rk4"` is the fixed-step reference integrator; `method="expm"`
    applies the cached exact propagator and is the fast path for repeated
    stroboscopic intervals (both agree to better than 1e-8).
    """
    if duration < 0:
        raise ConfigError(f"duration must be >= 0, got {duration}")
    if duration == 0:
        return rho
    d = rho.n_cut
    vec = rho.rho.reshape(-1)
    if method == "expm":
        out = heating_propagator(d, duration) @ vec
    elif method == "rk4":
        out = _rk4_evolve(vec, liouvillian(d), duration, dt)
    else:
        raise ConfigError(f"unknown method {method!r}")
    result = MotionalDensityMatrix(out.reshape(d, d), normalized=rho.normalized)
    result.check_tail(tail_cap)
    return result


# --- jump-trajectory unraveling -------------------------------------------


def evolve_heating_trajectories(
    amplitudes: np.ndarray,
    duration: float,
    rng: np.random.Generator,
    rate_cap: float = SUBSTEP_RATE_CAP,
    tail_cap: float = DEFAULT_TAIL_CAP,
) -> np.ndarray:
    """Evolve a batch of pure-state rows (m, n_cut) by the jump unraveling.

    First-order scheme: in each substep a trajectory either jumps down (a,
    rate <a+a>), jumps up (a+, rate <a a+>), or follows the no-jump drift
    generated by -(i/2)(a+a + a a+). Substeps are adaptive per trajectory,
    dt <= rate_cap / total rate, so the single-substep jump probability
    stays small. Rows advance in lockstep but with individual dt, which
    leaves each trajectory's statistics untouched.
    """
    if duration < 0:
        raise ConfigError(f"duration must be >= 0, got {duration}")
    psi = np.array(amplitudes, dtype=complex, copy=True)
    if duration == 0:
        return psi
    m, d = psi.shape
    levels = np.arange(d, dtype=float)
    down_rate = levels.copy()                       # <n|a+a|n>
    up_rate = np.append(levels[:-1] + 1.0, 0.0)     # truncated a a+
    decay = down_rate + up_rate
    sqrt_down = np.sqrt(levels)
    sqrt_up = np.sqrt(np.append(levels[:-1] + 1.0, 0.0))

    remaining = np.full(m, float(duration))
    active = np.nonzero(remaining > 0)[0]
    while active.size:
        p = psi[active]
        pop = np.abs(p) ** 2
        pop /= pop.sum(axis=1, keepdims=True)
        r_down = pop @ down_rate
        r_up = pop @ up_rate
        total = r_down + r_up
        dt = np.minimum(rate_cap / np.maximum(total, 1e-12), remaining[active])

        u = rng.random(active.size)
        jump_down = u < r_down * dt
        jump_up = ~jump_down & (u < total * dt)
        drift = ~(jump_down | jump_up)

        rows = np.nonzero(drift)[0]
        if rows.size:
            p[rows] *= 1.0 - 0.5 * decay * dt[rows, None]
        rows = np.nonzero(jump_down)[0]
        if rows.size:
            q = p[rows] * sqrt_down
            p[rows, :-1] = q[:, 1:]
            p[rows, -1] = 0.0
        rows = np.nonzero(jump_up)[0]
        if rows.size:
            q = p[rows] * sqrt_up
            p[rows, 1:] = q[:, :-1]
            p[rows, 0] = 0.0
        p /= np.linalg.norm(p, axis=1, keepdims=True)

        psi[active] = p
        remaining[active] -= dt
        active = active[remaining[active] > 0]

    tail = np.max(np.abs(psi[:, -1]) ** 2)
    if tail > tail_cap:
        raise TruncationError(
            f"trajectory top-level population {tail:.3e} exceeds cap {tail_cap:.1e}"
        )
    return psi


def evolve_heating_trajectory(
    state: TrajectoryState,
    duration: float,
    rng: np.random.Generator,
    rate_cap: float = SUBSTEP_RATE_CAP,
    tail_cap: float = DEFAULT_TAIL_CAP,
) -> TrajectoryState:
    """One realization of the jump unraveling for a single normalized state."""
    out = evolve_heating_trajectories(
        state.amplitudes[None, :], duration, rng, rate_cap=rate_cap, tail_cap=tail_cap
    )
    return TrajectoryState(out[0], normalized=True)


def derived_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for (master_seed, index); reproducible under any scheduling."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


# --- continuous-limit absorbing-boundary solver ----------------------------


@dataclass
class FptDensityCurve:
    """First-passage density on a grid, with cumulative and integrated moments."""

    times: np.ndarray
    density: np.ndarray
    cumulative: np.ndarray
    mean: float
    second_moment: float


def birth_death_generator(n_b: int) -> np.ndarray:
    """Generator of the diagonal heating chain on {0..n_b-1} with absorption at n_b.

    Up-rate n+1, down-rate n; probability flux n_b * p_{n_b-1} leaks out
    through the absorbing boundary.
    """
    q = np.zeros((n_b, n_b))
    for n in range(n_b):
        q[n, n] = -(2 * n + 1)
        if n > 0:
            q[n, n - 1] = n          # up-jump from n-1 arrives at n
        if n < n_b - 1:
            q[n, n + 1] = n + 1      # down-jump from n+1 arrives at n
    return q


def absorbing_fptd(n_b: int, t_max: float | None = None, grid_dt: float = 0.01) -> FptDensityCurve:
    """Continuous-measurement-limit first-passage density for threshold n_b.

    The surviving block {|0>..|n_b-1>} evolves under the heating generator
    with the threshold level absorbing; the density is the outgoing flux
    f(t) = n_b * p_{n_b-1}(t). Moments are integrated two independent ways
    (from f and, by parts, from the survival function) and must agree to
    0.2%, otherwise the grid is too coarse.
    """
    if n_b < 1:
        raise ConfigError(f"n_b must be >= 1, got {n_b}")
    if t_max is None:
        t_max = 20.0 * n_b
    if grid_dt <= 0 or t_max <= 0:
        raise ConfigError("t_max and grid_dt must be positive")

    q = birth_death_generator(n_b)
    step = expm(q * grid_dt)
    n_steps = int(np.ceil(t_max / grid_dt))
    times = grid_dt * np.arange(n_steps + 1)
    p = np.zeros(n_b)
    p[0] = 1.0
    density = np.empty(n_steps + 1)
    survival = np.empty(n_steps + 1)
    for i in range(n_steps + 1):
        density[i] = n_b * p[-1]
        survival[i] = p.sum()
        if i < n_steps:
            p = step @ p

    cumulative = 1.0 - survival
    mean = float(simpson(times * density, x=times))
    second = float(simpson(times * times * density, x=times))
    # independent route: <T> = int S dt, <T^2> = 2 int t S dt, valid once the
    # remaining survival mass is negligible
    mean_sf = float(simpson(survival, x=times))
    second_sf = float(2.0 * simpson(times * survival, x=times))
    for a, b, name in ((mean, mean_sf, "mean"), (second, second_sf, "second moment")):
        if abs(a - b) > 2e-3 * max(abs(a), abs(b)):
            raise NumericalError(
                f"absorbing-boundary {name} inconsistent between density and survival "
                f"routes ({a:.6g} vs {b:.6g}); refine grid_dt or extend t_max"
            )
    return FptDensityCurve(times, density, cumulative, mean, second)
