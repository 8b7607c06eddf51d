"""Truncated Fock-space representation of a single motional mode.

States, ladder operators, thermal states, and the n-dependent blue-sideband
coupling strengths used by the step-pulse model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, NumericalError, TruncationError

# Population allowed in the top retained Fock level before results are refused.
# Heating only pushes population upward, so a hot top level means the answer
# is already biased by the truncation.
DEFAULT_TAIL_CAP = 1e-4

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
EIGENVALUE_TOL = -1e-8


@dataclass(frozen=True)
class FockSpace:
    """Number basis {|0>, ..., |n_cut-1>} for the motional mode."""

    n_cut: int

    def __post_init__(self):
        if self.n_cut < 2:
            raise ConfigError(f"n_cut must be >= 2, got {self.n_cut}")

    @classmethod
    def for_heating(cls, n_b: int = 0, t_max: float = 0.0) -> "FockSpace":
        """Cutoff sized for free heating up to dimensionless time t_max.

        The thermal tail at mean occupation t decays geometrically with
        ratio t/(1+t); 10 levels per unit of heating time keeps the top
        level below the default cap, with a floor of 30 levels.
        """
        return cls(max(30, math.ceil(10 * n_b + 10 * t_max)))


class Operators(NamedTuple):
    a: np.ndarray
    a_dagger: np.ndarray
    number_op: np.ndarray


def make_operators(space: FockSpace) -> Operators:
    """Truncated ladder operators and the number operator.

    a|n> = sqrt(n)|n-1>, a^dag|n> = sqrt(n+1)|n+1>; the matrix element out
    of the top level is dropped by the truncation, so a a^dag has a zero in
    its last diagonal entry.
    """
    d = space.n_cut
    a = np.zeros((d, d), dtype=complex)
    ns = np.arange(1, d)
    a[ns - 1, ns] = np.sqrt(ns)
    return Operators(a, a.conj().T, np.diag(np.arange(d, dtype=float)).astype(complex))


def laguerre_assoc1(n: int, x: float) -> float:
    """Generalized Laguerre polynomial L_n^1(x) by the three-term recurrence.

    Factorial-free on purpose: the recurrence stays stable at large n where
    a closed-form sum would overflow.
    """
    if n < 0:
        raise ConfigError(f"Laguerre order must be >= 0, got {n}")
    if n == 0:
        return 1.0
    prev, cur = 1.0, 2.0 - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 2 - x) * cur - (k + 1) * prev) / (k + 1)
    return cur


@dataclass(frozen=True)
class SidebandParams:
    """Blue-sideband coupling scale: Lamb-Dicke parameter and carrier Rabi rate.

    omega00 is the carrier Rabi angular frequency in rad/s. It only ever
    enters through the pulse-duration unit (durations are stored in carrier
    Rabi periods), so the dynamics are insensitive to its numerical value.
    """

    eta: float = 0.05533
    omega00: float = 2 * math.pi * 300e3

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ConfigError(f"eta must be in (0, 1), got {self.eta}")
        if self.omega00 <= 0:
            raise ConfigError(f"omega00 must be > 0, got {self.omega00}")


def bsb_coupling(n: int, params: SidebandParams) -> float:
    """Sideband coupling ratio Omega_{n,n+1} / Omega_00 for the |n> <-> |n+1> manifold.

    Equals exp(-eta^2/2) * eta * L_n^1(eta^2) / sqrt(n+1); the sqrt(n!)
    ratio is folded into 1/sqrt(n+1) so nothing overflows.
    """
    if n < 0:
        raise ConfigError(f"level index must be >= 0, got {n}")
    eta2 = params.eta * params.eta
    return math.exp(-eta2 / 2) * params.eta * laguerre_assoc1(n, eta2) / math.sqrt(n + 1)


def bsb_coupling_vector(n_max: int, params: SidebandParams) -> np.ndarray:
    """Coupling ratios for n = 0..n_max-1 in one sweep of the recurrence."""
    eta2 = params.eta * params.eta
    scale = math.exp(-eta2 / 2) * params.eta
    out = np.empty(n_max)
    prev, cur = 1.0, 2.0 - eta2
    for n in range(n_max):
        if n == 0:
            lag = 1.0
        elif n == 1:
            lag = cur
        else:
            prev, cur = cur, ((2 * (n - 1) + 2 - eta2) * cur - n * prev) / n
            lag = cur
        out[n] = scale * lag / math.sqrt(n + 1)
    return out


@dataclass
class MotionalDensityMatrix:
    """Density matrix of the motional mode, possibly survival-conditioned.

    `normalized=False` marks a conditioned/unnormalized state whose trace
    carries the accumulated survival probability (<= 1).
    """

    rho: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.ndim != 2 or self.rho.shape[0] != self.rho.shape[1]:
            raise ConfigError(f"rho must be square, got shape {self.rho.shape}")

    @property
    def n_cut(self) -> int:
        return self.rho.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    @property
    def tail_population(self) -> float:
        """Population of the top retained level, normalized by the trace."""
        tr = self.trace
        if tr <= 0:
            return 0.0
        return float(np.real(self.rho[-1, -1])) / tr

    def mean_occupation(self) -> float:
        tr = self.trace
        return float(np.real(np.diag(self.rho) @ np.arange(self.n_cut))) / tr

    def validate(self):
        """Check hermiticity, trace, and positivity within the standard tolerances."""
        if np.max(np.abs(self.rho - self.rho.conj().T)) > HERMITICITY_TOL:
            raise NumericalError("density matrix is not Hermitian")
        tr = self.trace
        if self.normalized and abs(tr - 1.0) > TRACE_TOL:
            raise NumericalError(f"trace {tr} deviates from 1")
        if not self.normalized and tr > 1.0 + TRACE_TOL:
            raise NumericalError(f"conditioned trace {tr} exceeds 1")
        eigmin = float(np.linalg.eigvalsh(self.rho)[0])
        if eigmin < EIGENVALUE_TOL:
            raise NumericalError(f"negative eigenvalue {eigmin}")
        return self

    def check_tail(self, cap: float = DEFAULT_TAIL_CAP):
        if self.tail_population > cap:
            raise TruncationError(
                f"top-level population {self.tail_population:.3e} exceeds cap {cap:.1e}; "
                f"increase n_cut (currently {self.n_cut})"
            )
        return self


@dataclass
class TrajectoryState:
    """Pure-state amplitudes d_n of the motional mode along one trajectory."""

    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.ndim != 1:
            raise ConfigError("amplitudes must be a vector")

    @property
    def n_cut(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def tail_population(self) -> float:
        n2 = self.norm ** 2
        return float(np.abs(self.amplitudes[-1]) ** 2) / n2 if n2 > 0 else 0.0

    def mean_occupation(self) -> float:
        p = np.abs(self.amplitudes) ** 2
        return float(p @ np.arange(self.n_cut)) / float(p.sum())

    def check_tail(self, cap: float = DEFAULT_TAIL_CAP):
        if self.tail_population > cap:
            raise TruncationError(
                f"top-level population {self.tail_population:.3e} exceeds cap {cap:.1e}; "
                f"increase n_cut (currently {self.n_cut})"
            )
        return self


def ground_state_dm(space: FockSpace) -> MotionalDensityMatrix:
    rho = np.zeros((space.n_cut, space.n_cut), dtype=complex)
    rho[0, 0] = 1.0
    return MotionalDensityMatrix(rho)


def ground_state(space: FockSpace) -> TrajectoryState:
    amp = np.zeros(space.n_cut, dtype=complex)
    amp[0] = 1.0
    return TrajectoryState(amp)


def thermal_state(nbar: float, space: FockSpace) -> MotionalDensityMatrix:
    """Thermal state p_n = nbar^n / (1+nbar)^(n+1), renormalized on the truncated basis.

    Emits a warning when the truncated-away tail exceeds 1e-6.
    """
    if nbar < 0:
        raise ConfigError(f"nbar must be >= 0, got {nbar}")
    d = space.n_cut
    if nbar == 0:
        return ground_state_dm(space)
    ratio = nbar / (1.0 + nbar)
    log_p = np.arange(d) * math.log(ratio) - math.log1p(nbar)
    p = np.exp(log_p)
    leakage = ratio ** d  # closed-form mass above the cutoff
    if leakage > 1e-6:
        warnings.warn(
            f"thermal state truncation leakage {leakage:.2e} at nbar={nbar}, n_cut={d}",
            stacklevel=2,
        )
    p /= p.sum()
    state = MotionalDensityMatrix(np.diag(p).astype(complex))
    state.leakage = leakage
    return state
