"""Composite-phase blue-sideband step pulse and its measurement model.

A sequence of resonant sideband pulses with tuned phases and durations acts
as a low-pass filter on the motional number state: the internal qubit flips
(|D,n> -> |S,n-1>) with probability kappa(n) close to a discrete step at the
design threshold. Together with internal-state fluorescence detection, the
pulse realizes the survival/absorption measurement as a Kraus pair.

Durations are stored in carrier Rabi periods (2*pi/Omega00): the rotation
half-angle on manifold n for a pulse of duration t is
pi * rabi_scale * coupling_ratio(n-1) * t.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, NumericalError
from .fock import FockSpace, SidebandParams, bsb_coupling_vector

COMPLETENESS_TOL = 1e-10


@dataclass(frozen=True)
class PulseSequence:
    """Phases (units of pi) and durations (carrier Rabi periods) of one step pulse."""

    n_b_target: int
    phases_pi: tuple
    durations: tuple
    sideband: SidebandParams = SidebandParams()

    def __post_init__(self):
        object.__setattr__(self, "phases_pi", tuple(float(p) for p in self.phases_pi))
        object.__setattr__(self, "durations", tuple(float(t) for t in self.durations))
        if len(self.phases_pi) != len(self.durations):
            raise ConfigError("phases and durations must have equal length")
        if len(self.phases_pi) < 1:
            raise ConfigError("a pulse sequence needs at least one pulse")
        if any(t < 0 for t in self.durations):
            raise ConfigError("durations must be >= 0")
        if self.n_b_target < 1:
            raise ConfigError(f"n_b_target must be >= 1, got {self.n_b_target}")

    @property
    def m_p(self) -> int:
        return len(self.phases_pi)

    @property
    def total_duration(self) -> float:
        return float(sum(self.durations))


@dataclass(frozen=True)
class StepProfile:
    """Flip probability kappa(n) for n = 0..n_max-1; kappa(0) is exactly 0."""

    kappa: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        object.__setattr__(self, "kappa", k)
        if k[0] != 0.0:
            raise NumericalError("kappa(0) must vanish: |D,0> has no sideband partner")
        if np.any(k < -1e-12) or np.any(k > 1 + 1e-12):
            raise NumericalError("kappa values must lie in [0, 1]")


@dataclass(frozen=True)
class IntensityNoise:
    """Per-shot Rabi attenuation from Gaussian beam-pointing jitter.

    The beam center wanders with radial offset r ~ Rayleigh(sigma); the
    pointing is slow, so one draw applies to a whole shot. `law` picks how
    the Rabi frequency follows the Gaussian beam profile at offset r:
    "field" (exp(-(r/w)^2), Rabi linear in field amplitude, the default)
    or "intensity" (exp(-2(r/w)^2)).
    """

    sigma_over_w: float
    law: str = "field"

    def __post_init__(self):
        if self.sigma_over_w < 0:
            raise ConfigError(f"sigma_over_w must be >= 0, got {self.sigma_over_w}")
        if self.law not in ("field", "intensity"):
            raise ConfigError(f"unknown attenuation law {self.law!r}")


def sample_rabi_scale(noise: IntensityNoise, rng: np.random.Generator) -> float:
    """One per-shot Rabi attenuation factor in (0, 1]."""
    return float(sample_rabi_scales(noise, rng, 1)[0])


def sample_rabi_scales(noise: IntensityNoise, rng: np.random.Generator, size: int) -> np.ndarray:
    r2 = rng.rayleigh(noise.sigma_over_w, size=size) ** 2
    return np.exp(-(r2 if noise.law == "field" else 2.0 * r2))


def mean_rabi_scale(noise: IntensityNoise) -> float:
    """Closed-form E[scale] under the Rayleigh model (oracle for the sampler)."""
    k = 2.0 if noise.law == "field" else 4.0
    return 1.0 / (1.0 + k * noise.sigma_over_w ** 2)


# --- manifold rotations -----------------------------------------------------


def _manifold_blocks(seq: PulseSequence, scales: np.ndarray, n_cut: int):
    """2x2 sideband-manifold unitaries, vectorized over shots and manifolds.

    Returns (u_dd, u_sd): complex arrays of shape (len(scales), n_cut) with
    the <D,n|U|D,n> and <S,n-1|U|D,n> amplitudes. Level n=0 is uncoupled.
    """
    scales = np.asarray(scales, dtype=float)
    m = scales.size
    ratios = bsb_coupling_vector(n_cut - 1, seq.sideband)  # couples n-1 <-> n
    u00 = np.ones((m, n_cut - 1), dtype=complex)
    u01 = np.zeros((m, n_cut - 1), dtype=complex)
    u10 = np.zeros((m, n_cut - 1), dtype=complex)
    u11 = np.ones((m, n_cut - 1), dtype=complex)
    for phi_pi, t in zip(seq.phases_pi, seq.durations):
        half = np.pi * t * scales[:, None] * ratios[None, :]
        c = np.cos(half)
        s = np.sin(half)
        e = np.exp(-1j * np.pi * phi_pi)
        a01 = -1j * e * s
        a10 = -1j * np.conj(e) * s
        u00, u01, u10, u11 = (
            c * u00 + a01 * u10,
            c * u01 + a01 * u11,
            a10 * u00 + c * u10,
            a10 * u01 + c * u11,
        )
    u_dd = np.concatenate([np.ones((m, 1), dtype=complex), u11], axis=1)
    u_sd = np.concatenate([np.zeros((m, 1), dtype=complex), u01], axis=1)
    return u_dd, u_sd


def kappa(seq: PulseSequence, n: int, rabi_scale: float = 1.0) -> float:
    """Flip probability |<S,n-1|U_seq|D,n>|^2; exactly 0 for n = 0."""
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    if rabi_scale <= 0:
        raise ConfigError(f"rabi_scale must be > 0, got {rabi_scale}")
    if n == 0:
        return 0.0
    _, u_sd = _manifold_blocks(seq, np.array([rabi_scale]), n + 1)
    return float(np.abs(u_sd[0, n]) ** 2)


def kappa_profile(seq: PulseSequence, n_max: int = 10, rabi_scale: float = 1.0) -> StepProfile:
    """kappa(n) for n = 0..n_max-1."""
    _, u_sd = _manifold_blocks(seq, np.array([rabi_scale]), n_max)
    return StepProfile(np.abs(u_sd[0]) ** 2)


@dataclass(frozen=True)
class StepMeasurement:
    """Kraus pair of the step-pulse measurement on the motional space.

    k_dark is the survival branch (internal state stays dark), k_bright the
    absorption branch (|n> -> |n-1> with the flip amplitude). Completeness
    K_dark+ K_dark + K_bright+ K_bright = 1 is enforced at construction.
    """

    k_dark: np.ndarray
    k_bright: np.ndarray

    def __post_init__(self):
        kd, kb = np.asarray(self.k_dark), np.asarray(self.k_bright)
        total = kd.conj().T @ kd + kb.conj().T @ kb
        defect = np.max(np.abs(total - np.eye(kd.shape[0])))
        if defect > COMPLETENESS_TOL:
            raise NumericalError(f"Kraus completeness defect {defect:.2e}")

    @property
    def n_cut(self) -> int:
        return self.k_dark.shape[0]


def build_measurement(
    seq: PulseSequence, space: FockSpace, rabi_scale: float = 1.0
) -> StepMeasurement:
    """Assemble the Kraus pair from the manifold unitaries at a given Rabi scale."""
    d = space.n_cut
    u_dd, u_sd = _manifold_blocks(seq, np.array([rabi_scale]), d)
    k_dark = np.diag(u_dd[0])
    k_bright = np.zeros((d, d), dtype=complex)
    ns = np.arange(1, d)
    k_bright[ns - 1, ns] = u_sd[0, 1:]
    return StepMeasurement(k_dark, k_bright)


def perfect_step_measurement(n_b: int, space: FockSpace) -> StepMeasurement:
    """Idealized limit: survival projector below n_b, clean n -> n-1 transfer above."""
    if not 1 <= n_b < space.n_cut:
        raise ConfigError(f"need 1 <= n_b < n_cut, got n_b={n_b}, n_cut={space.n_cut}")
    d = space.n_cut
    k_dark = np.diag((np.arange(d) < n_b).astype(complex))
    k_bright = np.zeros((d, d), dtype=complex)
    ns = np.arange(n_b, d)
    k_bright[ns - 1, ns] = 1.0
    return StepMeasurement(k_dark, k_bright)


def joint_pulse_unitary(seq: PulseSequence, space: FockSpace, rabi_scale: float = 1.0) -> np.ndarray:
    """Full unitary on the internal (x) motional space, built independently.

    Exponentiates the resonant sideband coupling Hamiltonian pulse by pulse
    on the 2*n_cut joint space (basis |S,m> then |D,m>). Used to cross-check
    the manifold-block construction; the two agree because the coupling is
    block diagonal in the {|S,n-1>, |D,n>} manifolds.
    """
    d = space.n_cut
    ratios = bsb_coupling_vector(d - 1, seq.sideband)
    u = np.eye(2 * d, dtype=complex)
    for phi_pi, t in zip(seq.phases_pi, seq.durations):
        h = np.zeros((2 * d, 2 * d), dtype=complex)
        phase = np.exp(-1j * np.pi * phi_pi)
        for m in range(d - 1):
            # S-index m couples to D-index d + m + 1
            h[m, d + m + 1] = rabi_scale * ratios[m] * phase
            h[d + m + 1, m] = rabi_scale * ratios[m] * np.conj(phase)
        u = expm(-1j * np.pi * t * h) @ u
    return u


# --- step-quality metric -----------------------------------------------------


def heaviside_step(n: np.ndarray, n_b: int) -> np.ndarray:
    """Discrete step H[n - n_b]: 0 below the threshold, 1 at and above."""
    return (np.asarray(n) >= n_b).astype(float)


def mean_step_error(
    seq: PulseSequence,
    n_b: int,
    n_range: int = 6,
    noise: IntensityNoise | None = None,
    samples: int = 0,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean |H[n-n_b] - kappa(n)| over levels n = 0..n_range-1.

    With `noise`, kappa is first averaged over `samples` per-shot Rabi-scale
    draws (requires samples >= 1 and an rng).
    """
    if n_range < n_b + 1:
        raise ConfigError(f"n_range must be >= n_b+1, got {n_range}")
    if noise is not None and noise.sigma_over_w > 0:
        if samples < 1:
            raise ConfigError("noise-averaged error needs samples >= 1")
        if rng is None:
            raise ConfigError("noise-averaged error needs an rng")
        scales = sample_rabi_scales(noise, rng, samples)
    else:
        scales = np.ones(1)
    _, u_sd = _manifold_blocks(seq, scales, n_range)
    kbar = np.mean(np.abs(u_sd) ** 2, axis=0)
    target = heaviside_step(np.arange(n_range), n_b)
    return float(np.mean(np.abs(target - kbar)))


# --- plain-text pulse tables -------------------------------------------------

_TABLE_HEADER = (
    "# step-pulse table\n"
    "# one [sequence] block per pulse: threshold n_b, pulse count m_p,\n"
    "# Lamb-Dicke eta, carrier Rabi angular frequency omega00 (rad/s),\n"
    "# phases in units of pi, durations in carrier Rabi periods\n"
)


def format_pulse_table(sequences) -> str:
    """Serialize sequences; floats use repr so write/read round-trips exactly."""
    blocks = [_TABLE_HEADER]
    for seq in sequences:
        blocks.append(
            "[sequence]\n"
            f"n_b = {seq.n_b_target}\n"
            f"m_p = {seq.m_p}\n"
            f"eta = {seq.sideband.eta!r}\n"
            f"omega00 = {seq.sideband.omega00!r}\n"
            f"phases_pi = {' '.join(repr(p) for p in seq.phases_pi)}\n"
            f"durations = {' '.join(repr(t) for t in seq.durations)}\n"
        )
    return "\n".join(blocks)


def parse_pulse_table(text: str) -> list[PulseSequence]:
    sequences = []
    block: dict[str, str] = {}

    def flush():
        if not block:
            return
        missing = {"n_b", "m_p", "eta", "omega00", "phases_pi", "durations"} - set(block)
        if missing:
            raise ConfigError(f"pulse table block missing fields: {sorted(missing)}")
        phases = tuple(float(x) for x in block["phases_pi"].split())
        durations = tuple(float(x) for x in block["durations"].split())
        if len(phases) != int(block["m_p"]) or len(durations) != int(block["m_p"]):
            raise ConfigError("m_p does not match the number of phases/durations")
        sequences.append(
            PulseSequence(
                n_b_target=int(block["n_b"]),
                phases_pi=phases,
                durations=durations,
                sideband=SidebandParams(float(block["eta"]), float(block["omega00"])),
            )
        )
        block.clear()

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[sequence]":
            flush()
            continue
        if "=" not in line:
            raise ConfigError(f"malformed pulse-table line: {raw!r}")
        key, _, value = line.partition("=")
        block[key.strip()] = value.strip()
    flush()
    if not sequences:
        raise ConfigError("pulse table contains no sequences")
    return sequences


def write_pulse_table(sequences, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_pulse_table(sequences))


def read_pulse_table(path) -> list[PulseSequence]:
    with open(path, encoding="utf-8") as fh:
        return parse_pulse_table(fh.read())


def reference_sequences() -> dict[tuple[int, int], PulseSequence]:
    """Bundled library of step-pulse sequences, keyed by (n_b, m_p)."""
    text = resources.files("qfpt.data").joinpath("step_pulse_library.txt").read_text()
    seqs = parse_pulse_table(text)
    return {(s.n_b_target, s.m_p): s for s in seqs}
