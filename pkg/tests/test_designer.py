import numpy as np
import pytest

from qfpt.designer import (
    DesignSpec,
    _PulseProblem,
    _run_restart,
    default_duration_bound,
    design_pulse,
    fidelity_report,
    objective,
)
from qfpt.errors import ConfigError
from qfpt.fock import SidebandParams, bsb_coupling
from qfpt.stepgate import IntensityNoise, PulseSequence, kappa

PARAMS = SidebandParams()


def test_objective_zero_for_exact_step():
    r0 = bsb_coupling(0, PARAMS)
    seq = PulseSequence(1, (0.2,), (1.0 / (2 * r0),), PARAMS)
    spec = DesignSpec(n_b=1, m_p=1, n_range=2, duration_bound=10.0)
    assert objective(seq, spec) == pytest.approx(0.0, abs=1e-24)


def test_objective_phase_shift_invariance(pulse_library):
    seq = pulse_library[(3, 9)]
    spec = DesignSpec(n_b=3, m_p=9)
    shifted = PulseSequence(
        3, tuple(p + 1.11 for p in seq.phases_pi), seq.durations, seq.sideband
    )
    assert objective(shifted, spec) == pytest.approx(objective(seq, spec), abs=1e-10)


def test_objective_single_pi_pulse_residual_structure():
    # resonant pi pulse on manifold 1 scored over 6 levels: level 1 is exact,
    # the residual lives on n >= 2 where sin^2 has rotated past the maximum
    r0 = bsb_coupling(0, PARAMS)
    seq = PulseSequence(1, (0.0,), (1.0 / (2 * r0),), PARAMS)
    spec = DesignSpec(n_b=1, m_p=1, n_range=6, duration_bound=10.0)
    expected = 0.0
    for n in range(2, 6):
        rn = bsb_coupling(n - 1, PARAMS)
        expected += (1.0 - np.sin(np.pi * rn / (2 * r0)) ** 2) ** 2
    assert objective(seq, spec) == pytest.approx(expected, rel=1e-10)


def test_design_single_pulse_finds_pi_time():
    spec = DesignSpec(n_b=1, m_p=1, n_range=2, duration_bound=10.0, restarts=8, seed=3)
    seq = design_pulse(spec)
    r0 = bsb_coupling(0, PARAMS)
    assert seq.durations[0] == pytest.approx(1.0 / (2 * r0), rel=1e-6)
    assert kappa(seq, 1) == pytest.approx(1.0, abs=1e-10)
    assert kappa(seq, 0) == 0.0


def test_design_deterministic_under_seed():
    spec = DesignSpec(n_b=1, m_p=2, n_range=3, restarts=4, seed=11, duration_bound=12.0)
    a = design_pulse(spec)
    b = design_pulse(spec)
    assert a.phases_pi == b.phases_pi
    assert a.durations == b.durations


def test_design_respects_duration_bounds():
    spec = DesignSpec(n_b=2, m_p=5, restarts=3, seed=5)
    seq = design_pulse(spec)
    assert all(0.0 <= t <= spec.duration_bound for t in seq.durations)


def test_restart_never_loses_to_its_start():
    spec = DesignSpec(n_b=2, m_p=6, restarts=1, seed=0)
    problem = _PulseProblem(spec)
    for child in np.random.SeedSequence(9).spawn(4):
        rng = np.random.default_rng(child)
        state = rng.bit_generator.state
        x, obj, _ = _run_restart(problem, rng)
        rng.bit_generator.state = state
        m = spec.m_p
        x0 = np.concatenate(
            [rng.uniform(0.0, 2.0, m), spec.duration_bound - rng.uniform(0.0, spec.duration_bound, m)]
        )
        assert obj <= problem.prob_objective(x0) + 1e-15


def test_design_beats_random_sequences():
    spec = DesignSpec(n_b=2, m_p=6, restarts=4, seed=21)
    seq = design_pulse(spec)
    best_obj = objective(seq, spec)
    rng = np.random.default_rng(0)
    for _ in range(20):
        rand = PulseSequence(
            2,
            tuple(rng.uniform(0, 2, 6)),
            tuple(rng.uniform(0.01, 4.0, 6)),
            PARAMS,
        )
        assert best_obj <= objective(rand, spec)


def test_fidelity_report_noise_free_consistency(pulse_library):
    seq = pulse_library[(2, 9)]
    spec = DesignSpec(n_b=2, m_p=9, seed=4)
    rep = fidelity_report(seq, spec)
    assert rep["noisy_error"] == rep["noiseless_error"]
    assert rep["kappa_profile"].shape == (10,)

    noisy = fidelity_report(seq, spec, noise=IntensityNoise(0.13), samples=2000)
    again = fidelity_report(seq, spec, noise=IntensityNoise(0.13), samples=2000)
    assert noisy["noisy_error"] == again["noisy_error"]  # seeded draw is reproducible
    assert noisy["noisy_error"] > noisy["noiseless_error"]


def test_default_bounds_by_threshold():
    assert default_duration_bound(1) == 10.0
    assert default_duration_bound(2) == 4.0
    assert default_duration_bound(3) == 6.0
    assert default_duration_bound(7) == 6.0


def test_design_spec_validation():
    with pytest.raises(ConfigError):
        DesignSpec(n_b=0, m_p=1)
    with pytest.raises(ConfigError):
        DesignSpec(n_b=2, m_p=3, n_range=2)
    with pytest.raises(ConfigError):
        DesignSpec(n_b=2, m_p=3, duration_bound=-1.0)
    with pytest.raises(ConfigError):
        DesignSpec(n_b=2, m_p=3, weights=(1.0,))
    with pytest.raises(ConfigError):
        DesignSpec(n_b=2, m_p=3, weights=(1, 1, 1, 1, 1, -1))
    with pytest.raises(ConfigError):
        DesignSpec(n_b=2, m_p=3, restarts=0)
