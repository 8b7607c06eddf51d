import numpy as np
import pytest

from qfpt.errors import ConfigError, NumericalError
from qfpt.fock import FockSpace, SidebandParams, bsb_coupling, thermal_state
from qfpt.stepgate import (
    IntensityNoise,
    PulseSequence,
    build_measurement,
    format_pulse_table,
    heaviside_step,
    joint_pulse_unitary,
    kappa,
    kappa_profile,
    mean_rabi_scale,
    mean_step_error,
    parse_pulse_table,
    perfect_step_measurement,
    read_pulse_table,
    sample_rabi_scale,
    sample_rabi_scales,
    write_pulse_table,
)

PARAMS = SidebandParams()


def single_pulse(duration, phase_pi=0.3, n_b=1):
    return PulseSequence(n_b, (phase_pi,), (duration,), PARAMS)


def test_kappa_zero_level_uncoupled(pulse_library):
    for seq in pulse_library.values():
        assert kappa(seq, 0) == 0.0
        assert kappa(seq, 0, rabi_scale=0.37) == 0.0


def test_single_pulse_rabi_flopping():
    # one resonant pulse of duration t flips manifold n with sin^2(pi r t)
    for n in (1, 2, 4):
        r = bsb_coupling(n - 1, PARAMS)
        for t in (0.5, 2.0, 7.3):
            for phase in (0.0, 0.71, 1.9):
                expected = np.sin(np.pi * r * t) ** 2
                assert kappa(single_pulse(t, phase), n) == pytest.approx(expected, abs=1e-12)


def test_single_pulse_pi_time():
    r0 = bsb_coupling(0, PARAMS)
    seq = single_pulse(1.0 / (2.0 * r0))
    assert kappa(seq, 1) == pytest.approx(1.0, abs=1e-12)


def test_reference_step_profile_shape(pulse_library):
    seq = pulse_library[(2, 9)]
    prof = kappa_profile(seq, 7).kappa
    assert prof[1] <= prof[2]
    assert np.all(prof[2:6] > 0.9)


def test_manifold_blocks_match_joint_unitary(pulse_library):
    space = FockSpace(12)
    for key in ((2, 9), (3, 8)):
        seq = pulse_library[key]
        for scale in (1.0, 0.83):
            meas = build_measurement(seq, space, scale)
            joint = joint_pulse_unitary(seq, space, scale)
            d = space.n_cut
            dark_block = joint[d:, d:]    # <D,m| U |D,n>
            bright_block = joint[:d, d:]  # <S,m| U |D,n>
            assert np.max(np.abs(np.diag(dark_block) - np.diag(meas.k_dark))) < 1e-9
            ns = np.arange(1, d)
            assert np.max(np.abs(bright_block[ns - 1, ns] - meas.k_bright[ns - 1, ns])) < 1e-9
            # block diagonality: nothing leaks outside the coupled manifolds
            off = bright_block.copy()
            off[ns - 1, ns] = 0.0
            assert np.max(np.abs(off)) < 1e-9


def test_measurement_completeness_and_kappa_link(pulse_library):
    space = FockSpace(10)
    for seq in pulse_library.values():
        meas = build_measurement(seq, space)  # constructor enforces completeness
        for n in range(1, 9):
            amp2 = abs(meas.k_bright[n - 1, n]) ** 2
            assert amp2 == pytest.approx(kappa(seq, n), abs=1e-10)


def test_completeness_violation_rejected():
    from qfpt.stepgate import StepMeasurement

    with pytest.raises(NumericalError, match="completeness"):
        StepMeasurement(np.eye(3), np.eye(3))


def test_perfect_step_measurement():
    space = FockSpace(6)
    meas = perfect_step_measurement(2, space)
    assert np.allclose(np.diag(meas.k_dark), [1, 1, 0, 0, 0, 0])
    for n in range(2, 6):
        assert meas.k_bright[n - 1, n] == 1.0
    with pytest.raises(ConfigError):
        perfect_step_measurement(6, space)


def test_dark_retention_on_cold_thermal_state(pulse_library):
    space = FockSpace(20)
    meas = build_measurement(pulse_library[(3, 9)], space)
    rho = thermal_state(0.07, space).rho
    p_dark = float(np.real(np.trace(meas.k_dark @ rho @ meas.k_dark.conj().T)))
    assert p_dark >= 0.9


def test_global_phase_shift_invariance(pulse_library):
    seq = pulse_library[(2, 10)]
    shifted = PulseSequence(
        seq.n_b_target,
        tuple(p + 0.437 for p in seq.phases_pi),
        seq.durations,
        seq.sideband,
    )
    for n in range(7):
        assert kappa(shifted, n) == pytest.approx(kappa(seq, n), abs=1e-10)
    assert mean_step_error(shifted, 2) == pytest.approx(mean_step_error(seq, 2), abs=1e-10)


def test_mean_step_error_perfect_step():
    r0 = bsb_coupling(0, PARAMS)
    seq = single_pulse(1.0 / (2.0 * r0))
    assert mean_step_error(seq, 1, n_range=2) == pytest.approx(0.0, abs=1e-12)


def test_mean_step_error_improves_with_pulse_count(pulse_library):
    errs2 = [mean_step_error(pulse_library[(2, mp)], 2) for mp in (9, 10, 11)]
    assert errs2[0] > errs2[1] > errs2[2]
    errs3 = [mean_step_error(pulse_library[(3, mp)], 3) for mp in (8, 9)]
    assert errs3[0] > errs3[1]


def test_noise_strictly_degrades_at_reference_strength(pulse_library, rng):
    noise = IntensityNoise(0.13)
    for (nb, _), seq in pulse_library.items():
        clean = mean_step_error(seq, nb)
        noisy = mean_step_error(seq, nb, noise=noise, samples=4000, rng=rng)
        assert noisy > clean


def test_mean_step_error_validation(pulse_library):
    seq = pulse_library[(2, 9)]
    with pytest.raises(ConfigError, match="n_range"):
        mean_step_error(seq, 2, n_range=2)
    with pytest.raises(ConfigError, match="samples"):
        mean_step_error(seq, 2, noise=IntensityNoise(0.1), samples=0, rng=np.random.default_rng(0))


def test_rabi_scale_sampling(rng):
    assert sample_rabi_scale(IntensityNoise(0.0), rng) == 1.0
    draws = sample_rabi_scales(IntensityNoise(0.13), rng, 1_000_000)
    assert np.all(draws > 0) and np.all(draws <= 1)
    expected = mean_rabi_scale(IntensityNoise(0.13))
    assert expected == pytest.approx(1.0 / (1.0 + 2 * 0.13**2), rel=1e-12)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - expected) < 3 * se


def test_rabi_scale_intensity_law(rng):
    noise = IntensityNoise(0.2, law="intensity")
    draws = sample_rabi_scales(noise, rng, 500_000)
    expected = 1.0 / (1.0 + 4 * 0.04)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - expected) < 4 * se


def test_heaviside_step():
    assert list(heaviside_step(np.arange(5), 2)) == [0.0, 0.0, 1.0, 1.0, 1.0]


def test_pulse_table_round_trip(tmp_path, pulse_library):
    seqs = list(pulse_library.values())
    path = tmp_path / "table.txt"
    write_pulse_table(seqs, path)
    back = read_pulse_table(path)
    assert [s.phases_pi for s in back] == [s.phases_pi for s in seqs]
    # bit-identical re-serialization
    assert format_pulse_table(back) == format_pulse_table(seqs)
    write_pulse_table(back, tmp_path / "table2.txt")
    assert (tmp_path / "table2.txt").read_bytes() == path.read_bytes()


def test_pulse_table_parse_errors():
    with pytest.raises(ConfigError, match="missing fields"):
        parse_pulse_table("[sequence]\nn_b = 2\n")
    with pytest.raises(ConfigError, match="no sequences"):
        parse_pulse_table("# empty\n")
    with pytest.raises(ConfigError, match="m_p does not match"):
        parse_pulse_table(
            "[sequence]\nn_b = 1\nm_p = 2\neta = 0.05\nomega00 = 1.0\n"
            "phases_pi = 0.5\ndurations = 1.0\n"
        )
    with pytest.raises(ConfigError, match="malformed"):
        parse_pulse_table("[sequence]\nnonsense line\n")


def test_pulse_sequence_validation():
    with pytest.raises(ConfigError):
        PulseSequence(1, (0.1, 0.2), (1.0,), PARAMS)
    with pytest.raises(ConfigError):
        PulseSequence(1, (0.1,), (-1.0,), PARAMS)
    with pytest.raises(ConfigError):
        PulseSequence(0, (0.1,), (1.0,), PARAMS)
    with pytest.raises(ConfigError):
        IntensityNoise(-0.1)
    with pytest.raises(ConfigError):
        IntensityNoise(0.1, law="cubic")
