import numpy as np
import pytest
from scipy.integrate import solve_ivp

from qfpt.errors import ConfigError, NumericalError
from qfpt.fock import FockSpace, MotionalDensityMatrix, ground_state, ground_state_dm, thermal_state
from qfpt.heating import (
    absorbing_fptd,
    birth_death_generator,
    evolve_heating_dm,
    evolve_heating_trajectories,
    evolve_heating_trajectory,
    derived_rng,
    liouvillian,
)

N_CUT = 30


def vacuum_heated_law(t, n_cut):
    """Analytic heating-from-vacuum populations p_n(t) = t^n / (1+t)^(n+1)."""
    n = np.arange(n_cut)
    return t**n / (1.0 + t) ** (n + 1)


def test_zero_duration_is_identity():
    rho = thermal_state(0.3, FockSpace(10))
    out = evolve_heating_dm(rho, 0.0)
    assert out is rho
    psi = ground_state(FockSpace(10))
    out2 = evolve_heating_trajectory(psi, 0.0, np.random.default_rng(0))
    assert np.allclose(out2.amplitudes, psi.amplitudes)


def test_vacuum_heats_to_thermal_law():
    rho = evolve_heating_dm(ground_state_dm(FockSpace(N_CUT)), 1.0, method="expm")
    p = np.real(np.diag(rho.rho))
    assert np.max(np.abs(p - vacuum_heated_law(1.0, N_CUT))) < 1e-8


def test_mean_occupation_grows_at_unit_rate():
    for t in (0.25, 1.0, 2.0):
        rho = evolve_heating_dm(ground_state_dm(FockSpace(45)), t, method="expm")
        assert rho.mean_occupation() == pytest.approx(t, abs=1e-6)


def test_rk4_matches_expm():
    rho0 = thermal_state(0.4, FockSpace(16))
    a = evolve_heating_dm(rho0, 0.8, method="rk4")
    b = evolve_heating_dm(rho0, 0.8, method="expm")
    assert np.max(np.abs(a.rho - b.rho)) < 1e-8


def test_trace_hermiticity_positivity_preserved():
    rng = np.random.default_rng(7)
    # random valid density matrix: mixture with coherences
    amp = rng.normal(size=(12, 3)) + 1j * rng.normal(size=(12, 3))
    rho = amp @ amp.conj().T
    rho /= np.trace(rho).real
    state = MotionalDensityMatrix(rho)
    for t in (0.1, 0.5):
        out = evolve_heating_dm(state, t, method="expm", tail_cap=1.0)
        assert abs(out.trace - 1.0) < 1e-8
        out.validate()


def test_diagonal_inputs_stay_diagonal():
    rho = thermal_state(0.8, FockSpace(25))
    out = evolve_heating_dm(rho, 0.7, method="expm")
    off = out.rho - np.diag(np.diag(out.rho))
    assert np.max(np.abs(off)) < 1e-10


def test_diagonal_dynamics_match_birth_death_oracle():
    """Independent oracle: stiff integration of the classical birth-death chain."""
    d = 24
    rng = np.random.default_rng(3)
    p0 = rng.random(d) ** 3
    p0 /= p0.sum()

    def rhs(_, p):
        dp = np.empty_like(p)
        n = np.arange(d)
        up_in = np.concatenate([[0.0], n[:-1] + 1.0]) * np.concatenate([[0.0], p[:-1]])
        down_in = np.concatenate([n[1:] + 0.0, [0.0]]) * np.concatenate([p[1:], [0.0]])
        up_out = np.where(n < d - 1, n + 1.0, 0.0) * p
        down_out = n * p
        dp[:] = up_in + down_in - up_out - down_out
        return dp

    sol = solve_ivp(rhs, (0.0, 0.6), p0, method="Radau", rtol=1e-10, atol=1e-12)
    oracle = sol.y[:, -1]

    rho = MotionalDensityMatrix(np.diag(p0).astype(complex))
    out = evolve_heating_dm(rho, 0.6, method="expm", tail_cap=1.0)
    assert np.max(np.abs(np.real(np.diag(out.rho)) - oracle)) < 1e-6


def test_liouvillian_preserves_trace_exactly():
    gen = liouvillian(8)
    # the trace functional is a left null vector of the generator
    tr = np.eye(8).reshape(-1)
    assert np.max(np.abs(tr @ gen)) < 1e-12


def test_trajectory_ensemble_mean_occupation():
    rng = np.random.default_rng(11)
    m = 10_000
    psi = np.zeros((m, N_CUT), dtype=complex)
    psi[:, 0] = 1.0
    out = evolve_heating_trajectories(psi, 1.0, rng)
    occ = np.sum(np.abs(out) ** 2 * np.arange(N_CUT), axis=1)
    # exact mean 1; MC stderr ~ sqrt(var(n))/sqrt(m) with var = nbar(nbar+1) = 2
    se = occ.std(ddof=1) / np.sqrt(m)
    assert abs(occ.mean() - 1.0) < 3 * se + 0.01  # small first-order bias allowance


def test_trajectory_short_time_jump_rate():
    rng = np.random.default_rng(5)
    m = 20_000
    dt = 0.01
    psi = np.zeros((m, 8), dtype=complex)
    psi[:, 0] = 1.0
    out = evolve_heating_trajectories(psi, dt, rng)
    jumped = np.abs(out[:, 1]) ** 2 > 0.5
    expected = m * dt  # upward rate <a a+> = 1 from the ground state
    assert abs(jumped.sum() - expected) < 4 * np.sqrt(expected)


def test_trajectory_histogram_matches_master_equation():
    rng = np.random.default_rng(13)
    m = 10_000
    psi = np.zeros((m, N_CUT), dtype=complex)
    psi[:, 0] = 1.0
    out = evolve_heating_trajectories(psi, 1.0, rng)
    # trajectory-averaged populations vs the deterministic diagonal
    pop = np.abs(out) ** 2
    target = vacuum_heated_law(1.0, N_CUT)
    for n in range(9):
        se = pop[:, n].std(ddof=1) / np.sqrt(m)
        assert abs(pop[:, n].mean() - target[n]) < 4 * se + 5e-4, f"bin {n}"


def test_single_trajectory_stays_normalized():
    rng = np.random.default_rng(2)
    psi = ground_state(FockSpace(20))
    out = evolve_heating_trajectory(psi, 0.5, rng)
    assert out.norm == pytest.approx(1.0, abs=1e-12)


def test_derived_rng_reproducible():
    a = derived_rng(42, 7).random(5)
    b = derived_rng(42, 7).random(5)
    c = derived_rng(42, 8).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_negative_duration_rejected():
    with pytest.raises(ConfigError):
        evolve_heating_dm(ground_state_dm(FockSpace(4)), -1.0)


def test_birth_death_generator_structure():
    q = birth_death_generator(3)
    assert np.allclose(np.diag(q), [-1.0, -3.0, -5.0])
    assert q[1, 0] == 1.0 and q[2, 1] == 2.0
    assert q[0, 1] == 1.0 and q[1, 2] == 2.0


def test_absorbing_fptd_exponential_limit():
    curve = absorbing_fptd(1, t_max=20.0, grid_dt=0.01)
    assert np.max(np.abs(curve.density - np.exp(-curve.times))) < 1e-6
    assert curve.cumulative[-1] > 0.999


def test_absorbing_fptd_moments_match_closed_form():
    for n_b in (1, 2, 3, 4):
        curve = absorbing_fptd(n_b)
        mean_ref = n_b
        second_ref = n_b * (3 * n_b + 1) / 2
        assert curve.mean == pytest.approx(mean_ref, rel=5e-3)
        assert curve.second_moment == pytest.approx(second_ref, rel=5e-3)


def test_absorbing_fptd_moment_oracle_via_resolvent():
    # independent route: moments from powers of the inverted generator
    for n_b in (2, 3):
        q = birth_death_generator(n_b)
        p0 = np.zeros(n_b)
        p0[0] = 1.0
        ones = np.ones(n_b)
        inv = np.linalg.inv(-q)
        mean = ones @ inv @ p0
        second = 2.0 * ones @ inv @ inv @ p0
        curve = absorbing_fptd(n_b)
        assert curve.mean == pytest.approx(mean, rel=1e-3)
        assert curve.second_moment == pytest.approx(second, rel=1e-3)


def test_absorbing_fptd_coarse_grid_rejected():
    with pytest.raises(NumericalError, match="inconsistent"):
        absorbing_fptd(1, t_max=2.0, grid_dt=0.01)  # horizon far too short
    with pytest.raises(ConfigError):
        absorbing_fptd(0)
