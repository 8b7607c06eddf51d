import numpy as np
import pytest
from scipy.special import eval_genlaguerre

from qfpt.errors import ConfigError, NumericalError, TruncationError
from qfpt.fock import (
    FockSpace,
    MotionalDensityMatrix,
    SidebandParams,
    TrajectoryState,
    bsb_coupling,
    bsb_coupling_vector,
    ground_state_dm,
    laguerre_assoc1,
    make_operators,
    thermal_state,
)

ETA = 0.05533


def test_ladder_operator_entries():
    a, ad, num = make_operators(FockSpace(2))
    assert a[0, 1] == 1.0
    assert np.count_nonzero(a) == 1

    a4, ad4, _ = make_operators(FockSpace(4))
    assert ad4[3, 2] == pytest.approx(np.sqrt(3), abs=0)


def test_number_operator_diagonal():
    for n_cut in (2, 5, 17):
        _, _, num = make_operators(FockSpace(n_cut))
        assert np.allclose(num, np.diag(np.arange(n_cut)))


def test_ad_a_matches_number_op_below_truncation():
    a, ad, num = make_operators(FockSpace(12))
    prod = ad @ a
    # all n_cut diagonal entries survive for a^dag a; the truncation artifact
    # sits in a a^dag instead
    assert np.allclose(np.diag(prod), np.arange(12))
    assert np.allclose(prod, num)


def test_fock_space_validation():
    with pytest.raises(ConfigError):
        FockSpace(1)
    assert FockSpace.for_heating(2, 3.0).n_cut == max(30, 10 * 2 + 30)
    assert FockSpace.for_heating().n_cut == 30


def test_laguerre_recurrence_against_scipy():
    xs = [0.0, 0.003061, 0.5, 2.0]
    for n in range(0, 40):
        for x in xs:
            assert laguerre_assoc1(n, x) == pytest.approx(
                float(eval_genlaguerre(n, 1, x)), rel=1e-10, abs=1e-12
            )


def test_bsb_coupling_reference_values():
    params = SidebandParams(eta=ETA)
    # independent oracle: scipy Laguerre evaluation of the same closed form
    def oracle(n):
        return float(
            np.exp(-ETA**2 / 2) * ETA * eval_genlaguerre(n, 1, ETA**2) / np.sqrt(n + 1)
        )

    assert bsb_coupling(0, params) == pytest.approx(0.055245, abs=1e-6)
    assert bsb_coupling(1, params) == pytest.approx(0.078010, abs=1.5e-6)
    for n in range(0, 60):
        assert bsb_coupling(n, params) == pytest.approx(oracle(n), rel=1e-12)


def test_bsb_coupling_vector_consistency():
    params = SidebandParams(eta=ETA)
    vec = bsb_coupling_vector(40, params)
    for n in range(40):
        assert vec[n] == pytest.approx(bsb_coupling(n, params), rel=1e-12)


def test_bsb_coupling_small_eta_limit():
    params = SidebandParams(eta=1e-4)
    base = bsb_coupling(0, params)
    for n in (1, 2, 5, 10):
        assert bsb_coupling(n, params) / base == pytest.approx(np.sqrt(n + 1), rel=1e-6)


def test_bsb_coupling_positive_in_working_range():
    params = SidebandParams(eta=ETA)
    vec = bsb_coupling_vector(120, params)
    assert np.all(vec > 0)


def test_thermal_state_ground():
    rho = thermal_state(0.0, FockSpace(8))
    assert np.allclose(rho.rho, ground_state_dm(FockSpace(8)).rho)


def test_thermal_state_geometric_law():
    rho = thermal_state(1.0, FockSpace(60))
    p = np.real(np.diag(rho.rho))
    assert p[0] == pytest.approx(0.5, rel=1e-10)
    assert p[1] == pytest.approx(0.25, rel=1e-10)
    assert abs(rho.trace - 1.0) < 1e-12
    assert np.all(np.diff(p) <= 1e-15)  # monotone nonincreasing


def test_thermal_state_leakage_warning():
    with pytest.warns(UserWarning, match="leakage"):
        thermal_state(5.0, FockSpace(10))


def test_density_matrix_validation():
    good = thermal_state(0.5, FockSpace(20))
    good.validate()

    bad = MotionalDensityMatrix(np.array([[0.5, 0.3], [0.1, 0.5]]))
    with pytest.raises(NumericalError, match="Hermitian"):
        bad.validate()

    off = MotionalDensityMatrix(np.diag([0.7, 0.7]).astype(complex))
    with pytest.raises(NumericalError, match="trace"):
        off.validate()

    neg = MotionalDensityMatrix(np.diag([1.5, -0.5]).astype(complex))
    with pytest.raises(NumericalError, match="eigenvalue"):
        neg.validate()


def test_tail_cap_enforcement():
    rho = MotionalDensityMatrix(np.diag([0.9, 0.1]).astype(complex))
    with pytest.raises(TruncationError):
        rho.check_tail(1e-4)
    rho.check_tail(0.2)

    psi = TrajectoryState(np.array([np.sqrt(0.99), 0.1]))
    with pytest.raises(TruncationError):
        psi.check_tail(1e-3)


def test_trajectory_state_accessors():
    psi = TrajectoryState(np.array([1.0, 1.0]) / np.sqrt(2))
    assert psi.norm == pytest.approx(1.0)
    assert psi.mean_occupation() == pytest.approx(0.5)


def test_sideband_params_validation():
    with pytest.raises(ConfigError):
        SidebandParams(eta=0.0)
    with pytest.raises(ConfigError):
        SidebandParams(eta=1.5)
    with pytest.raises(ConfigError):
        SidebandParams(omega00=-1.0)
