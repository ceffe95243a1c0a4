import numpy as np
import pytest
from scipy.linalg import expm

from exceptions import AlignmentError, ContractViolation
from models import ComplexSeq, CouplingMatrix, LatticeState, Nonlinearity
from services import dnls_service as dnls


@pytest.fixture(scope="module")
def cubic():
    return Nonlinearity.power(1.0)


def delta_state(half_window, c):
    u = np.zeros(2 * half_window + 1, dtype=complex)
    u[half_window] = c
    return LatticeState(ComplexSeq(u, -half_window))


def no_coupling(half_window):
    return CouplingMatrix(np.zeros((2 * half_window + 1,) * 2), bandwidth=0, index_offset=-half_window)


# --- right-hand side and Hamiltonian ---

def test_rhs_on_single_site(cubic):
    c = 0.5 + 0.5j
    out = dnls.rhs(delta_state(3, c), CouplingMatrix.nearest_neighbor(3), cubic)
    expected = np.zeros(7, dtype=complex)
    expected[3] = 1j * abs(c) ** 2 * c
    expected[2] = expected[4] = 1j * c
    assert np.allclose(out.entries, expected)
    assert out.index_offset == -3


def test_hamiltonian_of_single_site(cubic):
    c = 0.8 - 0.3j
    H = dnls.hamiltonian(delta_state(3, c), CouplingMatrix.nearest_neighbor(3), cubic)
    assert H == pytest.approx(abs(c) ** 4 / 2)


def test_window_mismatch_is_rejected(cubic):
    with pytest.raises(AlignmentError):
        dnls.rhs(dnls.gaussian_state(4), CouplingMatrix.nearest_neighbor(5), cubic)


def test_invalid_inputs():
    with pytest.raises(ContractViolation):
        Nonlinearity.power(0.0)
    with pytest.raises(ContractViolation):
        dnls.split_step_flow(dnls.gaussian_state(2), CouplingMatrix.nearest_neighbor(2), Nonlinearity.zero(), 1.0, 0.0)


# --- split-step flow ---

def test_norm_is_conserved(cubic):
    states = dnls.trajectory(dnls.gaussian_state(16), CouplingMatrix.nearest_neighbor(16), cubic, 1.0, 1e-2)
    assert len(states) == 101
    assert dnls.norm_drift(states) <= 1e-12


def test_uncoupled_flow_matches_explicit_phase(cubic):
    start = dnls.random_state(8, seed=3)
    out = dnls.split_step_flow(start, no_coupling(8), cubic, 1.0, 1e-2)
    exact = dnls.explicit_phase_solution(start, cubic, 1.0)
    assert np.allclose(out.u.entries, exact.u.entries, atol=1e-12, rtol=0)
    assert out.time == pytest.approx(1.0)


def test_linear_flow_matches_matrix_exponential():
    A = CouplingMatrix.nearest_neighbor(8, strength=0.7)
    start = dnls.gaussian_state(8)
    out = dnls.split_step_flow(start, A, Nonlinearity.zero(), 1.0, 1e-2)
    assert np.allclose(out.u.entries, expm(1j * A.matrix) @ start.u.entries, atol=1e-10)


def test_energy_drift_is_second_order(cubic):
    study = dnls.energy_drift_study(dnls.gaussian_state(32), CouplingMatrix.nearest_neighbor(32), cubic, 1.0, 1e-2)
    assert study['status'] == "pass"
    assert 3.5 <= study['ratio'] <= 4.5


def test_energy_is_exact_without_coupling(cubic):
    study = dnls.energy_drift_study(dnls.gaussian_state(6), no_coupling(6), cubic, 0.5, 1e-2)
    assert study['status'] == "exact"
    assert study['passed']


def test_trajectory_sampling_keeps_final_state(cubic):
    states = dnls.trajectory(dnls.gaussian_state(4), CouplingMatrix.nearest_neighbor(4), cubic, 0.1, 0.01, sample_every=3)
    assert [round(s.time, 10) for s in states] == [0.0, 0.03, 0.06, 0.09, 0.1]


# --- variational flow ---

def test_variation_on_zero_background_is_unitary(cubic):
    A = CouplingMatrix.nearest_neighbor(6)
    states = dnls.trajectory(delta_state(6, 0.0), A, cubic, 1.0, 1e-2)
    v0 = dnls.gaussian_state(6).u
    norms = [np.linalg.norm(v) for v in dnls.variational_flow(states, v0, A, cubic, record_all=True)]
    assert np.allclose(norms, np.linalg.norm(v0.entries), atol=1e-12, rtol=0)


def test_variation_matches_finite_differences(cubic):
    A = CouplingMatrix.nearest_neighbor(6)
    start = dnls.gaussian_state(6, amplitude=0.8)
    v0 = dnls.random_state(6, seed=11, width=2.0).u.entries
    states = dnls.trajectory(start, A, cubic, 0.5, 1e-3)
    v = dnls.variational_flow(states, ComplexSeq(v0, -6), A, cubic)
    eps = 1e-6
    U0 = np.stack([start.u.entries + eps * v0, start.u.entries - eps * v0], axis=1)
    U = dnls.flow_map(U0, A, cubic, 0.5, 1e-3)
    fd = (U[:, 0] - U[:, 1]) / (2 * eps)
    assert np.linalg.norm(v.entries - fd) <= 1e-4 * np.linalg.norm(fd)


def test_variational_flow_accepts_columns(cubic):
    A = CouplingMatrix.nearest_neighbor(3)
    states = dnls.trajectory(dnls.gaussian_state(3), A, cubic, 0.2, 1e-2)
    V = np.eye(7, 2, dtype=complex)
    out = dnls.variational_flow(states, V, A, cubic)
    assert out.shape == (7, 2)
    with pytest.raises(AlignmentError):
        dnls.variational_flow(states, np.ones(5), A, cubic)


# --- Gronwall bound ---

def test_gronwall_constants_linear_nearest_neighbor():
    consts = dnls.gronwall_constants(CouplingMatrix.nearest_neighbor(4), Nonlinearity.zero(), M=1.0, s=0.0)
    assert consts == pytest.approx({'C1': 2.0, 'C2': 2.0, 'C3': 8.0})


def test_gronwall_constants_weight_growth():
    consts = dnls.gronwall_constants(CouplingMatrix.nearest_neighbor(4), Nonlinearity.zero(), M=1.0, s=1.0)
    assert consts['C2'] == pytest.approx(2.0 * np.sqrt(2.5))


def test_gronwall_constants_without_coupling(cubic):
    assert dnls.gronwall_constants(no_coupling(4), Nonlinearity.zero(), M=1.0, s=0.0)['C3'] == 0
    consts = dnls.gronwall_constants(no_coupling(4), cubic, M=1.0, s=0.0)
    assert consts['C1'] == pytest.approx(6.0)
    assert consts['C3'] == pytest.approx(12.0)


def test_gronwall_bound_holds(cubic):
    start = dnls.gaussian_state(8)
    v0 = dnls.random_state(8, seed=5).u
    result = dnls.gronwall_check(start, v0, CouplingMatrix.nearest_neighbor(8), cubic, 0.5, 1e-2, s_values=(-1.0, 0.0, 1.0))
    assert result['passed'], result['rows']
    assert [row['s'] for row in result['rows']] == [-1.0, 0.0, 1.0]
    assert all(row['max_ratio'] <= 1 + 1e-12 for row in result['rows'])
    assert all(0 < row['max_ratio_time'] <= 0.5 + 1e-12 for row in result['rows'])


def test_gronwall_ratio_skips_the_initial_time():
    # linear flow keeps ||v(t)|| fixed, so the ratio is largest after the first step
    result = dnls.gronwall_check(dnls.gaussian_state(4), dnls.random_state(4, seed=2).u, CouplingMatrix.nearest_neighbor(4),
                                 Nonlinearity.zero(), 0.2, 1e-2, s_values=(0.0,))
    row = result['rows'][0]
    assert row['C3'] == pytest.approx(8.0)
    assert row['max_ratio'] == pytest.approx(np.exp(-0.04), rel=1e-6)
    assert row['max_ratio_time'] == pytest.approx(1e-2)


def test_gronwall_ratio_of_a_zero_variation(cubic):
    v0 = ComplexSeq(np.zeros(9, dtype=complex), -4)
    result = dnls.gronwall_check(dnls.gaussian_state(4), v0, CouplingMatrix.nearest_neighbor(4), cubic, 0.1, 1e-2,
                                 s_values=(0.0,))
    assert result['rows'][0]['max_ratio'] == 0.0
    assert result['rows'][0]['max_ratio_time'] is None
    assert result['passed']


# --- flow Jacobian ---

def test_linear_flow_jacobian_is_complex_linear():
    report = dnls.flow_jacobian_check(dnls.gaussian_state(6), CouplingMatrix.nearest_neighbor(6), Nonlinearity.zero(), 0.5, 1e-2)
    assert report['Q_norm'] <= 1e-6
    assert report['P_norm'] == pytest.approx(1.0, abs=1e-6)
    assert report['passed']


def test_cubic_flow_jacobian_is_symplectic(cubic):
    report = dnls.flow_jacobian_check(dnls.gaussian_state(16), CouplingMatrix.nearest_neighbor(16), cubic, 0.5, 1e-3)
    assert report['symplectic_residual'] <= 1e-5
    assert report['A_norm'] < 1
    assert report['Q_norm'] > 1e-4
    assert report['structure'].shape == (33, 33)
    assert [row['s'] for row in report['scale_norms']] == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert report['status'] == "pass"
