import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exceptions import BranchError, ContractViolation, EvaluationError
from models import BoundaryTrace, GridField
from services import cauchy_green_service as cg


@pytest.fixture(scope="module")
def grid():
    return cg.make_grid(24, 64)


def gaussian(center=0.0, width=20.0):
    return lambda z: np.exp(-width * np.abs(z - center) ** 2)


# --- grid ---

def test_grid_weights_sum_to_pi(grid):
    assert abs(grid.weights.sum() - np.pi) < 1e-12


def test_grid_avoids_punctures_and_cut(grid):
    nodes = grid.nodes
    assert np.all(np.abs(nodes) < 1)
    on_cut = (np.abs(nodes.imag) < 1e-12) & (nodes.real >= 0)
    assert not on_cut.any()
    assert min(np.abs(nodes - p).min() for p in (1, -1, 1j)) > 1e-3


def test_tiny_grid_rejected():
    with pytest.raises(ContractViolation):
        cg.make_grid(1, 64)


# --- weights ---

def test_weight_R_at_origin():
    assert abs(cg.weight_R(0.0) - np.exp(0.75j * np.pi)) < 1e-14


@pytest.mark.parametrize("zeta", [0.3 + 0.2j, -0.5j, -0.7 + 0.1j, 0.9j, 0.99])
def test_weight_R_modulus(zeta):
    expected = abs(zeta - 1) ** 0.25 * abs(zeta + 1) ** 0.25 * abs(zeta - 1j) ** 0.5
    assert abs(abs(cg.weight_R(zeta)) - expected) < 1e-14


@pytest.mark.parametrize("theta, phase", [(np.pi / 4, 0.75 * np.pi), (0.75 * np.pi, 0.25 * np.pi),
                                          (1.5 * np.pi, 0.0), (0.1, 0.75 * np.pi), (1.2, 0.75 * np.pi),
                                          (2.0, 0.25 * np.pi), (3.3, 0.0), (6.1, 0.0)])
def test_weight_X_phase_on_arcs(theta, phase):
    x = cg.weight_X(np.exp(1j * theta))
    assert abs(np.angle(x) - phase) < 1e-12


def test_weight_R_is_continuous_inside_the_disc():
    theta = np.linspace(0, 2 * np.pi, 2001)
    values = cg.weight_R(0.95 * np.exp(1j * theta))
    assert np.abs(np.diff(values)).max() < 0.01


def test_weight_X_rejects_the_positive_axis():
    with pytest.raises(BranchError):
        cg.weight_X(0.5)


def test_weight_R_rejects_its_cuts():
    with pytest.raises(BranchError):
        cg.weight_R(2.0)
    with pytest.raises(BranchError):
        cg.weight_R(3j)


# --- transforms of simple data ---

def test_cauchy_of_one_inside_and_outside(grid):
    one = GridField(grid, np.ones(grid.size))
    inside = cg.cauchy_T(one, [0.3 + 0.2j])
    outside = cg.cauchy_T(one, [2.0])
    assert abs(inside[0] - (0.3 - 0.2j)) < 1e-6
    assert abs(outside[0] - 0.5) < 1e-6


def test_zero_field_maps_to_zero(grid):
    zero = GridField(grid, np.zeros(grid.size))
    targets = [0.1 + 0.1j, -0.4j, 0.0]
    for transform in ("T1", "T2"):
        assert np.abs(cg.evaluate_at(zero, transform, targets)).max() == 0
    for variant in ("S", "S1", "S2"):
        assert np.abs(cg.beurling_S(zero, variant, targets)).max() == 0


def test_T1_of_one(grid):
    one = GridField(grid, np.ones(grid.size))
    targets = np.array([0.3 + 0.2j, -0.6 - 0.1j, 0.05j])
    values = cg.op_T1(one, targets)
    assert np.allclose(values, np.conj(targets) - targets, atol=1e-10)


def test_S_of_one_vanishes(grid):
    one = GridField(grid, np.ones(grid.size))
    assert np.abs(cg.beurling_S(one, "S", [0.3 + 0.2j, -0.5 + 0.5j])).max() < 1e-6


def test_S1_maps_conj_zeta_to_minus_zeta(grid):
    f = cg.sample_field(grid, np.conj)
    out = cg.apply_on_grid(f, "S1")
    assert np.allclose(out.values[:, 0], -grid.nodes, atol=1e-10)


def test_T2_is_finite_at_origin(grid):
    f = cg.sample_field(grid, gaussian())
    assert np.isfinite(cg.op_T2(f, [0.0])).all()


# --- boundary conditions ---

def test_T1_boundary_trace_is_imaginary(grid):
    f = cg.sample_field(grid, lambda z: np.cos(3 * z) + 1j * np.abs(z) ** 2)
    trace = cg.boundary_trace(f, "T1", 200)
    residual = cg.boundary_condition_residuals(trace, "T1")
    assert residual['real_part'] < 1e-10


def test_T2_boundary_trace_satisfies_arc_conditions(grid):
    f = cg.sample_field(grid, lambda z: np.exp(-3 * np.abs(z - 0.2j) ** 2) * (1 + z))
    trace = cg.boundary_trace(f, "T2", 240)
    residuals = cg.boundary_condition_residuals(trace, "T2")
    assert set(residuals) == {'gamma1', 'gamma2', 'gamma3'}
    assert max(residuals.values()) < 1e-9


def test_boundary_trace_never_samples_corners():
    angles = cg.boundary_angles(400)
    BoundaryTrace(angles=angles, values=np.zeros(angles.size))


def test_boundary_trace_rejects_corner():
    with pytest.raises(ContractViolation):
        BoundaryTrace(angles=np.array([np.pi / 2]), values=np.zeros(1))


# --- d-bar residuals ---

def test_dbar_residual_of_T_on_one(grid):
    one = GridField(grid, np.ones(grid.size))
    assert cg.dbar_residual(one, "T") < 1e-5


def test_dbar_residual_of_zero(grid):
    zero = GridField(grid, np.zeros(grid.size))
    for transform in ("T", "T1", "T2"):
        assert cg.dbar_residual(zero, transform) == 0


def test_dbar_residual_of_T1_on_polynomial(grid):
    f = cg.sample_field(grid, lambda z: z ** 2 * np.conj(z) + 2 * np.conj(z) ** 3 - 1j * z + 1)
    assert cg.dbar_residual(f, "T1") < 1e-6


def test_dbar_residual_of_T2_on_bump(grid):
    f = cg.sample_field(grid, gaussian(0.1j))
    assert cg.dbar_residual(f, "T2") < 1e-4


def test_dbar_residual_of_T2_on_one():
    grid = cg.make_grid(32, 128)
    one = GridField(grid, np.ones(grid.size))
    assert cg.dbar_residual(one, "T2") < 1e-4


def test_T_is_holomorphic_outside(grid):
    f = cg.sample_field(grid, lambda z: 1 + z * np.conj(z))
    points = [1.5, -2j, 1.3 + 1.3j]
    assert cg.dbar_residual(f, "T", points=points) < 1e-6


def test_dbar_residual_rejects_derivative_transforms(grid):
    with pytest.raises(ContractViolation):
        cg.dbar_residual(GridField(grid, np.ones(grid.size)), "S1")


# --- isometries and vector extension ---

def narrow_gaussians(grid, count=10, seed=11):
    rng = np.random.default_rng(seed)
    columns = []
    for _ in range(count):
        center = 0.25 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        width = rng.uniform(40, 60)
        phase = np.exp(2j * np.pi * rng.uniform())
        columns.append(phase * np.exp(-width * np.abs(grid.nodes - center) ** 2))
    return GridField(grid, np.column_stack(columns))


def test_S1_isometry_on_bump(grid):
    f = cg.sample_field(grid, gaussian(0.1 + 0.1j))
    assert abs(cg.isometry_ratio(f, "S1") - 1) < 1e-3


def test_S2_isometry_on_gaussian_suite():
    f = narrow_gaussians(cg.make_grid(32, 128))
    errors = cg.isometry_errors(f, "S2")
    assert errors.shape == (10,)
    assert errors.max() < 1e-3


def test_S2_isometry_error_does_not_grow_under_refinement():
    coarse = cg.isometry_errors(narrow_gaussians(cg.make_grid(32, 128)), "S2").max()
    fine = cg.isometry_errors(narrow_gaussians(cg.make_grid(48, 192)), "S2").max()
    assert fine <= max(coarse, 1e-5)


def test_corner_rule_covers_the_cutoff_area():
    # integral of the cutoff over the disc, split between the corner rule and the grid rule
    grid = cg.make_grid(48, 192)
    nodes = grid.nodes
    near = sum(cg.smooth_step(np.abs(nodes - p), cg.CORNER_INNER, cg.CORNER_OUTER) for p in cg.PREVERTICES)
    _, weights = cg._corner_rule()
    assert weights.sum() == pytest.approx(np.sum(grid.weights * near), rel=1e-3)
    assert np.sum(grid.weights * (1 - near)) + weights.sum() == pytest.approx(np.pi, rel=1e-3)


def test_smooth_step():
    x = np.array([0.0, 0.15, 0.375, 0.6, 2.0])
    s = cg.smooth_step(x, 0.15, 0.6)
    assert s[0] == 1 and s[1] == 1 and s[3] == 0 and s[4] == 0
    assert s[2] == pytest.approx(0.5)


def test_direct_sum_constant():
    assert cg.direct_sum_constant(2) == 1.0
    assert cg.direct_sum_constant(4) == pytest.approx(2 ** 0.25)


def test_direct_sum_norm_check_at_p2(grid):
    f = GridField(grid, np.column_stack([gaussian()(grid.nodes), np.conj(grid.nodes)]))
    result = cg.direct_sum_norm_check(f)
    assert result['passed']


def test_vector_extension_is_componentwise(grid):
    phi = gaussian(0.2)(grid.nodes) * (1 + grid.nodes)
    h = np.array([1.0, -2.0, 0.5])
    scalar = cg.apply_on_grid(GridField(grid, phi), "S1").values
    vector = cg.apply_on_grid(GridField(grid, phi[:, None] * h[None, :]), "S1").values
    assert np.allclose(vector, scalar * h[None, :], atol=1e-12)


def _combination_residual(alpha, beta, transforms):
    grid = cg.make_grid(12, 32)
    f = cg.sample_field(grid, lambda z: np.exp(z))
    g = cg.sample_field(grid, lambda z: np.conj(z) ** 2)
    combo = GridField(grid, alpha * f.values + beta * g.values)
    targets = [0.2 + 0.3j, -0.5j]
    worst = 0.0
    for transform in transforms:
        lhs = cg.evaluate_at(combo, transform, targets)
        rhs = alpha * cg.evaluate_at(f, transform, targets) + beta * cg.evaluate_at(g, transform, targets)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


finite = dict(allow_nan=False, allow_infinity=False)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3, **finite), st.floats(-3, 3, **finite))
def test_transforms_are_real_linear(alpha, beta):
    # the symmetrized operators carry a conjugate reflection, so only real scalars pass through
    assert _combination_residual(alpha, beta, ("T", "T1", "T2", "S", "S1", "S2")) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=3, **finite), st.complex_numbers(max_magnitude=3, **finite))
def test_cauchy_and_beurling_are_complex_linear(alpha, beta):
    assert _combination_residual(alpha, beta, ("T", "S")) < 1e-9


def test_T1_is_not_complex_linear():
    assert _combination_residual(1j, 0.0, ("T1",)) > 1e-3


# --- errors ---

def test_target_on_node_is_rejected(grid):
    f = GridField(grid, np.ones(grid.size))
    with pytest.raises(EvaluationError):
        cg.cauchy_T(f, [grid.nodes[5]])


def test_symmetrized_transforms_need_closed_disc(grid):
    f = GridField(grid, np.ones(grid.size))
    with pytest.raises(ContractViolation):
        cg.op_T1(f, [1.5])


def test_unknown_variant(grid):
    with pytest.raises(ContractViolation):
        cg.beurling_S(GridField(grid, np.ones(grid.size)), "S3", [0.1])


def test_s_windows():
    assert cg.s_window("S2") == (4 / 3, 8 / 3)


# --- radial basis ---

def test_radial_basis_reproduces_polynomials():
    plan = cg._plan(16, 32)
    rho = np.linspace(0.0, 1.0, 11)
    basis = cg._basis_at(plan, rho)
    values = basis @ (plan.grid.radii ** 7 - 2 * plan.grid.radii)
    assert np.allclose(values, rho ** 7 - 2 * rho, atol=1e-12)


def test_radial_basis_weights_are_fixed():
    grid = cg.make_grid(16, 32)
    first = cg._barycentric_weights(grid)
    assert np.array_equal(first, cg._barycentric_weights(cg.make_grid(16, 32)))
    assert np.all(first[:-1] * first[1:] < 0)
