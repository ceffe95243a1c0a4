# Filename: services/disc_service.py
# Role: J-complex discs attached to the triangular cylinder: the inner contraction for the densities
#       (u, v), the damped outer iteration on (z, w, tau), and the area / degree / attachment diagnostics

import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np

from config import Config
from exceptions import AlignmentError, AnalysisError, ContractViolation, ConvergenceError, DegreeUndefinedError
from models import DiscGrid, DiscSolution, GridField, StructureField
from services import cauchy_green_service as cg
from services import conformal_service as sc

logger = logging.getLogger(__name__)

DEGREE_CENTER = 1j / 3


def _as_w0(w0, d_w: Optional[int] = None) -> np.ndarray:
    w0 = np.atleast_1d(np.asarray(w0 if w0 is not None else np.zeros(d_w or 1), dtype=complex))
    if w0.size < 1:
        raise ContractViolation("the disc needs at least one w-component")
    return w0


def _stack(z: GridField, w: GridField) -> np.ndarray:
    return np.hstack([z.values, w.values])


def _conformal_data(grid: DiscGrid):
    nodes = grid.nodes
    return GridField(grid, sc.schwarz_christoffel(nodes)), GridField(grid, sc.sc_derivative(nodes))


def _traces(grid: DiscGrid, u: GridField, v: GridField, tau: complex, w0: np.ndarray, n_boundary: Optional[int]):
    angles = cg.boundary_angles(n_boundary)
    circle = np.exp(1j * angles)
    z_trace = cg.evaluate_at(u, "T2", circle)[:, 0] + sc.schwarz_christoffel(circle)
    shift = cg.evaluate_at(v, "T1", [tau])[0]
    w_trace = cg.evaluate_at(v, "T1", circle) - shift[None, :] + w0[None, :]
    prevertices = np.array([1.0, 1j, -1.0])
    z_corners = cg.evaluate_at(u, "T2", prevertices)[:, 0] + sc.schwarz_christoffel(prevertices)
    return angles, z_trace, w_trace, z_corners


def conformal_solution(grid: DiscGrid, w0=None, z0: Optional[complex] = None, n_boundary: Optional[int] = None) -> DiscSolution:
    """The A = 0 disc: z = Phi, w = w0, tau = Phi^{-1}(z0)."""
    w0 = _as_w0(w0)
    z, _ = _conformal_data(grid)
    tau = 0j if z0 is None else complex(sc.sc_inverse(z0)[0])
    z0 = complex(sc.schwarz_christoffel(tau)[0]) if z0 is None else complex(z0)
    u = GridField(grid, np.zeros(grid.size))
    v = GridField(grid, np.zeros((grid.size, w0.size)))
    w = GridField(grid, np.tile(w0, (grid.size, 1)))
    angles, z_trace, w_trace, z_corners = _traces(grid, u, v, tau, w0, n_boundary)
    solution = DiscSolution(grid=grid, z=z, w=w, u=u, v=v, tau=tau, z0=z0, w0=w0, boundary_angles=angles,
                            z_trace=z_trace, w_trace=w_trace, z_corners=z_corners,
                            w_zeta=GridField(grid, np.zeros((grid.size, w0.size))), converged=True)
    solution.area = area(solution)
    solution.degree = boundary_degree(solution)
    return solution


# =====================================================
# INNER CONTRACTION
# =====================================================

def inner_solve(A: StructureField, z: GridField, w: GridField, phi_prime: Optional[GridField] = None,
                tol: Optional[float] = None, max_iter: Optional[int] = None) -> Dict[str, Any]:
    """
    Fixed point of (u, v) = A(z, w) (conj(S2 u + Phi'), conj(S1 v)), iterated from (0, 0).

    The a-priori bound a ||Phi'|| / (1 - q) uses the largest observed step ratio q; it dominates
    the sum of the step sizes, hence the norm of the fixed point.
    """
    tol = Config.INNER_TOL if tol is None else tol
    max_iter = Config.INNER_MAX_ITER if max_iter is None else max_iter
    grid = z.grid
    if A.dim != 1 + w.dim:
        raise AlignmentError(f"structure field has dimension {A.dim}, fields have 1 + {w.dim}")
    if phi_prime is None:
        phi_prime = _conformal_data(grid)[1]
    mats = A.checked(_stack(z, w), slack=Config.STRUCTURE_NORM_SLACK)

    U = np.zeros((grid.size, A.dim), dtype=complex)
    ratios, steps = [], []
    for iteration in range(1, max_iter + 1):
        u = GridField(grid, U[:, 0])
        v = GridField(grid, U[:, 1:])
        zeta_derivs = np.hstack([cg.apply_on_grid(u, "S2").values + phi_prime.values,
                                 cg.apply_on_grid(v, "S1").values])
        U_next = np.einsum('nij,nj->ni', mats, np.conj(zeta_derivs))
        step = cg.grid_l2_norm(GridField(grid, U_next - U))
        if steps and steps[-1] > 0:
            ratios.append(step / steps[-1])
        steps.append(step)
        U = U_next
        logger.debug(f"Inner iteration {iteration}: step {step:.3e}")
        if ratios and ratios[-1] >= 1.0:
            raise ConvergenceError(f"inner iteration is not contracting (ratio {ratios[-1]:.4f})",
                                   history=steps, ratio=ratios[-1])
        if step <= tol:
            break
    else:
        raise ConvergenceError(f"inner iteration did not reach {tol:g} in {max_iter} steps",
                               history=steps, ratio=max(ratios, default=None))

    q = max(ratios, default=0.0)
    phi_norm = cg.grid_l2_norm(phi_prime)
    return {
        'u': GridField(grid, U[:, 0]),
        'v': GridField(grid, U[:, 1:]),
        'iterations': iteration,
        'residual': steps[-1],
        'steps': steps,
        'ratios': ratios,
        'observed_ratio': q,
        'norm': cg.grid_l2_norm(GridField(grid, U)),
        'a_priori_bound': A.bound * phi_norm / (1.0 - q),
    }


# =====================================================
# OUTER ITERATION
# =====================================================

def _image(grid, inner, phi, tau, z0, w0):
    """F(z, w, tau) for the densities of the last inner solve."""
    u, v = inner['u'], inner['v']
    z_new = GridField(grid, cg.apply_on_grid(u, "T2").values + phi.values)
    shift = cg.evaluate_at(v, "T1", [tau])[0]
    w_new = GridField(grid, cg.apply_on_grid(v, "T1").values - shift[None, :] + w0[None, :])
    tau_new = sc.retraction_psi(z0 - cg.evaluate_at(u, "T2", [tau])[0, 0], z0)
    return z_new, w_new, tau_new


def _near_circle(tau: complex) -> bool:
    if abs(tau) > 1 - Config.TAU_BOUNDARY_TOL:
        logger.warning(f"tau = {tau} is within {Config.TAU_BOUNDARY_TOL:g} of the unit circle")
        return True
    return False


def outer_solve(A: StructureField, z0: complex, w0, grid: Optional[DiscGrid] = None, damping: Optional[float] = None,
                tol: Optional[float] = None, max_iter: Optional[int] = None, inner_tol: Optional[float] = None,
                n_boundary: Optional[int] = None) -> DiscSolution:
    """Damped Picard iteration x <- (1 - lambda) x + lambda F(x) on (z, w, tau), starting from the conformal disc."""
    grid = grid or cg.make_grid()
    damping = Config.OUTER_DAMPING if damping is None else damping
    tol = Config.OUTER_TOL if tol is None else tol
    max_iter = Config.OUTER_MAX_ITER if max_iter is None else max_iter
    if not 0 < damping <= 1:
        raise ContractViolation(f"damping must lie in (0, 1], got {damping}")
    w0 = _as_w0(w0)
    if A.dim != 1 + w0.size:
        raise AlignmentError(f"structure field has dimension {A.dim}, w0 has {w0.size} components")

    phi, phi_prime = _conformal_data(grid)
    z, w = phi, GridField(grid, np.tile(w0, (grid.size, 1)))
    tau = sc.retraction_psi(z0, z0)
    history, inner_ratios = [], []
    near_boundary = _near_circle(tau)
    lam = damping
    logger.info(f"Outer solve on {grid.nr}x{grid.ntheta} grid: a={A.bound:.3g}, d_w={w0.size}, z0={z0}")

    for iteration in range(1, max_iter + 1):
        inner = inner_solve(A, z, w, phi_prime, tol=inner_tol)
        inner_ratios.append(inner['observed_ratio'])
        z_new, w_new, tau_new = _image(grid, inner, phi, tau, z0, w0)
        residual = (cg.grid_l2_norm(GridField(grid, z_new.values - z.values))
                    + cg.grid_l2_norm(GridField(grid, w_new.values - w.values))
                    + abs(tau_new - tau))
        logger.debug(f"Outer iteration {iteration}: residual {residual:.3e}, damping {lam:g}")
        if history and residual > history[-1] and lam > Config.MIN_DAMPING:
            lam = max(lam / 2, Config.MIN_DAMPING)
            logger.warning(f"Outer residual grew to {residual:.3e}; damping reduced to {lam:g}")
        history.append(residual)
        if residual <= tol:
            break
        z = GridField(grid, (1 - lam) * z.values + lam * z_new.values)
        w = GridField(grid, (1 - lam) * w.values + lam * w_new.values)
        tau = (1 - lam) * tau + lam * tau_new
        near_boundary |= _near_circle(tau)
    else:
        raise ConvergenceError(f"outer iteration did not converge in {max_iter} sweeps", history=history)

    # final fields are the undamped image, with w re-anchored at the final tau
    u, v = inner['u'], inner['v']
    tau = tau_new
    near_boundary |= _near_circle(tau)
    z = z_new
    shift = cg.evaluate_at(v, "T1", [tau])[0]
    w = GridField(grid, cg.apply_on_grid(v, "T1").values - shift[None, :] + w0[None, :])
    angles, z_trace, w_trace, z_corners = _traces(grid, u, v, tau, w0, n_boundary)

    solution = DiscSolution(
        grid=grid, z=z, w=w, u=u, v=v, tau=tau, z0=complex(z0), w0=w0,
        boundary_angles=angles, z_trace=z_trace, w_trace=w_trace, z_corners=z_corners,
        w_zeta=cg.apply_on_grid(v, "S1"), history=history, inner_ratios=inner_ratios,
        iterations=iteration, converged=True, near_boundary=near_boundary,
    )
    solution.residuals = {
        'inner': inner['residual'],
        'outer': history[-1],
        'attachment': float(sc.TRIANGLE.distance_to_boundary(z_trace).max()),
        'interp_z': float(abs(_value_at(solution, tau)[0] - solution.z0)),
        'interp_w': float(np.abs(_value_at(solution, tau)[1] - w0).max()),
    }
    solution.area = area(solution)
    try:
        solution.degree = boundary_degree(solution)
    except DegreeUndefinedError as e:
        logger.warning(f"Degree undefined for the solved disc: {e}")
    logger.info(f"Outer solve converged in {iteration} sweeps: area {solution.area:.6f}, degree {solution.degree}")
    return solution


def _value_at(solution: DiscSolution, zeta: complex):
    """(z(zeta), w(zeta)) from the densities."""
    z_val = cg.evaluate_at(solution.u, "T2", [zeta])[0, 0] + sc.schwarz_christoffel(zeta)[0]
    shift = cg.evaluate_at(solution.v, "T1", [solution.tau])[0]
    w_val = cg.evaluate_at(solution.v, "T1", [zeta])[0] - shift + solution.w0
    return z_val, w_val


# =====================================================
# DIAGNOSTICS
# =====================================================

def boundary_loop(solution: DiscSolution) -> np.ndarray:
    """The z boundary trace with the corner images at angles 0, pi/2, pi inserted, ordered by angle."""
    angles = np.concatenate([solution.boundary_angles, [0.0, np.pi / 2, np.pi]])
    values = np.concatenate([solution.z_trace, solution.z_corners])
    return values[np.argsort(angles, kind="stable")]


def winding_number(values: Sequence[complex], center: complex) -> int:
    """Winding of the closed polygon `values` around `center`, by summed argument increments."""
    shifted = np.asarray(values, dtype=complex) - center
    if np.any(shifted == 0):
        raise DegreeUndefinedError("the loop passes through the center point")
    turns = np.angle(np.roll(shifted, -1) / shifted).sum() / (2 * np.pi)
    return int(np.rint(turns))


def _shoelace(values: np.ndarray) -> float:
    return 0.5 * float(np.imag(np.conj(values) * np.roll(values, -1)).sum())


def area(solution: DiscSolution) -> float:
    """
    Symplectic area of Z = (z, w).

    The z part is the boundary integral (1/2) of Im(conj(z) dz) over the closed trace; the w part is
    the grid quadrature of |w_zeta|^2 - |w_zetabar|^2 per component.
    """
    z_part = _shoelace(boundary_loop(solution))
    w_zeta = solution.w_zeta if solution.w_zeta is not None else cg.apply_on_grid(solution.v, "S1")
    density = np.abs(w_zeta.values) ** 2 - np.abs(solution.v.values) ** 2
    w_part = float(np.sum(solution.grid.weights[:, None] * density))
    return z_part + w_part


def boundary_degree(solution: DiscSolution, tol: Optional[float] = None) -> int:
    tol = Config.DEGREE_TRACE_TOL if tol is None else tol
    loop = boundary_loop(solution)
    gap = float(sc.TRIANGLE.distance_to_boundary(loop).max())
    if gap > tol:
        raise DegreeUndefinedError(f"boundary trace is {gap:.3g} away from the triangle boundary (tolerance {tol:g})")
    return winding_number(loop, DEGREE_CENTER)


def _z_at(solution: DiscSolution, points: np.ndarray) -> np.ndarray:
    """Z = (z, w) at arbitrary interior points, shape (points, 1 + d_w)."""
    z_val = cg.evaluate_at(solution.u, "T2", points) + sc.schwarz_christoffel(points)[:, None]
    shift = cg.evaluate_at(solution.v, "T1", [solution.tau])[0]
    w_val = cg.evaluate_at(solution.v, "T1", points) - shift[None, :] + solution.w0[None, :]
    return np.hstack([z_val, w_val])


def interior_nodes(grid: DiscGrid) -> np.ndarray:
    """The grid nodes closest to cg.DEFAULT_TARGETS."""
    nodes = grid.nodes
    return nodes[np.abs(nodes[None, :] - cg.DEFAULT_TARGETS[:, None]).argmin(axis=1)]


def cr_residual(solution: DiscSolution, A: StructureField, points: Optional[Sequence[complex]] = None,
                h: Optional[float] = None) -> float:
    """
    max over interior points of |Z_zetabar - A(Z) conj(Z_zeta)|.

    Both derivatives are centered differences of Z evaluated off-grid from the densities, so the
    figure is independent of the fixed point the solver iterated.
    Points default to grid nodes, where the interpolant of A(Z) conj(Z_zeta) is exact.
    """
    if points is None:
        points = interior_nodes(solution.grid)
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    h = h or Config.DBAR_STEP
    stencil = np.concatenate([points + h, points - h, points + 1j * h, points - 1j * h, points])
    Z = _z_at(solution, stencil).reshape(5, points.size, -1)
    d_x = (Z[0] - Z[1]) / (2 * h)
    d_y = (Z[2] - Z[3]) / (2 * h)
    Z_zetabar = 0.5 * (d_x + 1j * d_y)
    Z_zeta = 0.5 * (d_x - 1j * d_y)
    mats = A.checked(Z[4], slack=Config.STRUCTURE_NORM_SLACK)
    mismatch = Z_zetabar - np.einsum('nij,nj->ni', mats, np.conj(Z_zeta))
    return float(np.abs(mismatch).max())


def fixed_point_residual(solution: DiscSolution, A: StructureField) -> float:
    """Grid norm of (u, v) - A(Z) conj(S2 u + Phi', S1 v): consistency of the densities with their own map."""
    grid = solution.grid
    _, phi_prime = _conformal_data(grid)
    Z_zeta = np.hstack([cg.apply_on_grid(solution.u, "S2").values + phi_prime.values,
                        cg.apply_on_grid(solution.v, "S1").values])
    mats = A.checked(_stack(solution.z, solution.w), slack=Config.STRUCTURE_NORM_SLACK)
    U = np.hstack([solution.u.values, solution.v.values])
    mismatch = U - np.einsum('nij,nj->ni', mats, np.conj(Z_zeta))
    return cg.grid_l2_norm(GridField(grid, mismatch))


def verify_solution(solution: DiscSolution, A: StructureField) -> Dict[str, Any]:
    """Runs every disc check and reports; never raises for a failed check."""
    checks: Dict[str, Dict[str, Any]] = {}

    def record(name, value, tolerance, passed, detail=""):
        checks[name] = {'value': value, 'tolerance': tolerance, 'passed': bool(passed), 'detail': detail}

    try:
        cr = cr_residual(solution, A)
        record('cauchy_riemann', cr, Config.CR_TOL, cr <= Config.CR_TOL)
    except AnalysisError as e:
        record('cauchy_riemann', None, Config.CR_TOL, False, str(e))

    try:
        fixed = fixed_point_residual(solution, A)
        record('fixed_point', fixed, Config.CR_TOL, fixed <= Config.CR_TOL)
    except AnalysisError as e:
        record('fixed_point', None, Config.CR_TOL, False, str(e))

    attachment = float(sc.TRIANGLE.distance_to_boundary(solution.z_trace).max())
    record('attachment', attachment, Config.ATTACHMENT_TOL, attachment <= Config.ATTACHMENT_TOL)

    re_w_spread = float(np.ptp(solution.w_trace.real, axis=0).max())
    record('re_w_constant', re_w_spread, Config.RE_W_TOL, re_w_spread <= Config.RE_W_TOL)

    inside = np.concatenate([solution.z.values[:, 0], solution.z_trace])
    escaped = ~sc.TRIANGLE.contains(inside)
    outside = float(sc.TRIANGLE.distance_to_boundary(inside[escaped]).max(initial=0.0))
    record('containment', outside, Config.ATTACHMENT_TOL, outside <= Config.ATTACHMENT_TOL)

    area_value = area(solution)
    record('area', area_value, Config.AREA_TOL, abs(area_value - 1.0) <= Config.AREA_TOL)

    try:
        degree = boundary_degree(solution)
        record('degree', degree, None, degree == 1)
    except DegreeUndefinedError as e:
        record('degree', None, None, False, str(e))

    tau_gap = 1.0 - abs(solution.tau)
    detail = "tau neared the unit circle during the iteration" if solution.near_boundary else ""
    record('tau_interior', tau_gap, Config.TAU_BOUNDARY_TOL,
           tau_gap > Config.TAU_BOUNDARY_TOL and not solution.near_boundary, detail)

    try:
        z_tau, w_tau = _value_at(solution, solution.tau)
        interp = max(abs(z_tau - solution.z0), float(np.abs(w_tau - solution.w0).max()))
        record('interpolation', interp, Config.ATTACHMENT_TOL, interp <= Config.ATTACHMENT_TOL)
    except AnalysisError as e:
        record('interpolation', None, Config.ATTACHMENT_TOL, False, str(e))

    passed = all(c['passed'] for c in checks.values())
    if not passed:
        failed = sorted(name for name, c in checks.items() if not c['passed'])
        logger.warning(f"Disc verification failed: {failed}")
    return {'checks': checks, 'passed': passed, 'status': "pass" if passed else "fail"}
