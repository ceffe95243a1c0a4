# Filename: services/cauchy_green_service.py
# Role: Polar quadrature grid on the unit disc, the weights R and X, and the Cauchy-Green operators
#       T, T1, T2 with their zeta-derivatives S, S1, S2
#
# Fields are expanded in angular Fourier modes c_m(rho) e^{i m theta}. For each mode the solid
# Cauchy transform reduces to radial integrals over [0, r] (modes m <= 0) and [r, 1] (modes m >= 1):
#
#     T f(zeta) = sum_m 2 e^{i(m-1)theta} ( int_0^r c_m (rho/r)^{1-m} drho  [m <= 0]
#                                          - int_r^1 c_m (r/rho)^{m-1} drho [m >= 1] )
#
# c_m is interpolated in rho on the Gauss-Legendre radii, and both integrals are done with a
# Gauss-Legendre rule on the sub-interval. Every kernel power has base <= 1.

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from config import Config
from exceptions import BranchError, ContractViolation, EvaluationError
from models import BoundaryTrace, DiscGrid, GridField

logger = logging.getLogger(__name__)

TRANSFORMS = ("T", "T1", "T2", "S", "S1", "S2")
BEURLING_VARIANTS = {"S": "S", "S1": "S1", "S2": "S2"}
WEIGHT_ROOTS = ((1 + 0j, 0.25), (-1 + 0j, 0.25), (1j, 0.5))
R_AT_ORIGIN = np.exp(0.75j * np.pi)
PREVERTICES = tuple(root for root, _ in WEIGHT_ROOTS)

# R' is singular at the prevertices; L^2 norms switch to a local polar rule inside this radius
CORNER_INNER, CORNER_OUTER = 0.15, 0.6

# L^p windows on which the zeta-derivatives are bounded
S_WINDOWS = {"S": (1.0, float("inf")), "S1": (1.0, float("inf")), "S2": (4.0 / 3.0, 8.0 / 3.0)}


# =====================================================
# GRID
# =====================================================

def make_grid(nr: Optional[int] = None, ntheta: Optional[int] = None) -> DiscGrid:
    """Gauss-Legendre radii on (0, 1) and midpoint angles (k + 1/2) 2 pi / ntheta."""
    nr = nr or Config.GRID_NR
    ntheta = ntheta or Config.GRID_NTHETA
    if nr < 2 or ntheta < 4:
        raise ContractViolation(f"grid too small: nr={nr}, ntheta={ntheta}")
    x, wx = np.polynomial.legendre.leggauss(nr)
    radii = 0.5 * (x + 1.0)
    angles = (np.arange(ntheta) + 0.5) * 2 * np.pi / ntheta
    return DiscGrid(radii=radii, radial_weights=0.5 * wx, angles=angles)


def sample_field(grid: DiscGrid, func: Callable[[np.ndarray], np.ndarray]) -> GridField:
    return GridField(grid, func(grid.nodes))


def grid_l2_norm(f: GridField) -> float:
    return float(np.sqrt(np.sum(f.grid.weights[:, None] * np.abs(f.values) ** 2)))


def integrate(f: GridField) -> np.ndarray:
    """Quadrature of f over the disc, per component."""
    return np.sum(f.grid.weights[:, None] * f.values, axis=0)


# =====================================================
# WEIGHTS R AND X
# =====================================================

def branch_power(zeta, root: complex, exponent: float) -> np.ndarray:
    """(zeta - root)^exponent with the cut on the ray running radially outward from the root."""
    zeta = np.asarray(zeta, dtype=complex)
    return offset_power(zeta - root, root, exponent)


def offset_power(diff, root: complex, exponent: float) -> np.ndarray:
    """branch_power given the offset zeta - root, for offsets too small to survive adding the root."""
    diff = np.asarray(diff, dtype=complex)
    phi0 = np.angle(root)
    ang = phi0 - np.mod(phi0 - np.angle(diff), 2 * np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(diff) ** exponent * np.exp(1j * exponent * ang)


def _on_weight_cut(zeta: np.ndarray) -> np.ndarray:
    hit = np.zeros(zeta.shape, dtype=bool)
    for root, _ in WEIGHT_ROOTS:
        q = zeta / root
        hit |= (np.abs(q.imag) <= 1e-14) & (q.real > 1.0 + 1e-14)
    return hit


def _raw_weight(zeta: np.ndarray) -> np.ndarray:
    out = np.full(zeta.shape, R_AT_ORIGIN, dtype=complex)
    for root, exponent in WEIGHT_ROOTS:
        out = out * branch_power(zeta, root, exponent)
    return out


@lru_cache(maxsize=1)
def _weight_normalization() -> complex:
    raw = complex(_raw_weight(np.zeros(1, dtype=complex))[0])
    return R_AT_ORIGIN / (raw / abs(raw))


def weight_R(zeta) -> np.ndarray:
    """R(zeta) = e^{3 pi i/4} (zeta-1)^{1/4} (zeta+1)^{1/4} (zeta-i)^{1/2}, normalized so R(0) = e^{3 pi i/4}."""
    zeta = np.asarray(zeta, dtype=complex)
    if np.any(_on_weight_cut(zeta)):
        raise BranchError("R evaluated on one of its branch cuts")
    return _raw_weight(zeta) * _weight_normalization()


def weight_R_derivative(zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    log_derivative = 0.25 / (zeta - 1) + 0.25 / (zeta + 1) + 0.5 / (zeta - 1j)
    return weight_R(zeta) * log_derivative


def sqrt_cut(zeta) -> np.ndarray:
    """sqrt with the cut on the nonnegative real axis and sqrt(-1) = i."""
    zeta = np.asarray(zeta, dtype=complex)
    if np.any((np.abs(zeta.imag) <= 1e-15) & (zeta.real >= 0)):
        raise BranchError("sqrt(zeta) evaluated on the nonnegative real axis")
    theta = np.mod(np.angle(zeta), 2 * np.pi)
    return np.sqrt(np.abs(zeta)) * np.exp(0.5j * theta)


def weight_X(zeta) -> np.ndarray:
    """X = R / sqrt(zeta); arg X is 3pi/4, pi/4, 0 on the arcs gamma1, gamma2, gamma3."""
    return weight_R(zeta) / sqrt_cut(zeta)


# =====================================================
# MODE-WISE EVALUATION
# =====================================================

@dataclass
class _Plan:
    grid: DiscGrid
    modes: np.ndarray
    forward: np.ndarray
    quad_x: np.ndarray
    quad_w: np.ndarray
    basis: BarycentricInterpolator


def _barycentric_weights(grid: DiscGrid) -> np.ndarray:
    """Closed-form weights for Gauss-Legendre nodes, (-1)^j sqrt((1 - x_j^2) w_j) on [-1, 1]."""
    x = 2 * grid.radii - 1
    w = 2 * grid.radial_weights
    return (-1.0) ** np.arange(grid.nr) * np.sqrt((1 - x ** 2) * w)


@lru_cache(maxsize=8)
def _plan(nr: int, ntheta: int) -> _Plan:
    grid = make_grid(nr, ntheta)
    modes = np.fft.fftfreq(ntheta, 1.0 / ntheta).round().astype(int)
    forward = np.exp(-1j * modes[:, None] * grid.angles[None, :]) / ntheta
    nq = (nr + ntheta // 2) // 2 + 4
    quad_x, quad_w = np.polynomial.legendre.leggauss(nq)
    # explicit weights: scipy otherwise draws a random node permutation per process
    basis = BarycentricInterpolator(grid.radii, np.eye(nr), wi=_barycentric_weights(grid))
    logger.debug(f"Built transform plan for grid {nr}x{ntheta} ({nq}-point radial sub-rules)")
    return _Plan(grid, modes, forward, quad_x, quad_w, basis)


@dataclass
class _RadialKernels:
    t_inner: np.ndarray
    t_outer: np.ndarray
    s_inner: np.ndarray
    s_outer: np.ndarray


def _basis_at(plan: _Plan, rho: np.ndarray) -> np.ndarray:
    nr = plan.grid.nr
    return np.asarray(plan.basis(rho.ravel())).reshape(rho.shape + (nr,))


def _interpolate_modes(plan: _Plan, c: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Mode-wise interpolant with angular coefficients c (M, nr, d) at points of the closed disc."""
    radii = np.minimum(np.abs(points), 1.0)
    theta = np.mod(np.angle(points), 2 * np.pi)
    a = np.einsum('ri,mid->mrd', _basis_at(plan, radii), c)
    phase = np.exp(1j * theta[:, None] * plan.modes[None, :])
    return np.einsum('tm,mtd->td', phase, a, optimize=True)


def _radial_kernels(plan: _Plan, r: np.ndarray) -> _RadialKernels:
    """Per-mode matrices (M, R, nr) mapping c_m on the grid radii to the radial integrals at radii r."""
    r = np.asarray(r, dtype=float)
    x, wq = plan.quad_x, plan.quad_w
    m = plan.modes[:, None, None]
    b = np.minimum(r, 1.0)[:, None]
    rho_in = b * (x[None, :] + 1) / 2
    w_in = b / 2 * wq[None, :]
    rho_out = b + (1 - b) * (x[None, :] + 1) / 2
    w_out = (1 - b) / 2 * wq[None, :]
    L_in = _basis_at(plan, rho_in)
    L_out = _basis_at(plan, rho_out)

    safe_r = np.where(r > 0, r, 1.0)[:, None]
    ratio_in = (rho_in / safe_r)[None]
    ratio_out = (b / rho_out)[None]
    nonpos, pos, pos2 = m <= 0, m >= 1, m >= 2
    k_t_in = np.where(nonpos, ratio_in ** np.where(nonpos, 1 - m, 0), 0.0)
    k_t_out = np.where(pos, ratio_out ** np.where(pos, m - 1, 0), 0.0)
    k_s_in = k_t_in / safe_r[None]
    k_s_out = np.where(pos2, ratio_out ** np.where(pos2, m - 2, 0) / rho_out[None], 0.0)

    def assemble(kernel, weights, basis):
        return np.einsum('mrq,rqi->mri', kernel * weights[None], basis, optimize=True)

    return _RadialKernels(
        t_inner=assemble(k_t_in, w_in, L_in),
        t_outer=assemble(k_t_out, w_out, L_out),
        s_inner=assemble(k_s_in, w_in, L_in),
        s_outer=assemble(k_s_out, w_out, L_out),
    )


class _TargetSet:
    """Evaluation points: the grid nodes themselves, or arbitrary points."""

    def __init__(self, plan: _Plan, points: Optional[np.ndarray] = None):
        self.plan = plan
        self.on_grid = points is None
        if self.on_grid:
            self.zeta = plan.grid.nodes
            self.radii = plan.grid.radii
        else:
            self.zeta = np.atleast_1d(np.asarray(points, dtype=complex))
            self.radii = np.abs(self.zeta)
        self.theta = np.mod(np.angle(self.zeta), 2 * np.pi)
        self.kernels = _radial_kernels(plan, self.radii)
        self.unit_row = _radial_kernels(plan, np.ones(1)).t_inner[:, 0, :]

    def angular(self, a: np.ndarray, shift: int) -> np.ndarray:
        """sum_m e^{i(m+shift)theta} a[m, radius, :] at every target."""
        freq = self.plan.modes + shift
        if self.on_grid:
            phase = np.exp(1j * self.plan.grid.angles[:, None] * freq[None, :])
            out = np.einsum('km,mjd->jkd', phase, a, optimize=True)
            return out.reshape(-1, a.shape[-1])
        phase = np.exp(1j * self.theta[:, None] * freq[None, :])
        return np.einsum('tm,mtd->td', phase, a, optimize=True)

    def cauchy(self, c: np.ndarray) -> np.ndarray:
        k = self.kernels
        a = 2 * (np.einsum('mri,mid->mrd', k.t_inner, c) - np.einsum('mri,mid->mrd', k.t_outer, c))
        return self.angular(a, -1)

    def local_values(self, c: np.ndarray, values: np.ndarray) -> np.ndarray:
        if self.on_grid:
            return values
        out = _interpolate_modes(self.plan, c, self.zeta)
        out[(self.radii > 1.0) | (self.radii == 0)] = 0
        return out

    def beurling(self, c: np.ndarray, values: np.ndarray) -> np.ndarray:
        k = self.kernels
        m = self.plan.modes[:, None, None]
        a = 2 * (m - 1) * (np.einsum('mri,mid->mrd', k.s_inner, c) - np.einsum('mri,mid->mrd', k.s_outer, c))
        local = np.exp(-2j * self.theta)[:, None] * self.local_values(c, values)
        return self.angular(a, -2) + local

    def moments(self, c: np.ndarray) -> np.ndarray:
        """K_m = int_0^1 c_m rho^{1-m} drho for m <= 0 (zero for m > 0)."""
        return np.einsum('mi,mid->md', self.unit_row, c)


@lru_cache(maxsize=8)
def _grid_targets(nr: int, ntheta: int) -> _TargetSet:
    return _TargetSet(_plan(nr, ntheta))


def _angular_coefficients(plan: _Plan, values: np.ndarray) -> np.ndarray:
    blocks = values.reshape(plan.grid.nr, plan.grid.ntheta, -1)
    return np.einsum('mk,jkd->mjd', plan.forward, blocks, optimize=True)


def _reflection_series(zeta: np.ndarray, K: np.ndarray, modes: np.ndarray, kind: str) -> np.ndarray:
    """Holomorphic series built from conj(K_m), m <= 0, with k = -m."""
    k = -modes[modes <= 0]
    Kc = np.conj(K[modes <= 0])
    if kind == "T1":
        exps, coef = k + 1, 2.0 * np.ones_like(k, dtype=float)
    elif kind == "S1":
        exps, coef = k, 2.0 * (k + 1)
    elif kind == "T2":
        exps, coef = k, 2.0 * np.ones_like(k, dtype=float)
    else:
        keep = k >= 1
        k, Kc = k[keep], Kc[keep]
        exps, coef = k - 1, 2.0 * k
    powers = zeta[:, None] ** exps[None, :]
    return powers @ (coef[:, None] * Kc)


def _weighted_parts(f: GridField, tset: _TargetSet, derivative: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """G = T(f/R) + zeta^{-1} conj(T(f/R)(1/conj zeta)) and, if asked, dG/dzeta; T2 f = R G."""
    plan = tset.plan
    values = f.values / weight_R(f.grid.nodes)[:, None]
    c = _angular_coefficients(plan, values)
    K = tset.moments(c)
    G = tset.cauchy(c) + _reflection_series(tset.zeta, K, plan.modes, "T2")
    if not derivative:
        return G, None
    return G, tset.beurling(c, values) + _reflection_series(tset.zeta, K, plan.modes, "S2")


def _evaluate(f: GridField, transform: str, targets: Optional[np.ndarray]) -> np.ndarray:
    if transform not in TRANSFORMS:
        raise ContractViolation(f"unknown transform '{transform}', expected one of {TRANSFORMS}")
    grid = f.grid
    plan = _plan(grid.nr, grid.ntheta)
    tset = _grid_targets(grid.nr, grid.ntheta) if targets is None else _TargetSet(plan, targets)

    if transform in ("T2", "S2"):
        G, dG = _weighted_parts(f, tset, derivative=transform == "S2")
        weight = weight_R(tset.zeta)[:, None]
        if transform == "T2":
            return weight * G
        return weight_R_derivative(tset.zeta)[:, None] * G + weight * dG

    values = f.values
    c = _angular_coefficients(plan, values)

    if transform == "T":
        return tset.cauchy(c)
    if transform == "S":
        return tset.beurling(c, values)

    zeta = tset.zeta
    K = tset.moments(c)
    if transform == "T1":
        return tset.cauchy(c) - _reflection_series(zeta, K, plan.modes, "T1")
    return tset.beurling(c, values) - _reflection_series(zeta, K, plan.modes, "S1")


def _check_targets(grid: DiscGrid, targets, closed_disc: bool) -> np.ndarray:
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    nodes = grid.nodes
    gap = np.abs(targets[:, None] - nodes[None, :]).min(axis=1)
    if np.any(gap < 1e-13):
        raise EvaluationError(f"target {targets[np.argmin(gap)]} coincides with a quadrature node")
    if closed_disc and np.any(np.abs(targets) > 1 + 1e-12):
        raise ContractViolation("symmetrized transforms are defined on the closed disc only")
    return targets


def _squeeze(f: GridField, out: np.ndarray) -> np.ndarray:
    return out[:, 0] if f.dim == 1 else out


# =====================================================
# PUBLIC OPERATORS
# =====================================================

def cauchy_T(f: GridField, targets: Sequence[complex]) -> np.ndarray:
    """
    Solid Cauchy transform Tf(zeta) = -(1/pi) int_D f(t)/(t - zeta) d^2 t.

    Targets may lie anywhere in the plane except on quadrature nodes; outside the closed disc
    Tf is holomorphic. Vector-valued fields are transformed componentwise.
    """
    targets = _check_targets(f.grid, targets, closed_disc=False)
    return _squeeze(f, _evaluate(f, "T", targets))


def op_T1(f: GridField, targets: Sequence[complex]) -> np.ndarray:
    """T1 f(zeta) = Tf(zeta) - conj(Tf(1/conj(zeta))); Re T1 f = 0 on the unit circle."""
    targets = _check_targets(f.grid, targets, closed_disc=True)
    return _squeeze(f, _evaluate(f, "T1", targets))


def op_T2(f: GridField, targets: Sequence[complex]) -> np.ndarray:
    """T2 f = R (T(f/R) + zeta^{-1} conj(T(f/R)(1/conj(zeta)))), the three-arc boundary operator."""
    targets = _check_targets(f.grid, targets, closed_disc=True)
    return _squeeze(f, _evaluate(f, "T2", targets))


def beurling_S(f: GridField, variant: str, targets: Sequence[complex]) -> np.ndarray:
    """zeta-derivative of T, T1 or T2 (variant 'S', 'S1', 'S2')."""
    if variant not in BEURLING_VARIANTS:
        raise ContractViolation(f"unknown variant '{variant}'")
    targets = _check_targets(f.grid, targets, closed_disc=variant != "S")
    return _squeeze(f, _evaluate(f, variant, targets))


def apply_on_grid(f: GridField, transform: str) -> GridField:
    """Any of T, T1, T2, S, S1, S2 evaluated at the grid nodes."""
    return GridField(f.grid, _evaluate(f, transform, None))


def evaluate_at(f: GridField, transform: str, targets) -> np.ndarray:
    """Unchecked evaluation at arbitrary targets, always shaped (targets, d)."""
    return _evaluate(f, transform, np.atleast_1d(np.asarray(targets, dtype=complex)))


def interpolate_field(f: GridField, targets) -> np.ndarray:
    """Values of the mode-wise interpolant of f at arbitrary points of the closed disc."""
    plan = _plan(f.grid.nr, f.grid.ntheta)
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    out = _interpolate_modes(plan, _angular_coefficients(plan, f.values), targets)
    out[np.abs(targets) > 1.0] = 0
    return out


# =====================================================
# DIAGNOSTICS
# =====================================================

DEFAULT_TARGETS = np.array([r * np.exp(1j * a) for r in (0.25, 0.5, 0.75) for a in (0.37, 1.91, 3.29, 4.73, 5.88)])


def dbar_residual(f: GridField, transform: str, points: Optional[Sequence[complex]] = None, h: Optional[float] = None) -> float:
    """max over points of |d-bar(transform f) - f| with centered differences of step h."""
    if transform not in ("T", "T1", "T2"):
        raise ContractViolation(f"d-bar residual is defined for T, T1, T2, not '{transform}'")
    points = DEFAULT_TARGETS if points is None else np.atleast_1d(np.asarray(points, dtype=complex))
    h = h or Config.DBAR_STEP
    stencil = np.concatenate([points + h, points - h, points + 1j * h, points - 1j * h])
    F = evaluate_at(f, transform, stencil).reshape(4, points.size, -1)
    dbar = 0.5 * ((F[0] - F[1]) / (2 * h) + 1j * (F[2] - F[3]) / (2 * h))
    expected = interpolate_field(f, points)
    return float(np.abs(dbar - expected).max())


def boundary_angles(n: Optional[int] = None) -> np.ndarray:
    """Midpoint angles on the circle; never 0, pi/2 or pi."""
    n = n or Config.BOUNDARY_SAMPLES
    return (np.arange(n) + 0.5) * 2 * np.pi / n


def boundary_trace(f: GridField, transform: str, n: Optional[int] = None) -> BoundaryTrace:
    angles = boundary_angles(n)
    values = evaluate_at(f, transform, np.exp(1j * angles))
    return BoundaryTrace(angles=angles, values=values)


def boundary_condition_residuals(trace: BoundaryTrace, kind: str) -> Dict[str, float]:
    """Per-arc residuals: Re v for T1; Im((1+i)v), Im((1-i)v), Im v on gamma1..3 for T2."""
    v = trace.values
    if kind == "T1":
        return {'real_part': float(np.abs(v.real).max(initial=0.0))}
    masks = trace.arc_masks()
    rotations = {'gamma1': 1 + 1j, 'gamma2': 1 - 1j, 'gamma3': 1.0}
    return {arc: float(np.abs(np.imag(rotations[arc] * v[mask])).max(initial=0.0)) for arc, mask in masks.items()}


def smooth_step(x, inner: float, outer: float) -> np.ndarray:
    """C-infinity cutoff: 1 for x <= inner, 0 for x >= outer."""
    t = np.clip((np.asarray(x, dtype=float) - inner) / (outer - inner), 0.0, 1.0)
    a = np.exp(-1.0 / np.maximum(1 - t, 1e-12))
    b = np.exp(-1.0 / np.maximum(t, 1e-12))
    return a / (a + b)


@lru_cache(maxsize=2)
def _corner_rule(n_radial: int = 48, n_angular: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """
    Polar rule centered on each prevertex p, weighted by the corner cutoff.

    Points are p + s e^{i(arg p + psi)} with s = CORNER_OUTER u^2, which turns the
    |zeta - p|^{-3/2} behavior of |R'|^2 into a polynomial in u. For each s, psi spans
    the arc where cos(psi) < -s/2, i.e. the part of the circle |zeta - p| = s inside the disc.
    """
    u, wu = np.polynomial.legendre.leggauss(n_radial)
    u, wu = (u + 1) / 2, wu / 2
    s = CORNER_OUTER * u ** 2
    ds = 2 * CORNER_OUTER * u * wu
    x, wx = np.polynomial.legendre.leggauss(n_angular)
    half = np.pi - np.arccos(-s / 2)
    psi = np.pi + half[:, None] * x[None, :]
    weights = (s * ds * half * smooth_step(s, CORNER_INNER, CORNER_OUTER))[:, None] * wx[None, :]
    points = [p + s[:, None] * np.exp(1j * (np.angle(p) + psi)) for p in PREVERTICES]
    return np.concatenate([z.ravel() for z in points]), np.tile(weights.ravel(), len(PREVERTICES))


def transform_l2_norms(f: GridField, variant: str) -> np.ndarray:
    """
    Per-component L^2(D) norms of S f, S1 f or S2 f.

    S2 f = R' G + R G' with G smooth when f vanishes near the circle. The grid rule takes the
    part away from the prevertices and _corner_rule the rest, G and G' being carried there by
    the mode-wise interpolant. S and S1 have no weight and use the grid rule alone.
    """
    if variant not in BEURLING_VARIANTS:
        raise ContractViolation(f"unknown variant '{variant}'")
    grid = f.grid
    if variant != "S2":
        out = apply_on_grid(f, variant).values
        return np.sqrt(np.sum(grid.weights[:, None] * np.abs(out) ** 2, axis=0))

    plan = _plan(grid.nr, grid.ntheta)
    G, dG = _weighted_parts(f, _grid_targets(grid.nr, grid.ntheta), derivative=True)
    nodes = grid.nodes
    on_grid = weight_R_derivative(nodes)[:, None] * G + weight_R(nodes)[:, None] * dG
    far = 1 - sum(smooth_step(np.abs(nodes - p), CORNER_INNER, CORNER_OUTER) for p in PREVERTICES)
    total = np.sum((grid.weights * far)[:, None] * np.abs(on_grid) ** 2, axis=0)

    points, weights = _corner_rule()
    G_near = _interpolate_modes(plan, _angular_coefficients(plan, G), points)
    dG_near = _interpolate_modes(plan, _angular_coefficients(plan, dG), points)
    near = weight_R_derivative(points)[:, None] * G_near + weight_R(points)[:, None] * dG_near
    total = total + np.sum(weights[:, None] * np.abs(near) ** 2, axis=0)
    return np.sqrt(total)


def field_l2_norms(f: GridField) -> np.ndarray:
    return np.sqrt(np.sum(f.grid.weights[:, None] * np.abs(f.values) ** 2, axis=0))


def isometry_ratio(f: GridField, variant: str) -> float:
    """||S_j f|| / ||f|| in L^2, with S2 resolved near the prevertices."""
    return float(np.linalg.norm(transform_l2_norms(f, variant)) / grid_l2_norm(f))


def isometry_errors(f: GridField, variant: str) -> np.ndarray:
    """| ||S_j f_k|| / ||f_k|| - 1 | for every component f_k."""
    return np.abs(transform_l2_norms(f, variant) / field_l2_norms(f) - 1)


def direct_sum_constant(p: float) -> float:
    """Norm constant of a direct sum of two L^p operators, 2^{1/2 - 1/p}."""
    return 2.0 ** (0.5 - 1.0 / p)


def direct_sum_norm_check(f: GridField, p: float = 2.0) -> Dict[str, Any]:
    """(S2, S1) acting on a 2-block field versus C_p times the larger block ratio."""
    if f.dim != 2:
        raise ContractViolation("direct-sum check expects a 2-block field")
    first, second = f.component(0), f.component(1)
    image = np.hypot(transform_l2_norms(first, "S2")[0], transform_l2_norms(second, "S1")[0])
    ratio = float(image / grid_l2_norm(f))
    block_max = max(isometry_ratio(first, "S2"), isometry_ratio(second, "S1"))
    bound = direct_sum_constant(p) * block_max
    return {'ratio': ratio, 'bound': bound, 'passed': ratio <= bound * (1 + 1e-12)}


def s_window(variant: str) -> tuple:
    return S_WINDOWS[variant]
