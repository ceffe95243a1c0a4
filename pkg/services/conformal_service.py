# Filename: services/conformal_service.py
# Role: Christoffel-Schwarz map of the disc onto the triangle with vertices -1, 1, i,
#       its Newton inverse and the retraction Psi used by the outer disc iteration

import logging
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
from scipy.special import roots_jacobi

from config import Config
from exceptions import ContractViolation, ConvergenceError, DomainError
from models import TriangleDomain
from services.cauchy_green_service import branch_power, offset_power

logger = logging.getLogger(__name__)

TRIANGLE = TriangleDomain()

# prevertex -> (vertex image, interior angle / pi)
PREVERTICES = ((1 + 0j, 1 + 0j, 0.25), (-1 + 0j, -1 + 0j, 0.25), (1j, 1j, 0.5))


def _integrand(xi: np.ndarray, skip: Optional[int] = None) -> np.ndarray:
    out = np.ones(np.shape(xi), dtype=complex)
    for k, (prevertex, _, alpha) in enumerate(PREVERTICES):
        if k != skip:
            out = out * branch_power(xi, prevertex, alpha - 1.0)
    return out


@lru_cache(maxsize=4)
def _jacobi_rule(n: int, alpha: float):
    x, w = roots_jacobi(n, 0.0, alpha - 1.0)
    return 0.5 * (1.0 + x), w * 2.0 ** (-alpha)


def _integral_from_prevertex(zeta: np.ndarray, index: int) -> np.ndarray:
    """int_v^zeta of the integrand along the segment, v = PREVERTICES[index]."""
    v, _, alpha = PREVERTICES[index]
    t, w = _jacobi_rule(Config.SC_QUADRATURE_NODES, alpha)
    step = zeta - v
    out = np.zeros(zeta.shape, dtype=complex)
    moving = step != 0
    if np.any(moving):
        s = step[moving][:, None]
        xi = v + s * t[None, :]
        # (xi - v)^(alpha - 1) t^(1 - alpha) = s^(alpha - 1); v + s t may round to v itself
        own = offset_power(s[:, 0], v, alpha - 1.0)
        smooth = _integrand(xi, skip=index) * own[:, None]
        out[moving] = s[:, 0] * (smooth @ w)
    return out


@lru_cache(maxsize=1)
def _normalization() -> Dict[str, complex]:
    """G at the prevertices (G(1) = 0) and the scale C with Phi = 1 + C G."""
    origin = np.zeros(1, dtype=complex)
    to_origin = [complex(-_integral_from_prevertex(origin, k)[0]) for k in range(3)]
    base = {k: to_origin[k] - to_origin[0] for k in range(3)}
    scale = -2.0 / base[1]
    phi_i = 1.0 + scale * base[2]
    logger.debug(f"Christoffel-Schwarz scale {scale:.12g}, |Phi(i) - i| = {abs(phi_i - 1j):.3g}")
    return {'scale': scale, 'g_minus_one': base[1], 'g_i': base[2], 'phi_i_residual': abs(phi_i - 1j)}


def _nearest_prevertex(zeta: np.ndarray) -> np.ndarray:
    dists = np.stack([np.abs(zeta - v) for v, _, _ in PREVERTICES])
    return np.argmin(dists, axis=0)


def schwarz_christoffel(zeta) -> np.ndarray:
    """Phi(zeta) with Phi(1) = 1, Phi(-1) = -1, Phi(i) = i, for zeta in the closed disc."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    if np.any(np.abs(zeta) > 1 + 1e-12):
        raise DomainError("Christoffel-Schwarz map is evaluated on the closed disc only")
    norm = _normalization()
    g_at = (0.0, norm['g_minus_one'], norm['g_i'])
    nearest = _nearest_prevertex(zeta)
    G = np.zeros(zeta.shape, dtype=complex)
    for k in range(3):
        mask = nearest == k
        if np.any(mask):
            G[mask] = g_at[k] + _integral_from_prevertex(zeta[mask], k)
    out = 1.0 + norm['scale'] * G
    # vertices exactly
    for prevertex, vertex, _ in PREVERTICES:
        out[zeta == prevertex] = vertex
    return out


def sc_derivative(zeta) -> np.ndarray:
    """Phi'(zeta); infinite at the prevertices."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    return _normalization()['scale'] * _integrand(zeta)


def normalization_residuals() -> Dict[str, float]:
    """|Phi(v) - vertex| from the integrals between prevertices, before the vertices are pinned."""
    norm = _normalization()
    return {
        'phi_one': 0.0,
        'phi_minus_one': float(abs(1.0 + norm['scale'] * norm['g_minus_one'] + 1.0)),
        'phi_i': float(norm['phi_i_residual']),
        're_phi_origin': float(abs(schwarz_christoffel(0.0)[0].real)),
    }


# =====================================================
# INVERSE
# =====================================================

@lru_cache(maxsize=1)
def _lookup_table():
    radii = np.linspace(0.0, 0.995, 41)
    angles = (np.arange(128) + 0.5) * 2 * np.pi / 128
    pts = [(radii[:, None] * np.exp(1j * angles[None, :])).ravel()]
    # fans of points closing in on each prevertex
    deltas = np.geomspace(1e-12, 0.2, 36)
    fan = np.linspace(-np.pi / 2, np.pi / 2, 19)[1:-1]
    for prevertex, _, _ in PREVERTICES:
        pts.append((prevertex - prevertex * deltas[:, None] * np.exp(1j * fan[None, :])).ravel())
    zeta = np.concatenate(pts)
    return zeta, schwarz_christoffel(zeta)


def _newton(z: complex) -> complex:
    table_zeta, table_z = _lookup_table()
    zeta = complex(table_zeta[np.argmin(np.abs(table_z - z))])
    residual = abs(schwarz_christoffel(zeta)[0] - z)
    history = [residual]
    for _ in range(Config.SC_NEWTON_MAX_ITER):
        if residual <= Config.SC_NEWTON_TOL:
            return zeta
        step = -(schwarz_christoffel(zeta)[0] - z) / sc_derivative(zeta)[0]
        lam = 1.0
        while lam > 1e-8:
            trial = zeta + lam * step
            if abs(trial) > 1:
                trial /= abs(trial)
            trial_residual = abs(schwarz_christoffel(trial)[0] - z)
            if trial_residual < residual:
                break
            lam *= 0.5
        else:
            break
        if abs(trial - zeta) <= 1e-15:
            zeta, residual = trial, trial_residual
            break
        zeta, residual = trial, trial_residual
        history.append(residual)
    if residual > 1e-10:
        raise ConvergenceError(f"inverse map did not converge at z={z} (residual {residual:.3g})", history=history)
    return zeta


def sc_inverse(z) -> np.ndarray:
    """Phi^{-1} on the closed triangle by damped Newton from a tabulated start."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if not np.all(TRIANGLE.contains(z, tol=Config.TRIANGLE_TOL)):
        raise DomainError(f"inverse map called outside the closed triangle: {z[~TRIANGLE.contains(z, tol=Config.TRIANGLE_TOL)]}")
    out = np.empty(z.shape, dtype=complex)
    for k, point in enumerate(z):
        point = TRIANGLE.nearest_point(point)
        hit = [pv for pv, vertex, _ in PREVERTICES if point == vertex]
        out[k] = hit[0] if hit else _newton(point)
    return out


def retraction_psi(z: complex, z0: complex) -> complex:
    """Phi^{-1}(z) inside the closed triangle; outside, Phi^{-1} of the exit point of [z0, z]."""
    if not TRIANGLE.contains(z0) or TRIANGLE.distance_to_boundary(z0) <= Config.TRIANGLE_TOL:
        raise ContractViolation(f"z0 = {z0} must be strictly inside the triangle")
    target = TRIANGLE.segment_exit_point(z0, z)
    return complex(sc_inverse(target)[0])
