# Filename: services/symplectic_service.py
# Role: Real-linear operators {P, Q}: action, symplectic identities, inverse, complex representation,
#       seeded symplectic generators and the Hilbert-scale bound report

import logging
from typing import Any, Dict, Sequence

import numpy as np
from scipy.linalg import expm

from config import Config
from exceptions import AlignmentError, ContractViolation
from models import ComplexSeq, RealLinearOp, ScaleWeights
from services.hilbert_service import conjugate_by_scale

logger = logging.getLogger(__name__)


def identity(dim: int) -> RealLinearOp:
    return RealLinearOp(np.eye(dim), np.zeros((dim, dim)))


def apply(F: RealLinearOp, u: ComplexSeq) -> ComplexSeq:
    """F u = P u + Q conj(u)."""
    if len(u) != F.dim:
        raise AlignmentError(f"operator of dimension {F.dim} applied to a vector of length {len(u)}")
    return ComplexSeq(F.P @ u.entries + F.Q @ np.conj(u.entries), u.index_offset)


def compose(F: RealLinearOp, G: RealLinearOp) -> RealLinearOp:
    """F o G."""
    if F.dim != G.dim:
        raise AlignmentError(f"cannot compose dimensions {F.dim} and {G.dim}")
    return RealLinearOp(F.P @ G.P + F.Q @ np.conj(G.Q), F.P @ G.Q + F.Q @ np.conj(G.P))


def adjoint(F: RealLinearOp) -> RealLinearOp:
    """F* with respect to Re<u, v>: {P*, Q^t}."""
    return RealLinearOp(F.P.conj().T, F.Q.T)


def transpose(F: RealLinearOp) -> RealLinearOp:
    """F^t = {P^t, Q*}."""
    return RealLinearOp(F.P.T, F.Q.conj().T)


def to_real_matrix(F: RealLinearOp) -> np.ndarray:
    """Matrix of F acting on (Re u, Im u)."""
    a, b = F.P.real, F.P.imag
    c, d = F.Q.real, F.Q.imag
    return np.block([[a + c, d - b], [b + d, a - c]])


def from_real_matrix(M: np.ndarray) -> RealLinearOp:
    """{P, Q} split of a real 2n x 2n matrix; P z = (Fz - iF(iz))/2, Q conj(z) = (Fz + iF(iz))/2."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise AlignmentError(f"expected a real 2n x 2n matrix, got {M.shape}")
    n = M.shape[0] // 2
    m11, m12, m21, m22 = M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]
    P = 0.5 * ((m11 + m22) + 1j * (m21 - m12))
    Q = 0.5 * ((m11 - m22) + 1j * (m21 + m12))
    return RealLinearOp(P, Q)


def real_symplectic_unit(n: int) -> np.ndarray:
    """J with omega(X, Y) = X^T J Y on (Re, Im) coordinates."""
    return np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])


def symplectic_residuals(F: RealLinearOp) -> tuple:
    """Operator-norm residuals of P*P - Q^t conj(Q) = I, P^t conj(Q) - Q* P = 0, PP* - QQ* = I, PQ^t - QP^t = 0."""
    P, Q = F.P, F.Q
    eye = np.eye(F.dim)
    r1 = np.linalg.norm(P.conj().T @ P - Q.T @ Q.conj() - eye, 2)
    r2 = np.linalg.norm(P.T @ Q.conj() - Q.conj().T @ P, 2)
    r3 = np.linalg.norm(P @ P.conj().T - Q @ Q.conj().T - eye, 2)
    r4 = np.linalg.norm(P @ Q.T - Q @ P.T, 2)
    return (float(r1), float(r2), float(r3), float(r4))


def is_symplectic(F: RealLinearOp, tol: float = None) -> bool:
    tol = Config.SYMPLECTIC_TOL if tol is None else tol
    return max(symplectic_residuals(F)) <= tol


def inverse_symplectic(F: RealLinearOp, tol: float = None) -> RealLinearOp:
    """F^{-1} = {P*, -Q^t} for symplectic F."""
    residuals = symplectic_residuals(F)
    tol = Config.SYMPLECTIC_TOL if tol is None else tol
    if max(residuals) > tol:
        raise ContractViolation(f"operator is not symplectic (residuals {residuals}, tolerance {tol})")
    return RealLinearOp(F.P.conj().T, -F.Q.T)


def complex_representation(F: RealLinearOp) -> np.ndarray:
    """A = Q conj(P)^{-1}; P is invertible for symplectic F."""
    Pbar = np.conj(F.P)
    if np.linalg.cond(Pbar) > Config.SINGULAR_COND_LIMIT:
        raise ContractViolation("P is singular, so the operator cannot be symplectic (P must be invertible)")
    # A conj(P) = Q  <=>  conj(P)^T A^T = Q^T
    return np.linalg.solve(Pbar.T, F.Q.T).T


def complex_representation_bound(F: RealLinearOp) -> float:
    """||Q|| (1 + ||Q||^2)^{-1/2}."""
    q = float(np.linalg.norm(F.Q, 2))
    return q / np.sqrt(1.0 + q * q)


def random_symplectic(dim: int, spread: float, seed: int) -> RealLinearOp:
    """exp(J S) with S a seeded symmetric matrix of entry scale `spread`, split into {P, Q}."""
    if dim < 1 or spread < 0:
        raise ContractViolation(f"need dim >= 1 and spread >= 0, got dim={dim}, spread={spread}")
    rng = np.random.default_rng(seed)
    G = rng.normal(scale=spread, size=(2 * dim, 2 * dim))
    S = 0.5 * (G + G.T)
    M = expm(real_symplectic_unit(dim) @ S)
    return from_real_matrix(M)


def real_linear_scale_norm(F: RealLinearOp, weights: ScaleWeights, s: float) -> float:
    """Norm of F on (C^n, ||.||_s): D is real, so D^s F D^{-s} = {D^s P D^{-s}, D^s Q D^{-s}}."""
    conj_F = RealLinearOp(conjugate_by_scale(F.P, weights, s), conjugate_by_scale(F.Q, weights, s))
    return float(np.linalg.norm(to_real_matrix(conj_F), 2))


def scale_bound_report(F: RealLinearOp, weights: ScaleWeights, s_grid: Sequence[float], C: float, s0: float) -> Dict[str, Any]:
    """
    Evaluates ||P^{-1}||_s and ||Q conj(P)^{-1}||_s along s_grid.

    Hypotheses: ||F||_s <= C and ||F^{-1}||_s <= C on s_grid, s_grid inside [0, s0].
    Conclusions judged per s: ||P^{-1}||_s <= 2C and ||A||_s < 1; the observed a is the
    largest ||A||_s on the grid.
    """
    s_values = [float(s) for s in s_grid]
    try:
        F_inv = inverse_symplectic(F)
    except ContractViolation as e:
        logger.warning(f"Scale bound report: {e}")
        return {'status': "hypothesis not satisfied", 'passed': None, 'hypothesis_satisfied': False,
                'rows': [], 'error': str(e)}

    P_inv = np.linalg.inv(F.P)
    A = complex_representation(F)
    rows = []
    hypothesis = all(0 <= s <= s0 for s in s_values)
    for s in s_values:
        f_norm = real_linear_scale_norm(F, weights, s)
        f_inv_norm = real_linear_scale_norm(F_inv, weights, s)
        hypothesis = hypothesis and f_norm <= C and f_inv_norm <= C
        p_inv_norm = float(np.linalg.norm(conjugate_by_scale(P_inv, weights, s), 2))
        a_norm = float(np.linalg.norm(conjugate_by_scale(A, weights, s), 2))
        rows.append({
            's': s,
            'F_norm': f_norm,
            'F_inv_norm': f_inv_norm,
            'P_inv_norm': p_inv_norm,
            'A_norm': a_norm,
            'P_inv_ok': p_inv_norm <= 2 * C,
            'A_contracts': a_norm < 1.0,
        })

    a_observed = max((r['A_norm'] for r in rows), default=float("nan"))
    if not hypothesis:
        logger.warning(f"Scale bound report: hypothesis not satisfied for C={C}, s0={s0}")
        status, passed = "hypothesis not satisfied", None
    else:
        passed = all(r['P_inv_ok'] and r['A_contracts'] for r in rows)
        status = "pass" if passed else "fail"
    return {
        'rows': rows,
        'a_observed': a_observed,
        'hypothesis_satisfied': hypothesis,
        'passed': passed,
        'status': status,
    }
