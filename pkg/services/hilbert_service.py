# Filename: services/hilbert_service.py
# Role: Truncated Hilbert-scale vectors: scale weights, scale norms, the standard symplectic form,
#       operator scale norms and the diagonal-conjugation bound

import logging
from typing import Any, Dict

import numpy as np

from exceptions import AlignmentError, ContractViolation
from models import ComplexSeq, ScaleWeights

logger = logging.getLogger(__name__)

WEIGHT_RULES = {
    'sobolev': lambda n: np.sqrt(1.0 + n.astype(float) ** 2),
    'linear': lambda n: 1.0 + np.abs(n).astype(float),
}


def scale_weights(index_offset: int, length: int, rule: str = "sobolev") -> ScaleWeights:
    """Weights theta_n for n = index_offset, ..., index_offset + length - 1."""
    if rule not in WEIGHT_RULES:
        raise ContractViolation(f"unknown weight rule '{rule}', expected one of {sorted(WEIGHT_RULES)}")
    if length < 1:
        raise ContractViolation("weight window must be non-empty")
    n = index_offset + np.arange(length)
    return ScaleWeights(theta=WEIGHT_RULES[rule](n), index_offset=index_offset, rule=rule)


def weights_for(x: ComplexSeq, rule: str = "sobolev") -> ScaleWeights:
    return scale_weights(x.index_offset, len(x), rule)


def ratio_bounds(weights: ScaleWeights) -> tuple:
    """Smallest and largest theta_n / theta_{n+1} on the window."""
    if len(weights) < 2:
        return (1.0, 1.0)
    ratios = weights.theta[:-1] / weights.theta[1:]
    return (float(ratios.min()), float(ratios.max()))


def scale_norm(x: ComplexSeq, weights: ScaleWeights, s: float) -> float:
    """||x||_s = ||D^s x||, the plain Euclidean norm at s = 0."""
    weights.check_aligned(x)
    return float(np.linalg.norm(x.entries * weights.power(s)))


def symplectic_form(u: ComplexSeq, v: ComplexSeq) -> float:
    """omega(u, v) = sum_n Im(conj(u_n) v_n)."""
    if len(u) != len(v):
        raise AlignmentError(f"symplectic form needs equal lengths, got {len(u)} and {len(v)}")
    return float(np.sum(np.imag(np.conj(u.entries) * v.entries)))


def conjugate_by_scale(matrix: np.ndarray, weights: ScaleWeights, s: float) -> np.ndarray:
    """D^s M D^{-s}."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if matrix.shape != (len(weights), len(weights)):
        raise AlignmentError(f"matrix {matrix.shape} does not match {len(weights)} weights")
    d = weights.power(s)
    return d[:, None] * matrix / d[None, :]


def operator_scale_norm(matrix: np.ndarray, weights: ScaleWeights, s: float) -> float:
    """Operator norm of a complex matrix with respect to ||.||_s."""
    return float(np.linalg.norm(conjugate_by_scale(matrix, weights, s), 2))


def diag_conjugation_residual(Q: np.ndarray, weights: ScaleWeights, s: float, s0: float, C: float) -> Dict[str, Any]:
    """
    Compares ||D^s Q D^{-s} - Q||_0 with 2 C |s| / s0.

    The hypotheses are ||Q||_sigma <= C for sigma in {-s0, 0, s0} and |s| <= s0. When they
    fail the report says so and the bound is not judged.
    """
    sigma_norms = {sigma: operator_scale_norm(Q, weights, sigma) for sigma in (-s0, 0.0, s0)}
    residual = float(np.linalg.norm(conjugate_by_scale(Q, weights, s) - np.asarray(Q, dtype=complex), 2))
    bound = 2.0 * C * abs(s) / s0 if s0 > 0 else float("inf")
    hypothesis = s0 > 0 and abs(s) <= s0 and all(v <= C * (1 + 1e-12) for v in sigma_norms.values())

    if not hypothesis:
        logger.warning(f"Diagonal conjugation: hypothesis not satisfied (norms {sigma_norms}, C={C}, s={s}, s0={s0})")
        status, passed = "hypothesis not satisfied", None
    else:
        passed = residual <= bound * (1 + 1e-12) + 1e-14
        status = "pass" if passed else "fail"

    return {
        'residual': residual,
        'bound': bound,
        'sigma_norms': {str(k): v for k, v in sigma_norms.items()},
        'hypothesis_satisfied': hypothesis,
        'passed': passed,
        'status': status,
    }
