# Filename: models.py
# Role: Domain types shared by the services (vectors, operators, grids, solutions, reports)

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from exceptions import AlignmentError, ContractViolation, StructureFieldError


# =====================================================
# HILBERT SCALE
# =====================================================

@dataclass(frozen=True)
class ComplexSeq:
    """Finite window of a sequence in the Hilbert space, first index `index_offset`."""
    entries: np.ndarray
    index_offset: int = 0

    def __post_init__(self):
        entries = np.atleast_1d(np.asarray(self.entries, dtype=complex))
        if entries.ndim != 1 or entries.size < 1:
            raise ContractViolation("ComplexSeq needs a non-empty one-dimensional window")
        if not np.all(np.isfinite(entries)):
            raise ContractViolation("ComplexSeq entries must be finite")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return self.entries.size

    @property
    def indices(self) -> np.ndarray:
        return self.index_offset + np.arange(self.entries.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'index_offset': self.index_offset,
            'entries': [[float(c.real), float(c.imag)] for c in self.entries],
        }


@dataclass(frozen=True)
class ScaleWeights:
    """Diagonal weights theta_n of the scale operator D on an index window."""
    theta: np.ndarray
    index_offset: int = 0
    rule: str = "sobolev"

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
            raise ContractViolation("scale weights must be positive and finite")
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return self.theta.size

    def power(self, s: float) -> np.ndarray:
        return self.theta ** s

    def check_aligned(self, x: ComplexSeq) -> None:
        if len(x) != len(self) or x.index_offset != self.index_offset:
            raise AlignmentError(
                f"vector window [{x.index_offset}, {x.index_offset + len(x)}) does not match "
                f"weights window [{self.index_offset}, {self.index_offset + len(self)})"
            )


@dataclass(frozen=True)
class RealLinearOp:
    """Real-linear operator u -> P u + Q conj(u)."""
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=complex))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=complex))
        if P.shape != Q.shape or P.shape[0] != P.shape[1]:
            raise AlignmentError(f"P {P.shape} and Q {Q.shape} must be square and equal-sized")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        from utils import complex_matrix_to_json
        return {'P': complex_matrix_to_json(self.P), 'Q': complex_matrix_to_json(self.Q)}


# =====================================================
# DISC GRIDS AND FIELDS
# =====================================================

@dataclass(frozen=True)
class DiscGrid:
    """
    Polar quadrature grid on the unit disc.
    Node (j, k) sits at radii[j] * exp(i angles[k]) and is stored at row j * ntheta + k.
    """
    radii: np.ndarray
    radial_weights: np.ndarray
    angles: np.ndarray

    @property
    def nr(self) -> int:
        return self.radii.size

    @property
    def ntheta(self) -> int:
        return self.angles.size

    @property
    def key(self):
        return (self.nr, self.ntheta)

    @property
    def nodes(self) -> np.ndarray:
        return (self.radii[:, None] * np.exp(1j * self.angles[None, :])).ravel()

    @property
    def weights(self) -> np.ndarray:
        """Area weights for d^2 zeta; they sum to pi."""
        dtheta = 2 * np.pi / self.ntheta
        return np.repeat(self.radial_weights * self.radii * dtheta, self.ntheta)

    @property
    def size(self) -> int:
        return self.nr * self.ntheta


@dataclass(frozen=True)
class GridField:
    """Sampled (possibly vector-valued) function: values has shape (nodes, d)."""
    grid: DiscGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.size:
            raise AlignmentError(f"field has {values.shape[0]} rows, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise ContractViolation("GridField values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def component(self, j: int) -> "GridField":
        return GridField(self.grid, self.values[:, j])

    def polar_blocks(self) -> np.ndarray:
        """Values reshaped to (nr, ntheta, d)."""
        return self.values.reshape(self.grid.nr, self.grid.ntheta, self.dim)


@dataclass(frozen=True)
class BoundaryTrace:
    """Boundary samples on the unit circle, never at the corners 0, pi/2, pi."""
    angles: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if values.ndim == 1:
            values = values[:, None]
        corners = np.array([0.0, np.pi / 2, np.pi, 2 * np.pi])
        if np.any(np.isclose(np.mod(angles, 2 * np.pi)[:, None], corners[None, :], atol=1e-14, rtol=0)):
            raise ContractViolation("boundary samples may not sit on the corners 0, pi/2, pi")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "values", values)

    def arc_masks(self) -> Dict[str, np.ndarray]:
        a = np.mod(self.angles, 2 * np.pi)
        return {
            'gamma1': (a > 0) & (a < np.pi / 2),
            'gamma2': (a > np.pi / 2) & (a < np.pi),
            'gamma3': a > np.pi,
        }


# =====================================================
# DISC SOLVER
# =====================================================

@dataclass(frozen=True)
class TriangleDomain:
    """Open triangle {0 < Im z < 1 - |Re z|} with vertices -1, 1, i."""
    vertices: tuple = (-1 + 0j, 1 + 0j, 1j)

    # half-planes a . z <= b, with a given as a complex number
    EDGES = ((-1j, 0.0), (1 + 1j, 1.0), (-1 + 1j, 1.0))

    @property
    def area(self) -> float:
        return 1.0

    def _slack(self, z: np.ndarray) -> np.ndarray:
        """(b - a . z) / |a| per edge, shape (3,) + z.shape; all nonnegative inside."""
        z = np.asarray(z, dtype=complex)
        return np.stack([(b - (np.conj(a) * z).real) / abs(a) for a, b in self.EDGES])

    def contains(self, z, tol: float = 0.0) -> np.ndarray:
        """Membership in the closed triangle, enlarged by tol."""
        return np.all(self._slack(z) >= -tol, axis=0)

    def distance_to_boundary(self, z) -> np.ndarray:
        """Euclidean distance to the three edges, valid inside and outside."""
        z = np.asarray(z, dtype=complex)
        corners = (-1 + 0j, 1 + 0j, 1j, -1 + 0j)
        dist = np.full(z.shape, np.inf)
        for p, q in zip(corners[:-1], corners[1:]):
            d = q - p
            t = np.clip(((np.conj(d) * (z - p)).real) / abs(d) ** 2, 0.0, 1.0)
            dist = np.minimum(dist, np.abs(z - (p + t * d)))
        return dist

    def segment_exit_point(self, z0: complex, z: complex) -> complex:
        """The point where [z0, z] leaves the closed triangle; z itself if it never does."""
        if self.contains(z):
            return complex(z)
        d = complex(z) - complex(z0)
        t_exit = 1.0
        for a, b in self.EDGES:
            rate = (np.conj(a) * d).real
            if rate > 0:
                t_exit = min(t_exit, (b - (np.conj(a) * z0).real) / rate)
        return complex(z0) + t_exit * d

    def nearest_point(self, z: complex) -> complex:
        """z itself when inside, else the closest point of the boundary."""
        if self.contains(z):
            return complex(z)
        corners = (-1 + 0j, 1 + 0j, 1j, -1 + 0j)
        best, best_dist = None, np.inf
        for p, q in zip(corners[:-1], corners[1:]):
            d = q - p
            t = float(np.clip((np.conj(d) * (z - p)).real / abs(d) ** 2, 0.0, 1.0))
            candidate = p + t * d
            if abs(z - candidate) < best_dist:
                best, best_dist = candidate, abs(z - candidate)
        return complex(best)


@dataclass
class StructureField:
    """
    Complex representation A(Z) of the almost complex structure.
    `evaluate` maps an array of points (n, d_total) to matrices (n, d_total, d_total).
    """
    evaluate: Callable[[np.ndarray], np.ndarray]
    bound: float
    dim: int
    name: str = "custom"

    def __post_init__(self):
        if not 0 <= self.bound < 1:
            raise ContractViolation(f"structure bound a must lie in [0, 1), got {self.bound}")

    @classmethod
    def constant(cls, matrix, bound: Optional[float] = None, name: str = "constant") -> "StructureField":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        norm = float(np.linalg.norm(matrix, 2))
        a = norm if bound is None else bound

        def evaluate(points):
            return np.broadcast_to(matrix, (points.shape[0],) + matrix.shape)

        return cls(evaluate=evaluate, bound=a, dim=matrix.shape[0], name=name)

    def with_cutoff(self, contains: Callable[[np.ndarray], np.ndarray]) -> "StructureField":
        """A = 0 wherever the z-coordinate is outside the closed cylinder."""
        inner = self.evaluate

        def evaluate(points):
            mats = np.array(inner(points), dtype=complex)
            outside = ~contains(points[:, 0])
            mats[outside] = 0
            return mats

        return StructureField(evaluate=evaluate, bound=self.bound, dim=self.dim, name=f"{self.name}+cutoff")

    def checked(self, points: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        mats = np.asarray(self.evaluate(points), dtype=complex)
        if mats.shape != (points.shape[0], self.dim, self.dim):
            raise StructureFieldError(f"structure field returned shape {mats.shape}")
        norms = np.linalg.norm(mats, ord=2, axis=(1, 2))
        worst = float(norms.max(initial=0.0))
        if worst > self.bound + slack:
            raise StructureFieldError(f"|A(Z)| = {worst:.6g} exceeds the bound a = {self.bound:.6g}")
        return mats


@dataclass
class DiscSolution:
    grid: DiscGrid
    z: GridField
    w: GridField
    u: GridField
    v: GridField
    tau: complex
    z0: complex
    w0: np.ndarray
    boundary_angles: np.ndarray
    z_trace: np.ndarray
    w_trace: np.ndarray
    z_corners: np.ndarray
    w_zeta: Optional[GridField] = None
    area: float = float("nan")
    degree: Optional[int] = None
    residuals: Dict[str, float] = field(default_factory=dict)
    history: List[float] = field(default_factory=list)
    inner_ratios: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    # tau came within Config.TAU_BOUNDARY_TOL of the unit circle at some sweep
    near_boundary: bool = False

    @property
    def d_w(self) -> int:
        return self.w.dim

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tau': [float(self.tau.real), float(self.tau.imag)],
            'z0': [float(np.real(self.z0)), float(np.imag(self.z0))],
            'w0': [[float(c.real), float(c.imag)] for c in np.atleast_1d(self.w0)],
            'area': float(self.area),
            'degree': self.degree,
            'residuals': {k: float(v) for k, v in sorted(self.residuals.items())},
            'history': [float(h) for h in self.history],
            'inner_ratios': [float(r) for r in self.inner_ratios],
            'iterations': self.iterations,
            'converged': self.converged,
            'near_boundary': self.near_boundary,
            'grid': {'nr': self.grid.nr, 'ntheta': self.grid.ntheta},
        }


# =====================================================
# DNLS
# =====================================================

@dataclass(frozen=True)
class LatticeState:
    u: ComplexSeq
    time: float = 0.0

    @property
    def half_window(self) -> int:
        return -self.u.index_offset


@dataclass(frozen=True)
class CouplingMatrix:
    """Banded Hermitian coupling a_nk on the window starting at index_offset."""
    matrix: np.ndarray
    bandwidth: int
    index_offset: int = 0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        if a.shape[0] != a.shape[1]:
            raise AlignmentError("coupling matrix must be square")
        if not np.allclose(a, a.conj().T, atol=1e-14, rtol=0):
            raise ContractViolation("coupling matrix must be Hermitian")
        n = np.arange(a.shape[0])
        outside = np.abs(n[:, None] - n[None, :]) > self.bandwidth
        if np.any(a[outside] != 0):
            raise ContractViolation(f"coupling has entries beyond bandwidth {self.bandwidth}")
        object.__setattr__(self, "matrix", a)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def bound(self) -> float:
        return float(np.abs(self.matrix).max(initial=0.0))

    @property
    def half_window(self) -> int:
        return -self.index_offset

    @classmethod
    def nearest_neighbor(cls, half_window: int, strength: float = 1.0) -> "CouplingMatrix":
        """a_{n,n+1} = a_{n+1,n} = strength on indices -N..N."""
        size = 2 * half_window + 1
        off = np.full(size - 1, strength, dtype=complex)
        return cls(np.diag(off, 1) + np.diag(off, -1), bandwidth=1, index_offset=-half_window)

    @classmethod
    def from_dense(cls, matrix, index_offset: Optional[int] = None) -> "CouplingMatrix":
        """Infers the bandwidth from the nonzero pattern; the window is centered unless index_offset is given."""
        a = np.atleast_2d(np.asarray(matrix, dtype=complex))
        rows, cols = np.nonzero(a)
        bandwidth = int(np.abs(rows - cols).max(initial=0))
        if index_offset is None:
            index_offset = -(a.shape[0] // 2)
        return cls(a, bandwidth=bandwidth, index_offset=index_offset)


@dataclass(frozen=True)
class Nonlinearity:
    """f with f(0) = 0, its derivative and the primitive F (F' = f, F(0) = 0)."""
    func: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    primitive: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    exponent: Optional[float] = None
    coefficient: float = 1.0

    @classmethod
    def power(cls, p: float, coefficient: float = 1.0) -> "Nonlinearity":
        """f(x) = coefficient * x^p, p > 0; p = 1 is the cubic lattice NLS."""
        if p <= 0:
            raise ContractViolation(f"power nonlinearity needs p > 0, got {p}")

        def derivative(x):
            x = np.asarray(x, dtype=float)
            safe = np.where(x > 0, x, 1.0)
            # reported as 0 at x = 0; only x f'(x) enters the flow there
            return np.where(x > 0, coefficient * p * safe ** (p - 1), 0.0)

        return cls(
            func=lambda x: coefficient * np.asarray(x, dtype=float) ** p,
            derivative=derivative,
            primitive=lambda x: coefficient * np.asarray(x, dtype=float) ** (p + 1) / (p + 1),
            name="cubic" if p == 1 else f"power({p:g})",
            exponent=p,
            coefficient=coefficient,
        )

    @classmethod
    def zero(cls) -> "Nonlinearity":
        def zeros(x):
            return np.zeros(np.shape(x))

        return cls(func=zeros, derivative=zeros, primitive=zeros, name="zero", exponent=None, coefficient=0.0)


# =====================================================
# RUNS
# =====================================================

@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: Optional[float]
    passed: bool
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'value': None if self.value is None else float(self.value),
            'tolerance': None if self.tolerance is None else float(self.tolerance),
            'passed': bool(self.passed),
            'detail': self.detail,
        }


@dataclass
class ExperimentConfig:
    kind: str
    values: Dict[str, Any]
    output_dir: str
    seed: int

    def section(self, name: str) -> Dict[str, Any]:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}


@dataclass
class RunReport:
    kind: str
    checks: List[CheckResult] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)
    elapsed_seconds: float = 0.0
    artifacts: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name: str, value: float, tolerance: Optional[float], passed: bool, detail: str = "") -> CheckResult:
        check = CheckResult(name=name, value=value, tolerance=tolerance, passed=bool(passed), detail=detail)
        self.checks.append(check)
        return check

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = {
            'kind': self.kind,
            'passed': self.passed,
            'checks': [c.to_dict() for c in self.checks],
            'provenance': self.provenance,
            'artifacts': sorted(self.artifacts),
        }
        if include_timing:
            data['elapsed_seconds'] = self.elapsed_seconds
        return data
