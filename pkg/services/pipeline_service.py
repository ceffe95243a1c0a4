# Filename: services/pipeline_service.py
# Role: Experiment configuration (schema, loading, coercion) and the four run pipelines:
#       validate-ops, solve-disc, dnls and nonsqueeze-pipeline

import logging
import os
import time
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from dotenv import dotenv_values

from config import Config
from exceptions import AlignmentError, AnalysisError, ConfigError
from models import (ComplexSeq, CouplingMatrix, ExperimentConfig, GridField, LatticeState, Nonlinearity, RealLinearOp,
                    RunReport, StructureField)
from services import cauchy_green_service as cg
from services import conformal_service as sc
from services import disc_service as ds
from services import dnls_service as dnls
from services import symplectic_service as symp
from services.hilbert_service import scale_weights
from services.report_service import Tables, build_provenance, write_run
from utils import complex_matrix_from_json, parse_complex, read_json

logger = logging.getLogger(__name__)

KINDS = ("validate-ops", "solve-disc", "dnls", "nonsqueeze-pipeline")
DNLS_CHECKS = ("norm", "energy", "explicit", "gronwall", "jacobian")

# key -> (type, default)
CONFIG_SCHEMA: Dict[str, Tuple[type, Any]] = {
    'seed': (int, Config.DEFAULT_SEED),
    'report.include_timing': (bool, False),
    # --- grid ---
    'grid.nr': (int, Config.GRID_NR),
    'grid.ntheta': (int, Config.GRID_NTHETA),
    'grid.boundary_samples': (int, Config.BOUNDARY_SAMPLES),
    # --- operator validation ---
    'ops.dbar_tol': (float, 1e-4),
    'ops.closed_form_tol': (float, 1e-6),
    'ops.isometry_tol': (float, 1e-3),
    'ops.refinement_floor': (float, 1e-5),
    'ops.boundary_tol': (float, 1e-4),
    'ops.arc_tol': (float, 1e-3),
    'ops.symplectic_samples': (int, 1000),
    'ops.symplectic_max_dim': (int, 16),
    'ops.symplectic_spread': (float, 0.5),
    'ops.identity_tol': (float, 1e-10),
    # --- disc solver ---
    'disc.a': (float, 0.2),
    'disc.d_w': (int, 2),
    'disc.structure': (str, "random"),
    'disc.z0': (str, ""),
    'disc.w0': (str, ""),
    'disc.damping': (float, Config.OUTER_DAMPING),
    'disc.tol': (float, Config.OUTER_TOL),
    'disc.max_iter': (int, Config.OUTER_MAX_ITER),
    'disc.inner_tol': (float, Config.INNER_TOL),
    'disc.ratio_slack': (float, 0.02),
    # --- dnls ---
    'dnls.half_window': (int, Config.DNLS_HALF_WINDOW),
    'dnls.exponent': (float, Config.DNLS_EXPONENT),
    'dnls.coefficient': (float, 1.0),
    'dnls.coupling': (float, 1.0),
    'dnls.coupling_file': (str, ""),
    'dnls.t_final': (float, Config.DNLS_T_FINAL),
    'dnls.dt': (float, Config.DNLS_DT),
    'dnls.initial': (str, "gaussian"),
    'dnls.amplitude': (float, 1.0),
    'dnls.width': (float, 3.0),
    'dnls.momentum': (float, 0.3),
    'dnls.checks': (str, ",".join(DNLS_CHECKS)),
    'dnls.s_values': (str, "0,1"),
    'dnls.gronwall_samples': (int, 20),
    'dnls.sample_every': (int, 10),
    'dnls.fd_eps': (float, Config.DNLS_FD_EPS),
    'dnls.jacobian_tol': (float, 1e-5),
    'dnls.explicit_tol': (float, 1e-12),
    # --- non-squeezing pipeline ---
    'pipeline.half_window': (int, 4),
    'pipeline.amplitude': (float, 0.5),
    'pipeline.t_final': (float, 0.5),
    'pipeline.dt': (float, 1e-2),
    'pipeline.d_w': (int, 1),
    'pipeline.s_max': (float, 1.0),
}

CHOICES: Dict[str, Tuple[str, ...]] = {
    'disc.structure': ("random", "hermitian", "zero"),
    'dnls.initial': ("gaussian", "random"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


# =====================================================
# CONFIGURATION
# =====================================================

def _flatten(data: Mapping[str, Any]) -> Dict[str, Any]:
    """Accepts {"grid": {"nr": 32}} as well as {"grid.nr": 32}."""
    flat = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            for sub, inner in value.items():
                flat[f"{key}.{sub}"] = inner
        else:
            flat[key] = value
    return flat


def load_config_file(path: str) -> Dict[str, Any]:
    """Raw values from a key=value file (dotenv syntax) or a .json file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    if path.lower().endswith(".json"):
        data = read_json(path) or {}
        if not isinstance(data, Mapping):
            raise ConfigError(f"{path} must hold a JSON object")
        return _flatten(data)
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


def _coerce(key: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind is int and isinstance(value, float) and not value.is_integer():
        raise ValueError(f"not an integer: {value!r}")
    if kind is int and isinstance(value, float):
        return int(value)
    return kind(value)


def resolve_config(kind: str, values: Optional[Mapping[str, Any]] = None,
                   overrides: Optional[Mapping[str, Any]] = None, output_dir: Optional[str] = None) -> ExperimentConfig:
    """Defaults < file values < overrides; unknown keys and bad values raise ConfigError."""
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}", keys=['kind'])
    merged: Dict[str, Any] = {}
    for source in (values or {}, overrides or {}):
        merged.update({k: v for k, v in _flatten(source).items() if v is not None})
    # the kind and output directory live outside the hashed values
    merged.pop('kind', None)
    output_dir = output_dir or merged.pop('output_dir', None) or Config.OUTPUT_DIR
    merged.pop('output_dir', None)

    unknown = sorted(k for k in merged if k not in CONFIG_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}", keys=unknown)

    resolved, bad = {}, []
    for key, (type_, default) in CONFIG_SCHEMA.items():
        try:
            resolved[key] = _coerce(key, merged.get(key, default), type_)
        except (TypeError, ValueError) as e:
            logger.error(f"Config key {key}: {e}")
            bad.append(key)
    bad += [key for key, allowed in CHOICES.items() if key in resolved and resolved[key] not in allowed]
    checks = _name_list(resolved.get('dnls.checks', ""))
    if any(c not in DNLS_CHECKS for c in checks):
        bad.append('dnls.checks')
    if bad:
        raise ConfigError(f"invalid values for config keys: {', '.join(bad)}", keys=bad)
    return ExperimentConfig(kind=kind, values=resolved, output_dir=output_dir, seed=resolved['seed'])


def _float_list(text: str) -> List[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _name_list(text: str) -> List[str]:
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _stage(report: RunReport, name: str, func: Callable[[], Any]) -> Any:
    """Runs one pipeline stage; an AnalysisError becomes a failed check instead of aborting the run."""
    try:
        return func()
    except AnalysisError as e:
        logger.error(f"Stage {name} failed: {e}", exc_info=True)
        report.add(name, None, None, False, detail=f"{type(e).__name__}: {e}")
        return None


def _grid(config: ExperimentConfig):
    g = config.section("grid")
    grid = cg.make_grid(g['nr'], g['ntheta'])
    logger.info(f"Grid built: {grid.nr} x {grid.ntheta}")
    return grid


# =====================================================
# VALIDATE-OPS
# =====================================================

def _test_fields(grid, seed: int) -> Dict[str, GridField]:
    """The constant 1, a Gaussian bump and a seeded polynomial in zeta, conj(zeta)."""
    rng = np.random.default_rng(seed)
    center = 0.3 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
    coeffs = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))) / 4
    coeffs[np.add.outer(np.arange(4), np.arange(4)) > 3] = 0

    def poly(z):
        return sum(coeffs[j, k] * z ** j * np.conj(z) ** k for j in range(4) for k in range(4))

    return {
        'one': GridField(grid, np.ones(grid.size)),
        'bump': cg.sample_field(grid, lambda z: np.exp(-20 * np.abs(z - center) ** 2)),
        'poly': cg.sample_field(grid, poly),
    }


def _isometry_suite(grid, seed: int, count: int = 10) -> GridField:
    """Seeded narrow Gaussians centered within 0.25 of the origin; below 1e-9 on the unit circle."""
    rng = np.random.default_rng(seed + 1)
    columns = []
    for _ in range(count):
        center = 0.25 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        width = rng.uniform(40, 60)
        phase = np.exp(2j * np.pi * rng.uniform())
        columns.append(phase * np.exp(-width * np.abs(grid.nodes - center) ** 2))
    return GridField(grid, np.column_stack(columns))


def _symplectic_checks(report: RunReport, ops: Dict[str, Any], seed: int) -> None:
    identity_worst, inverse_worst, a_worst = 0.0, 0.0, 0.0
    for k in range(ops['symplectic_samples']):
        dim = 1 + k % ops['symplectic_max_dim']
        F = symp.random_symplectic(dim, ops['symplectic_spread'] / np.sqrt(2 * dim), seed + k)
        identity_worst = max(identity_worst, max(symp.symplectic_residuals(F)))
        G = symp.compose(F, symp.inverse_symplectic(F))
        inverse_worst = max(inverse_worst, float(np.abs(G.P - np.eye(dim)).max()), float(np.abs(G.Q).max()))
        a_worst = max(a_worst, float(np.linalg.norm(symp.complex_representation(F), 2)))
    tol = ops['identity_tol']
    report.add('symplectic.identities', identity_worst, tol, identity_worst <= tol)
    report.add('symplectic.inverse_composition', inverse_worst, tol, inverse_worst <= tol)
    report.add('symplectic.A_norm_below_one', a_worst, 1.0, a_worst < 1)

    law = 0.0
    for t in np.linspace(0.0, 3.0, 7):
        for phi in (0.0, 1.0, 2.5):
            F = RealLinearOp([[np.cosh(t)]], [[np.sinh(t) * np.exp(1j * phi)]])
            law = max(law, abs(abs(symp.complex_representation(F)[0, 0]) - np.tanh(t)))
    report.add('symplectic.scalar_tanh_law', law, 1e-12, law <= 1e-12)


def _validate_ops(config: ExperimentConfig, report: RunReport) -> Tables:
    ops = config.section("ops")
    grid = _grid(config)
    fields = _test_fields(grid, config.seed)
    rows = []

    def check(name, value, tol, passed=None):
        passed = value <= tol if passed is None else passed
        report.add(name, value, tol, passed)
        rows.append([name, float(value), float(tol), bool(passed)])

    for transform in ("T", "T1", "T2"):
        for label in ("one", "bump", "poly"):
            value = _stage(report, f"dbar.{transform}.{label}", lambda: cg.dbar_residual(fields[label], transform))
            if value is not None:
                check(f"dbar.{transform}.{label}", value, ops['dbar_tol'])

    one = fields['one']
    inside = np.array([0.3 - 0.2j, -0.1 + 0.5j])
    outside = np.array([2.0 + 0j, -1.5j])
    check('closed_form.T_inside', float(np.abs(cg.cauchy_T(one, inside) - np.conj(inside)).max()), ops['closed_form_tol'])
    check('closed_form.T_outside', float(np.abs(cg.cauchy_T(one, outside) - 1 / outside).max()), ops['closed_form_tol'])
    check('closed_form.T1', float(np.abs(cg.op_T1(one, inside) + 2j * inside.imag).max()), ops['closed_form_tol'])

    n_boundary = config.values['grid.boundary_samples']
    t1_trace = cg.boundary_trace(fields['poly'], "T1", n_boundary)
    check('boundary.T1_real_part', cg.boundary_condition_residuals(t1_trace, "T1")['real_part'], ops['boundary_tol'])
    t2_trace = cg.boundary_trace(fields['bump'], "T2", n_boundary)
    for arc, value in sorted(cg.boundary_condition_residuals(t2_trace, "T2").items()):
        check(f'boundary.T2_{arc}', value, ops['arc_tol'])

    refined = cg.make_grid(grid.nr * 3 // 2, grid.ntheta * 3 // 2)
    for variant in ("S1", "S2"):
        coarse = float(cg.isometry_errors(_isometry_suite(grid, config.seed), variant).max())
        fine = float(cg.isometry_errors(_isometry_suite(refined, config.seed), variant).max())
        check(f'isometry.{variant}', coarse, ops['isometry_tol'])
        # a refined error at the noise floor counts as converged
        check(f'isometry.{variant}_refined', fine, max(coarse, ops['refinement_floor']))
    pair = GridField(grid, np.column_stack([fields['bump'].values[:, 0], fields['poly'].values[:, 0]]))
    direct = cg.direct_sum_norm_check(pair)
    check('direct_sum_p2', direct['ratio'], direct['bound'], direct['passed'])

    _stage(report, 'symplectic', lambda: _symplectic_checks(report, ops, config.seed))

    trace_rows = [[float(a), float(p.real), float(p.imag), float(q.real), float(q.imag)]
                  for a, p, q in zip(t1_trace.angles, t1_trace.values[:, 0], t2_trace.values[:, 0])]
    return {
        'operators.csv': (['check', 'value', 'tolerance', 'passed'], rows),
        'boundary_trace.csv': (['angle', 're_T1_poly', 'im_T1_poly', 're_T2_bump', 'im_T2_bump'], trace_rows),
    }


# =====================================================
# SOLVE-DISC
# =====================================================

def _structure(kind: str, a: float, dim: int, seed: int) -> StructureField:
    if kind == "zero" or a == 0:
        return StructureField.constant(np.zeros((dim, dim)), bound=0.0, name="zero")
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    if kind == "hermitian":
        M = M + M.conj().T
    elif kind != "random":
        raise ConfigError(f"unknown disc.structure {kind!r}", keys=['disc.structure'])
    return StructureField.constant(a * M / np.linalg.norm(M, 2), name=kind).with_cutoff(sc.TRIANGLE.contains)


def _disc_tables(solution) -> Tables:
    grid = solution.grid
    d_w = solution.d_w
    w_cols = [f"{part}_w{j + 1}" for j in range(d_w) for part in ("re", "im")]
    field_rows = []
    radii = np.repeat(grid.radii, grid.ntheta)
    angles = np.tile(grid.angles, grid.nr)
    for r, a, z, w in zip(radii, angles, solution.z.values[:, 0], solution.w.values):
        field_rows.append([float(r), float(a), float(z.real), float(z.imag)]
                          + [float(x) for c in w for x in (c.real, c.imag)])
    trace_rows = [[float(a), float(z.real), float(z.imag)] + [float(x) for c in w for x in (c.real, c.imag)]
                  for a, z, w in zip(solution.boundary_angles, solution.z_trace, solution.w_trace)]
    return {
        'disc_field.csv': (['r', 'theta', 're_z', 'im_z'] + w_cols, field_rows),
        'boundary_trace.csv': (['angle', 're_z', 'im_z'] + w_cols, trace_rows),
    }


def _solve_and_verify(report: RunReport, A: StructureField, z0: complex, w0: np.ndarray, grid,
                      disc: Dict[str, Any], n_boundary: int, prefix: str = "") -> Tables:
    solution = _stage(report, f"{prefix}outer_convergence", lambda: ds.outer_solve(
        A, z0, w0, grid=grid, damping=disc.get('damping'), tol=disc.get('tol'), max_iter=disc.get('max_iter'),
        inner_tol=disc.get('inner_tol'), n_boundary=n_boundary))
    if solution is None:
        return {}
    report.add(f"{prefix}outer_convergence", solution.history[-1] if solution.history else 0.0,
               disc.get('tol', Config.OUTER_TOL), solution.converged, detail=f"{solution.iterations} iterations")
    ratio = max(solution.inner_ratios, default=0.0)
    limit = A.bound + disc.get('ratio_slack', 0.02)
    report.add(f"{prefix}inner_ratio", ratio, limit, ratio <= limit)
    verification = ds.verify_solution(solution, A)
    for name, c in sorted(verification['checks'].items()):
        report.add(f"{prefix}{name}", c['value'], c['tolerance'], c['passed'], c['detail'])
    logger.info(f"Disc {'verified' if verification['passed'] else 'failed verification'}: "
                f"area {solution.area:.6f}, degree {solution.degree}")
    return _disc_tables(solution)


def _z0(text: str) -> complex:
    return parse_complex(text) if str(text).strip() else complex(sc.schwarz_christoffel(0.0)[0])


def _w0(text: str, d_w: int) -> np.ndarray:
    """';'-separated complex entries; empty means the origin."""
    if not str(text).strip():
        return np.zeros(d_w, dtype=complex)
    w0 = np.array([parse_complex(x) for x in str(text).split(";") if x.strip()])
    if w0.size != d_w:
        raise ConfigError(f"disc.w0 has {w0.size} entries, disc.d_w is {d_w}", keys=['disc.w0'])
    return w0


def _solve_disc(config: ExperimentConfig, report: RunReport) -> Tables:
    disc = config.section("disc")
    grid = _grid(config)
    dim = 1 + disc['d_w']
    A = _structure(disc['structure'], disc['a'], dim, config.seed)
    w0 = _w0(disc['w0'], disc['d_w'])
    return _solve_and_verify(report, A, _z0(disc['z0']), w0, grid, disc,
                             config.values['grid.boundary_samples'])


# =====================================================
# DNLS
# =====================================================

def _coupling_from_file(path: str, half_window: int) -> CouplingMatrix:
    """Dense Hermitian matrix stored as JSON rows of [re, im] pairs on indices -N..N."""
    if not os.path.exists(path):
        raise ConfigError(f"coupling file not found: {path}", keys=['dnls.coupling_file'])
    A = CouplingMatrix.from_dense(complex_matrix_from_json(read_json(path)), index_offset=-half_window)
    if A.size != 2 * half_window + 1:
        raise AlignmentError(f"coupling file {path} has size {A.size}, window needs {2 * half_window + 1}")
    return A


def _dnls_setup(d: Dict[str, Any], seed: int):
    N = d['half_window']
    if d['coupling_file']:
        A = _coupling_from_file(d['coupling_file'], N)
    else:
        A = CouplingMatrix.nearest_neighbor(N, strength=d['coupling'])
    f = Nonlinearity.power(d['exponent'], d['coefficient'])
    if d['initial'] == "gaussian":
        state = dnls.gaussian_state(N, d['amplitude'], d['width'], d['momentum'])
    elif d['initial'] == "random":
        state = dnls.random_state(N, seed, d['amplitude'], d['width'])
    else:
        raise ConfigError(f"unknown dnls.initial {d['initial']!r}", keys=['dnls.initial'])
    return A, f, state


def _unit_random_state(N: int, seed: int):
    state = dnls.random_state(N, seed)
    u = state.u.entries / np.linalg.norm(state.u.entries)
    return LatticeState(ComplexSeq(u, state.u.index_offset), 0.0)


def _dnls(config: ExperimentConfig, report: RunReport) -> Tables:
    d = config.section("dnls")
    checks = _name_list(d['checks'])
    A, f, state = _dnls_setup(d, config.seed)
    t_final, dt = d['t_final'], d['dt']
    tables: Tables = {}

    states = dnls.trajectory(state, A, f, t_final, dt, sample_every=d['sample_every'])
    h0 = dnls.hamiltonian(state, A, f)
    energies = [dnls.hamiltonian(s, A, f) for s in states]
    tables['timeseries.csv'] = (['time', 'norm', 'hamiltonian', 'energy_error', 'max_abs'], [
        [float(s.time), float(np.linalg.norm(s.u.entries)), e, e - h0, float(np.abs(s.u.entries).max())]
        for s, e in zip(states, energies)])
    logger.info(f"DNLS trajectory: {len(states)} samples up to t={t_final:g}")

    if "norm" in checks:
        drift = dnls.norm_drift(states)
        report.add('dnls.norm_drift', drift, Config.NORM_DRIFT_TOL, drift <= Config.NORM_DRIFT_TOL)
    if "energy" in checks:
        study = _stage(report, 'dnls.energy_ratio', lambda: dnls.energy_drift_study(state, A, f, t_final, dt))
        if study is not None:
            ratio = None if np.isnan(study['ratio']) else study['ratio']
            report.add('dnls.energy_ratio', ratio, None, study['passed'],
                       detail=f"{study['status']}: drift {study['drift']:.3e} -> {study['drift_half']:.3e}")
    if "explicit" in checks:
        free = CouplingMatrix(np.zeros((A.size, A.size)), bandwidth=0, index_offset=A.index_offset)
        split = dnls.split_step_flow(state, free, f, t_final, dt)
        gap = float(np.abs(split.u.entries - dnls.explicit_phase_solution(state, f, t_final).u.entries).max())
        report.add('dnls.explicit_solution', gap, d['explicit_tol'], gap <= d['explicit_tol'])
    if "gronwall" in checks:
        worst, worst_at, passed = 0.0, None, True
        s_values = _float_list(d['s_values'])
        for k in range(d['gronwall_samples']):
            start = _unit_random_state(d['half_window'], config.seed + 2 * k)
            v0 = dnls.random_state(d['half_window'], config.seed + 2 * k + 1).u
            result = _stage(report, 'dnls.gronwall',
                            lambda: dnls.gronwall_check(start, v0, A, f, t_final, dt, s_values=s_values))
            if result is None:
                break
            for row in result['rows']:
                if row['max_ratio'] > worst:
                    worst, worst_at = row['max_ratio'], (row['max_ratio_time'], row['s'], k)
            passed = passed and result['passed']
        else:
            detail = f"s in {s_values}"
            if worst_at is not None:
                detail += f"; tightest at t={worst_at[0]:.6g} (s={worst_at[1]:g}, sample {worst_at[2]})"
            report.add('dnls.gronwall', worst, 1.0, passed, detail=detail)
    if "jacobian" in checks:
        jac = _stage(report, 'dnls.jacobian_symplectic',
                     lambda: dnls.flow_jacobian_check(state, A, f, t_final, dt, eps=d['fd_eps'], tol=d['jacobian_tol']))
        if jac is not None:
            report.add('dnls.jacobian_symplectic', jac['symplectic_residual'], d['jacobian_tol'],
                       jac['symplectic_residual'] <= d['jacobian_tol'])
            report.add('dnls.jacobian_A_norm', jac['A_norm'], 1.0, jac['A_norm'] < 1)
            tables['jacobian_norms.csv'] = (['s', 'F_norm'], [[row['s'], row['norm']] for row in jac['scale_norms']])
    return tables


# =====================================================
# NONSQUEEZE-PIPELINE
# =====================================================

def _nonsqueeze(config: ExperimentConfig, report: RunReport) -> Tables:
    """Flow Jacobian -> {P, Q} -> ||Q conj(P)^-1|| < 1 -> frozen structure field -> disc -> disc diagnostics."""
    p = config.section("pipeline")
    N, d_w = p['half_window'], p['d_w']
    A_lattice = CouplingMatrix.nearest_neighbor(N)
    f = Nonlinearity.power(1.0)
    state = dnls.gaussian_state(N, amplitude=p['amplitude'])
    s_grid = list(np.linspace(0.0, p['s_max'], 5))

    jac = dnls.flow_jacobian_check(state, A_lattice, f, p['t_final'], p['dt'], s_grid=s_grid)
    report.add('jacobian.symplectic', jac['symplectic_residual'], jac['tolerance'],
               jac['symplectic_residual'] <= jac['tolerance'])
    report.add('jacobian.A_norm', jac['A_norm'], 1.0, jac['A_norm'] < 1)
    if jac['structure'] is None:
        report.add('structure.frozen', None, None, False, detail="flow Jacobian has singular P")
        return {}

    F = jac['operator']
    weights = scale_weights(A_lattice.index_offset, A_lattice.size)
    # C is the smallest constant the observed norms of F and F^-1 allow on s_grid
    F_inv = symp.inverse_symplectic(F, tol=jac['tolerance'])
    C = max(max(symp.real_linear_scale_norm(F, weights, s), symp.real_linear_scale_norm(F_inv, weights, s)) for s in s_grid)
    bounds = symp.scale_bound_report(F, weights, s_grid, C=C, s0=p['s_max'])
    report.add('scale_bounds', bounds.get('a_observed'), 1.0, bool(bounds['passed']), detail=bounds['status'])
    tables: Tables = {'jacobian_norms.csv': (
        ['s', 'F_norm', 'F_inv_norm', 'P_inv_norm', 'A_norm'],
        [[row['s'], row['F_norm'], row['F_inv_norm'], row['P_inv_norm'], row['A_norm']] for row in bounds['rows']])}

    # principal (1 + d_w) block at the lattice center, frozen and cut off outside the cylinder
    c = N
    block = jac['structure'][c:c + 1 + d_w, c:c + 1 + d_w]
    A = _stage(report, 'structure.frozen', lambda: StructureField.constant(block, name="dnls-frozen").with_cutoff(sc.TRIANGLE.contains))
    if A is None:
        return tables
    report.add('structure.frozen', A.bound, 1.0, A.bound < 1, detail=f"block {c}..{c + d_w}")
    grid = _grid(config)
    tables.update(_solve_and_verify(report, A, _z0(""), np.zeros(d_w, dtype=complex), grid,
                                    config.section("disc"), config.values['grid.boundary_samples'], prefix="disc."))
    return tables


PIPELINES: Dict[str, Callable[[ExperimentConfig, RunReport], Tables]] = {
    'validate-ops': _validate_ops,
    'solve-disc': _solve_disc,
    'dnls': _dnls,
    'nonsqueeze-pipeline': _nonsqueeze,
}


def run(config: ExperimentConfig, write: bool = True) -> RunReport:
    """Dispatches to the pipeline for config.kind and writes report.json, config.json and the CSVs."""
    report = RunReport(kind=config.kind, provenance=build_provenance(config))
    logger.info(f"Starting {config.kind} run (seed {config.seed})")
    started = time.perf_counter()
    tables = _stage(report, config.kind, lambda: PIPELINES[config.kind](config, report)) or {}
    report.elapsed_seconds = time.perf_counter() - started
    logger.info(f"Run {config.kind} finished in {report.elapsed_seconds:.2f}s: "
                f"{sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed")
    if write:
        write_run(report, config, tables)
    return report
