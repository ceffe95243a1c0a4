import os
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Find the absolute path of the directory this file is in
basedir = os.path.abspath(os.path.dirname(__file__))


def _env_float(key: str, default: float) -> float:
    return float(os.environ.get(key, default))


def _env_int(key: str, default: int) -> int:
    return int(os.environ.get(key, default))


class Config:
    """
    Central configuration class.

    Every value can be overridden from the environment (or a .env file).
    Experiment config files and CLI flags override these defaults per run.
    """
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')

    # --- 1. App Configuration ---
    APP_NAME = "nonsqueeze-lab"
    APP_VERSION = "1.0.0"
    SCHEMA_VERSION = 1
    DEFAULT_SEED = _env_int('DEFAULT_SEED', 12345)

    # --- 2. Grid Configuration ---
    # Polar grid: Gauss-Legendre radii, equispaced midpoint angles.
    GRID_NR = _env_int('GRID_NR', 32)
    GRID_NTHETA = _env_int('GRID_NTHETA', 128)
    BOUNDARY_SAMPLES = _env_int('BOUNDARY_SAMPLES', 384)
    # Finite-difference step for d-bar residuals
    DBAR_STEP = _env_float('DBAR_STEP', 1e-4)

    # --- 3. Tolerances ---
    SYMPLECTIC_TOL = _env_float('SYMPLECTIC_TOL', 1e-8)
    SINGULAR_COND_LIMIT = 1e12
    STRUCTURE_NORM_SLACK = 1e-12
    TRIANGLE_TOL = _env_float('TRIANGLE_TOL', 1e-9)
    ATTACHMENT_TOL = _env_float('ATTACHMENT_TOL', 1e-3)
    CR_TOL = _env_float('CR_TOL', 1e-4)
    AREA_TOL = _env_float('AREA_TOL', 5e-3)
    RE_W_TOL = _env_float('RE_W_TOL', 1e-6)
    DEGREE_TRACE_TOL = _env_float('DEGREE_TRACE_TOL', 1e-2)
    TAU_BOUNDARY_TOL = _env_float('TAU_BOUNDARY_TOL', 1e-3)

    # --- 4. Disc Solver ---
    INNER_TOL = _env_float('INNER_TOL', 1e-10)
    INNER_MAX_ITER = _env_int('INNER_MAX_ITER', 200)
    OUTER_TOL = _env_float('OUTER_TOL', 1e-6)
    OUTER_MAX_ITER = _env_int('OUTER_MAX_ITER', 200)
    OUTER_DAMPING = _env_float('OUTER_DAMPING', 0.5)
    MIN_DAMPING = 1.0 / 64
    SC_QUADRATURE_NODES = 48
    SC_NEWTON_TOL = 1e-13
    SC_NEWTON_MAX_ITER = 60

    # --- 5. DNLS ---
    DNLS_HALF_WINDOW = _env_int('DNLS_HALF_WINDOW', 32)
    DNLS_EXPONENT = _env_float('DNLS_EXPONENT', 1.0)
    DNLS_T_FINAL = _env_float('DNLS_T_FINAL', 1.0)
    DNLS_DT = _env_float('DNLS_DT', 1e-3)
    DNLS_FD_EPS = _env_float('DNLS_FD_EPS', 1e-5)
    NORM_DRIFT_TOL = 1e-12
    DRIFT_RATIO_RANGE = (3.5, 4.5)

    # --- 6. Output ---
    OUTPUT_DIR = os.environ.get('OUTPUT_DIR', os.path.join(basedir, "runs"))
    LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = None) -> None:
    """Configures the root logger once for CLI runs."""
    logging.basicConfig(level=(level or Config.LOG_LEVEL).upper(), format=Config.LOG_FORMAT)
