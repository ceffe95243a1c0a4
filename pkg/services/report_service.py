# Filename: services/report_service.py
# Role: Run report assembly and emission (report.json, config.json, per-kind CSV tables)

import logging
import os
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import scipy

from config import Config
from models import ExperimentConfig, RunReport
from utils import config_hash, write_csv, write_json

logger = logging.getLogger(__name__)

# file name -> (header, rows)
Tables = Dict[str, Tuple[Sequence[str], List[Sequence[Any]]]]


def build_provenance(config: ExperimentConfig) -> Dict[str, Any]:
    """Everything needed to reproduce a run; no clocks, hosts or paths."""
    return {
        'app': Config.APP_NAME,
        'version': Config.APP_VERSION,
        'schema_version': Config.SCHEMA_VERSION,
        'kind': config.kind,
        'seed': config.seed,
        'config_hash': config_hash(config.values),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
    }


def report_payload(report: RunReport, config: ExperimentConfig) -> Dict[str, Any]:
    include_timing = bool(config.values.get('report.include_timing', False))
    payload = report.to_dict(include_timing=include_timing)
    payload['schema_version'] = Config.SCHEMA_VERSION
    payload['summary'] = {
        'checks': len(report.checks),
        'failed': sorted(c.name for c in report.checks if not c.passed),
    }
    return payload


def write_run(report: RunReport, config: ExperimentConfig, tables: Tables) -> List[str]:
    """Writes the CSV tables, config.json and report.json (last, so it lists every artifact)."""
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    paths = []
    for name, (header, rows) in sorted(tables.items()):
        paths.append(write_csv(os.path.join(out, name), header, rows, schema_version=Config.SCHEMA_VERSION))
        report.artifacts.append(name)

    paths.append(write_json(os.path.join(out, "config.json"), {
        'schema_version': Config.SCHEMA_VERSION,
        'kind': config.kind,
        'seed': config.seed,
        'values': config.values,
    }))
    report.artifacts.append("config.json")

    report.artifacts.append("report.json")
    paths.append(write_json(os.path.join(out, "report.json"), report_payload(report, config)))
    logger.info(f"Wrote {len(paths)} files to {out}")
    return paths
