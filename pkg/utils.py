import csv
import hashlib
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def complex_to_pair(value: complex) -> List[float]:
    value = complex(value)
    return [float(value.real), float(value.imag)]


def complex_vector_to_json(values: Iterable[complex]) -> List[List[float]]:
    """Encodes a complex vector as a JSON array of [re, im] pairs."""
    return [complex_to_pair(v) for v in np.asarray(values, dtype=complex).ravel()]


def complex_vector_from_json(pairs: Sequence[Sequence[float]]) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def complex_matrix_to_json(matrix: np.ndarray) -> List[List[List[float]]]:
    """Row-major [re, im] pairs."""
    return [complex_vector_to_json(row) for row in np.atleast_2d(matrix)]


def complex_matrix_from_json(rows: Sequence) -> np.ndarray:
    return np.array([complex_vector_from_json(row) for row in rows])


def parse_complex(text: str) -> complex:
    """Parses '0.5j', '0.3+0.2j' or '0.3,0.2' into a complex number."""
    text = str(text).strip().replace(" ", "")
    if "," in text:
        re_part, im_part = text.split(",", 1)
        return complex(float(re_part), float(im_part))
    return complex(text)


def _json_default(obj: Any):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return complex_to_pair(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps_canonical(data: Any) -> str:
    """Stable JSON text: sorted keys, fixed separators."""
    return json.dumps(data, sort_keys=True, indent=2, default=_json_default)


def config_hash(values: Dict[str, Any]) -> str:
    return hashlib.sha256(dumps_canonical(values).encode("utf-8")).hexdigest()


def write_json(path: str, data: Any) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_canonical(data))
        fh.write("\n")
    logger.debug(f"Wrote {path}")
    return path


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]], schema_version: Optional[int] = None) -> str:
    """Writes rows with floats in repr form so reruns are byte-identical; the schema line is a '#' comment."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if schema_version is not None:
            fh.write(f"# schema_version={schema_version}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: str) -> Optional[Dict[str, Any]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        logger.error(f"JSON parse error in {path}: {e}")
        raise
