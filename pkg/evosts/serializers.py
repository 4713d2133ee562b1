"""
JSON sidecars, manifests and checksums shared by the persistence helpers.
"""
import hashlib
import json
from pathlib import Path

import numpy as np
from django.core.serializers.json import DjangoJSONEncoder

from .exceptions import ReportIoError

SCHEMA_VERSION = 1


class NumpyJSONEncoder(DjangoJSONEncoder):
    """DjangoJSONEncoder that also understands numpy scalars and arrays."""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def dumps(payload):
    # sorted keys and fixed indentation keep files byte-stable between runs
    return json.dumps(payload, cls=NumpyJSONEncoder, indent=2, sort_keys=True) + "\n"


def write_json(path, payload):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(payload))
    except OSError as e:
        raise ReportIoError(f"cannot write {path}: {e}") from e
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ReportIoError(f"missing file: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise ReportIoError(f"cannot read {path}: {e}") from e


def sidecar_path(path):
    return Path(path).with_suffix('.json')


def write_array(path, values):
    """Write float64 little-endian values in C order."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.ascontiguousarray(values, dtype='<f8').tofile(path)
    except OSError as e:
        raise ReportIoError(f"cannot write {path}: {e}") from e
    return path


def read_array(path, count=None):
    path = Path(path)
    if not path.is_file():
        raise ReportIoError(f"missing file: {path}")
    values = np.fromfile(path, dtype='<f8')
    if count is not None and values.size != count:
        raise ReportIoError(f"{path} holds {values.size} values, expected {count}")
    return values.astype(np.float64)


def checksum(values):
    """sha256 of the float64 little-endian bytes of ``values``."""
    data = np.ascontiguousarray(values, dtype='<f8').tobytes()
    return hashlib.sha256(data).hexdigest()
