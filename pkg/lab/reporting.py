"""
Report writers

CSV numbers use 17 significant digits so reruns are byte-identical; every
file is written to a temporary sibling and renamed into place.
"""

import contextlib
import csv
import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def atomic_output(path):
    """Yield a temporary path in the target directory, rename on success"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return format(value, '.17g')
    return '' if value is None else str(value)


def write_csv(path, header, rows):
    with atomic_output(path) as tmp:
        with open(tmp, 'w', newline='') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    logger.debug("wrote %s", path)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else format_value(value)
    return value


def to_json(payload):
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True)


def write_json(path, payload):
    with atomic_output(path) as tmp:
        with open(tmp, 'w') as fh:
            fh.write(to_json(payload))
            fh.write('\n')
    logger.debug("wrote %s", path)
