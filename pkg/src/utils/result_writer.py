"""
Result files

CSV tables go through pandas with full float precision, JSON summaries
are written with sorted keys, so reruns with the same seeds produce
byte-identical files.
"""

import json
import logging
import math
import os
from typing import Dict, Mapping, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

TWO_WAY_COLUMNS = ["t", "s", "i", "selected", "q", "payment", "welfare_term"]
TRAJECTORY_COLUMNS = ["t", "s", "price_published", "price_unclipped", "total_offload",
                      "deficit", "cost", "cumulative_regret"]
TABLE_COLUMNS = ["od", "label", "hour", "before", "after", "improvement_pct", "average_payment"]
VOLUME_COLUMNS = ["t", "s", "before", "offload", "after", "welfare_or_cost"]


def _plain(value):
    """JSON-safe copy: numpy scalars and arrays become Python values, inf/nan become None"""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return None
    return value


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(rows, path: str, columns: Sequence[str]) -> str:
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=list(columns))
    frame = frame.reindex(columns=list(columns))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def write_json(data: Dict, path: str) -> str:
    with open(path, 'w') as f:
        json.dump(_plain(data), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: str) -> Dict:
    with open(path, 'r') as f:
        return json.load(f)

