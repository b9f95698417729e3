"""
Traffic volume tables

Loads hourly traffic counts from CSV (county, direction, index, volume),
averages duplicate rows and exposes the counts as an (S, T) matrix keyed
by (county, direction). Also writes synthetic tables for experiments
without real counts.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

COLUMNS = ["county", "direction", "index", "volume"]
DEFAULT_ROADS = (("INY", "S"), ("LA", "N"), ("KER", "W"), ("FRE", "S"), ("IMP", "S"))


class TrafficDataError(ValueError):
    """Malformed or invalid traffic volume data"""


@dataclass
class TrafficVolumeTable:
    """Deduplicated traffic counts, one row per (county, direction, index)"""
    frame: pd.DataFrame

    @classmethod
    def empty(cls) -> "TrafficVolumeTable":
        return cls(pd.DataFrame({
            "county": pd.Series(dtype=str),
            "direction": pd.Series(dtype=str),
            "index": pd.Series(dtype=np.int64),
            "volume": pd.Series(dtype=float),
        }))

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def keys(self) -> List[Tuple[str, str]]:
        """Sorted distinct (county, direction) pairs, one per OD pair"""
        pairs = self.frame[["county", "direction"]].drop_duplicates()
        return sorted((str(c), str(d)) for c, d in pairs.itertuples(index=False))

    @property
    def indices(self) -> List[int]:
        return sorted(int(i) for i in self.frame["index"].unique())

    @property
    def labels(self) -> List[str]:
        return [f"{county}-{direction}" for county, direction in self.keys]

    def volume(self, county: str, direction: str, index: int) -> Optional[float]:
        hit = self.frame[(self.frame["county"] == county) & (self.frame["direction"] == direction)
                         & (self.frame["index"] == index)]
        return None if hit.empty else float(hit["volume"].iloc[0])

    def volume_matrix(self) -> np.ndarray:
        """(S, T) counts; missing cells are 0"""
        if self.frame.empty:
            return np.zeros((0, 0))
        wide = self.frame.pivot_table(index=["county", "direction"], columns="index",
                                      values="volume", aggfunc="mean")
        wide = wide.reindex(index=pd.MultiIndex.from_tuples(self.keys), columns=self.indices)
        return wide.fillna(0.0).to_numpy(dtype=float)


def _deduplicate(frame: pd.DataFrame) -> pd.DataFrame:
    return (frame.groupby(["county", "direction", "index"], sort=True, as_index=False)["volume"]
            .mean()
            .reset_index(drop=True))


def load_traffic_csv(path: str) -> TrafficVolumeTable:
    """
    Read a traffic CSV. Duplicate (county, direction, index) rows are
    averaged. Bad rows raise TrafficDataError naming the file line.
    """
    try:
        raw = pd.read_csv(path, dtype={"county": str, "direction": str}, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        logger.warning(f"Traffic file {path} is empty")
        return TrafficVolumeTable.empty()
    except pd.errors.ParserError as e:
        raise TrafficDataError(f"{path}: malformed CSV: {e}") from e
    except FileNotFoundError as e:
        raise TrafficDataError(f"traffic file not found: {path}") from e

    missing = [c for c in COLUMNS if c not in raw.columns]
    if missing:
        raise TrafficDataError(f"{path}: missing columns {missing}")
    if raw.empty:
        return TrafficVolumeTable.empty()

    frame = raw[COLUMNS].copy()
    index = pd.to_numeric(frame["index"], errors="coerce")
    volume = pd.to_numeric(frame["volume"], errors="coerce")
    for row in range(len(frame)):
        line = row + 2
        if pd.isna(frame["county"].iloc[row]) or pd.isna(frame["direction"].iloc[row]):
            raise TrafficDataError(f"{path}, line {line}: missing county or direction")
        if pd.isna(index.iloc[row]) or index.iloc[row] != int(index.iloc[row]) or index.iloc[row] < 0:
            raise TrafficDataError(f"{path}, line {line}: index must be a nonnegative integer")
        if pd.isna(volume.iloc[row]):
            raise TrafficDataError(f"{path}, line {line}: volume is not a number")
        if volume.iloc[row] < 0:
            raise TrafficDataError(f"{path}, line {line}: negative volume {volume.iloc[row]}")

    frame["county"] = frame["county"].str.strip()
    frame["direction"] = frame["direction"].str.strip()
    frame["index"] = index.astype(np.int64)
    frame["volume"] = volume.astype(float)
    table = TrafficVolumeTable(_deduplicate(frame))
    if len(table) < len(frame):
        logger.info(f"Averaged {len(frame) - len(table)} duplicate rows in {path}")
    logger.info(f"Loaded {len(table)} traffic entries over {len(table.keys)} roads from {path}")
    return table


def synthetic_traffic(seed: int = 0, roads: Sequence[Tuple[str, str]] = DEFAULT_ROADS,
                      indices: int = 24, duplicate_rate: float = 0.1) -> pd.DataFrame:
    """
    Raw rows of a synthetic table: a daily profile scaled per road into
    roughly 200 to 3000 vehicles, plus some repeated rows.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(indices)
    profile = 0.55 + 0.45 * np.sin(np.pi * hours / max(indices - 1, 1))
    rows = []
    for county, direction in roads:
        peak = rng.uniform(1200.0, 3000.0)
        noise = rng.normal(1.0, 0.05, size=indices)
        volumes = np.clip(np.round(peak * profile * noise), 200.0, 3000.0)
        rows.extend({"county": county, "direction": direction, "index": int(h), "volume": float(v)}
                    for h, v in zip(hours, volumes))
    frame = pd.DataFrame(rows, columns=COLUMNS)

    repeats = frame.sample(frac=duplicate_rate, random_state=seed) if duplicate_rate > 0 else frame.iloc[0:0]
    frame = pd.concat([frame, repeats], ignore_index=True)
    return frame.sample(frac=1.0, random_state=seed).reset_index(drop=True)


def synthetic_table(seed: int = 0, **kwargs) -> TrafficVolumeTable:
    return TrafficVolumeTable(_deduplicate(synthetic_traffic(seed, **kwargs)))


def write_synthetic_traffic(path: str, seed: int = 0, **kwargs) -> TrafficVolumeTable:
    """Write a synthetic CSV and return the deduplicated table it loads as"""
    frame = synthetic_traffic(seed, **kwargs)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(frame)} synthetic traffic rows to {path}")
    return TrafficVolumeTable(_deduplicate(frame))
