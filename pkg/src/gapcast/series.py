"""Gap time series, sliding windows, min-max scaling and the polar transform."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import DomainError, SeriesTooShortError

DEFAULT_BIN_WIDTH = timedelta(minutes=10)
POLAR_TOLERANCE = 1e-12


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GapSeries:
    """Uniformly binned demand-minus-supply counts for one region.

    ``values[i]`` covers ``[start_time + i*bin_width, start_time + (i+1)*bin_width)``.
    """

    region_id: str
    start_time: datetime
    values: np.ndarray
    bin_width: timedelta = DEFAULT_BIN_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1 or len(self.values) < 1:
            raise ValueError("GapSeries needs a non-empty 1-d value sequence")
        if self.bin_width <= timedelta(0):
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")

    def __len__(self) -> int:
        return len(self.values)

    def time_at(self, index: int) -> datetime:
        return self.start_time + index * self.bin_width

    @property
    def end_time(self) -> datetime:
        """Exclusive end of the last bin."""
        return self.time_at(len(self))

    def timestamps(self) -> list[datetime]:
        return [self.time_at(i) for i in range(len(self))]

    def tail(self, n: int) -> "GapSeries":
        start = max(len(self) - n, 0)
        return GapSeries(self.region_id, self.time_at(start), self.values[start:], self.bin_width)

    # -- text format -------------------------------------------------------

    def to_csv(self, out: TextIO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["timestamp", "gap"])
        for i, v in enumerate(self.values):
            writer.writerow([self.time_at(i).isoformat(), repr(float(v))])

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def save(self, directory: str | Path) -> Path:
        path = Path(directory) / f"{self.region_id}.csv"
        with open(path, "w", newline="") as fh:
            self.to_csv(fh)
        return path

    @classmethod
    def from_csv(cls, source: TextIO, region_id: str,
                 bin_width: timedelta | None = None) -> "GapSeries":
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "gap"]:
            raise ValueError(f"expected header 'timestamp,gap', got {header!r}")
        times, values = [], []
        for row in reader:
            if not row:
                continue
            times.append(datetime.fromisoformat(row[0]))
            values.append(float(row[1]))
        if not times:
            raise ValueError(f"series file for {region_id!r} has no rows")
        if bin_width is None:
            bin_width = times[1] - times[0] if len(times) > 1 else DEFAULT_BIN_WIDTH
        for i, t in enumerate(times):
            if t != times[0] + i * bin_width:
                raise ValueError(f"row {i + 1}: timestamp {t.isoformat()} breaks the uniform {bin_width} grid")
        return cls(region_id, times[0], values, bin_width)

    @classmethod
    def load(cls, path: str | Path, bin_width: timedelta | None = None) -> "GapSeries":
        path = Path(path)
        with open(path, newline="") as fh:
            return cls.from_csv(fh, path.stem, bin_width)


@dataclass(frozen=True)
class WindowBlock:
    origin_index: int
    raw: np.ndarray
    scaled: np.ndarray
    target: float

    def __post_init__(self):
        object.__setattr__(self, "raw", _frozen(self.raw))
        object.__setattr__(self, "scaled", _frozen(self.scaled))
        if self.raw.shape != self.scaled.shape:
            raise ValueError("raw and scaled windows differ in length")
        if np.any(self.scaled < 0.0) or np.any(self.scaled > 1.0):
            raise DomainError("scaled window entries must lie in [0, 1]")

    @property
    def w(self) -> int:
        return len(self.raw)

    @property
    def target_index(self) -> int:
        return self.origin_index + self.w

    @classmethod
    def from_raw(cls, raw, origin_index: int = 0, target: float = math.nan) -> "WindowBlock":
        return cls(origin_index, raw, minmax_scale(raw), target)


@dataclass(frozen=True)
class PolarBlock:
    angles: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", _frozen(self.angles))
        object.__setattr__(self, "radii", _frozen(self.radii))


def segment(series: GapSeries, w: int, stride: int = 1) -> list[WindowBlock]:
    """Cut ``series`` into length-``w`` windows, each paired with its next-step target.

    Windows start at 0, stride, 2*stride, ... and are emitted only while the
    bin right after the window still exists.
    """
    if w < 2:
        raise ValueError(f"window length must be >= 2, got {w}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    values = series.values
    if len(values) < w + 1:
        raise SeriesTooShortError(len(values), w + 1)
    blocks = []
    for origin in range(0, len(values) - w, stride):
        raw = values[origin:origin + w]
        blocks.append(WindowBlock(origin, raw, minmax_scale(raw), float(values[origin + w])))
    return blocks


def minmax_scale(raw: Iterable[float]) -> np.ndarray:
    """Affinely map ``raw`` onto [0, 1]; a constant vector maps to all 0.5."""
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 1 or len(x) < 1:
        raise ValueError("minmax_scale expects a non-empty 1-d vector")
    bad = np.flatnonzero(~np.isfinite(x))
    if len(bad):
        raise DomainError(f"non-finite value {x[bad[0]]!r} at index {bad[0]}")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.full_like(x, 0.5)
    # clip guards the last ulp; the endpoints are exact already
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def check_unit_interval(scaled, tol: float = POLAR_TOLERANCE) -> np.ndarray:
    """Validate ``scaled`` lies in [0, 1] up to ``tol`` and return it clamped."""
    x = np.asarray(scaled, dtype=np.float64)
    bad = np.flatnonzero(~((x >= -tol) & (x <= 1.0 + tol)))
    if len(bad):
        raise DomainError(f"entry {x[bad[0]]!r} at index {bad[0]} is outside [0, 1]")
    return np.clip(x, 0.0, 1.0)


def to_polar(scaled, cst: float | None = None) -> PolarBlock:
    """Angle ``arccos(x_i)`` and radius ``i/cst`` with 1-based ``i``; ``cst`` defaults to w."""
    x = check_unit_interval(scaled)
    if cst is None:
        cst = float(len(x))
    if not cst > 0:
        raise ValueError(f"cst must be positive, got {cst}")
    radii = np.arange(1, len(x) + 1, dtype=np.float64) / cst
    return PolarBlock(np.arccos(x), radii)
