"""Turn raw trip events and weather/calendar data into per-region gap series.

Pick-ups count as demand, drop-offs as supply; the gap of a bin is
``#pickups - #dropoffs`` for the events whose own coordinates fall into the
region.
"""
from __future__ import annotations

import bisect
import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO, TypeVar

import numpy as np

from .errors import ConfigError, DataQualityError
from .series import DEFAULT_BIN_WIDTH, GapSeries

log = logging.getLogger(__name__)

PICKUP, DROPOFF = "pickup", "dropoff"
MAX_REJECT_FRACTION = 0.5
MAX_WEATHER_GAP = timedelta(hours=24)
TRAIN_FRACTION = 0.85
UNKNOWN = "unknown"
DAY_TYPES = ("weekday", "weekend", "holiday")


@dataclass(frozen=True)
class TripEvent:
    event_time: datetime
    latitude: float
    longitude: float
    kind: str

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")
        if self.kind not in (PICKUP, DROPOFF):
            raise ValueError(f"unknown event kind {self.kind!r}")


# -- trip parsing ------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnMapping:
    """Which columns of a trip file hold pick-up / drop-off time and position.

    Drop-off columns are optional; ``time_format`` is a strptime pattern, or
    None for ISO-8601.
    """

    pickup_time: str
    pickup_lat: str
    pickup_lon: str
    dropoff_time: str | None = None
    dropoff_lat: str | None = None
    dropoff_lon: str | None = None
    delimiter: str = ","
    time_format: str | None = None

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ColumnMapping":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown column mapping keys: {', '.join(unknown)}")
        missing = [k for k in ("pickup_time", "pickup_lat", "pickup_lon") if not values.get(k)]
        if missing:
            raise ConfigError(f"column mapping lacks {', '.join(missing)}")
        kwargs = {k: (v if v != "" else None) for k, v in values.items()}
        delimiter = kwargs.get("delimiter")
        if delimiter is None:
            kwargs["delimiter"] = ","
        elif delimiter in ("\\t", "tab"):
            kwargs["delimiter"] = "\t"
        return cls(**kwargs)

    def has_dropoff(self) -> bool:
        return all((self.dropoff_time, self.dropoff_lat, self.dropoff_lon))

    def columns(self) -> list[str]:
        cols = [self.pickup_time, self.pickup_lat, self.pickup_lon]
        if self.has_dropoff():
            cols += [self.dropoff_time, self.dropoff_lat, self.dropoff_lon]
        return cols

    def parse_time(self, text: str) -> datetime:
        text = text.strip()
        if self.time_format:
            return datetime.strptime(text, self.time_format)
        return datetime.fromisoformat(text)


@dataclass
class ParsedTrips:
    events: list[TripEvent]
    rows: int
    rejected: int

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


def _event(mapping: ColumnMapping, row: dict, kind: str) -> TripEvent:
    if kind == PICKUP:
        t, lat, lon = mapping.pickup_time, mapping.pickup_lat, mapping.pickup_lon
    else:
        t, lat, lon = mapping.dropoff_time, mapping.dropoff_lat, mapping.dropoff_lon
    return TripEvent(mapping.parse_time(row[t]), float(row[lat]), float(row[lon]), kind)


def parse_trips(source: TextIO, mapping: ColumnMapping) -> ParsedTrips:
    """Read a delimited trip file into time-ordered pick-up and drop-off events.

    A row yields a drop-off only when all three drop-off fields are filled.
    Rows with any unparsable or out-of-range field are skipped and counted.
    """
    reader = csv.DictReader(source, delimiter=mapping.delimiter)
    header = reader.fieldnames
    if not header:
        raise ConfigError("trip file has no header row")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    missing = [c for c in mapping.columns() if c not in header]
    if missing:
        raise ConfigError(f"trip file is missing columns: {', '.join(missing)}")

    events: list[TripEvent] = []
    rows = rejected = 0
    for row in reader:
        rows += 1
        try:
            row_events = [_event(mapping, row, PICKUP)]
            if mapping.has_dropoff():
                drop_fields = [row.get(c) or "" for c in
                               (mapping.dropoff_time, mapping.dropoff_lat, mapping.dropoff_lon)]
                if all(f.strip() for f in drop_fields):
                    row_events.append(_event(mapping, row, DROPOFF))
                elif any(f.strip() for f in drop_fields):
                    raise ValueError("partial drop-off fields")
        except (ValueError, TypeError, AttributeError) as exc:
            rejected += 1
            log.debug("row %d rejected: %s", rows, exc)
            continue
        events.extend(row_events)
    if rows and rejected > MAX_REJECT_FRACTION * rows:
        raise DataQualityError(f"{rejected} of {rows} trip rows rejected")
    if rejected:
        log.warning("%d of %d trip rows rejected", rejected, rows)
    events.sort(key=lambda e: e.event_time)
    return ParsedTrips(events, rows, rejected)


# -- regions --------------------------------------------------------------------

@dataclass(frozen=True)
class RegionModel:
    centroids: np.ndarray  # (k, 2) of (lat, lon)

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64).reshape(-1, 2)
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)
        if len(c) < 1:
            raise ValueError("a region model needs at least one centroid")
        if len(np.unique(c, axis=0)) != len(c):
            raise ValueError("region centroids must be pairwise distinct")

    @property
    def k(self) -> int:
        return len(self.centroids)

    def region_ids(self) -> list[str]:
        return [region_id(i) for i in range(self.k)]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        lines = [str(self.k)] + [f"{lat!r},{lon!r}" for lat, lon in self.centroids.tolist()]
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RegionModel":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        k = int(lines[0])
        rows = [tuple(float(v) for v in ln.split(",")) for ln in lines[1:]]
        if len(rows) != k:
            raise ValueError(f"{path}: header says {k} centroids, found {len(rows)}")
        return cls(np.array(rows))


def region_id(index: int) -> str:
    return f"r{index:02d}"


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ikj,ikj->ik", diff, diff)


def _plus_plus_init(distinct: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(len(distinct)))]
    d2 = _sq_dists(distinct, distinct[chosen]).min(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        # distinct points guarantee total > 0 while fewer than k are chosen
        idx = int(rng.choice(len(distinct), p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(distinct, distinct[[idx]])[:, 0])
    return distinct[chosen].copy()


def kmeans_lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int = 300):
    """Lloyd iterations from the given centroids.

    Returns ``(centroids, labels, inertia_history)`` where the history holds
    the within-cluster sum of squares after every assignment step.
    """
    points = np.asarray(points, dtype=np.float64)
    centroids = np.array(centroids, dtype=np.float64)
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(len(centroids)):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # revive an empty cluster at the worst-served point
                far = int(d2[np.arange(len(points)), labels].argmax())
                centroids[j] = points[far]
                labels[far] = j
    return centroids, labels, history


def fit_regions(points: Sequence[tuple[float, float]], k: int, seed: int = 0,
                max_iter: int = 300) -> RegionModel:
    """Cluster (lat, lon) points into ``k`` regions with seeded k-means++ and Lloyd."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    distinct = np.unique(pts, axis=0)
    if len(distinct) < k:
        raise DataQualityError(f"{len(distinct)} distinct points cannot form {k} regions")
    rng = np.random.default_rng(seed)
    init = _plus_plus_init(distinct, k, rng)
    centroids, _, _ = kmeans_lloyd(pts, init, max_iter)
    return RegionModel(centroids)


def assign_region(model: RegionModel, point: tuple[float, float]) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    return int(assign_regions(model, [point])[0])


def assign_regions(model: RegionModel, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return _sq_dists(pts, model.centroids).argmin(axis=1)


# -- binning ---------------------------------------------------------------------

def _bin_count(span: tuple[datetime, datetime], bin_width: timedelta) -> int:
    start, end = span
    if end <= start:
        raise ValueError(f"empty span: end {end} is not after start {start}")
    if bin_width <= timedelta(0):
        raise ValueError("bin width must be positive")
    n, rest = divmod(end - start, bin_width)
    if rest:
        raise ValueError(f"bin width {bin_width} does not divide span length {end - start}")
    return n


def build_gap_series(events: Iterable[TripEvent], model: RegionModel,
                     bin_width: timedelta = DEFAULT_BIN_WIDTH,
                     span: tuple[datetime, datetime] | None = None) -> dict[str, GapSeries]:
    """Count ``#pickups - #dropoffs`` per region and bin; empty bins hold 0.

    ``span`` is ``[start, end)``; events outside it are ignored. Without a
    span the events' range is widened to whole bins from the first event's
    floor.
    """
    events = list(events)
    if span is None:
        if not events:
            raise ValueError("cannot infer a span from zero events")
        first = min(e.event_time for e in events)
        last = max(e.event_time for e in events)
        start = floor_time(first, bin_width)
        end = start + ((last - start) // bin_width + 1) * bin_width
        span = (start, end)
    n_bins = _bin_count(span, bin_width)
    start, end = span
    gaps = np.zeros((model.k, n_bins))
    inside = [e for e in events if start <= e.event_time < end]
    if inside:
        regions = assign_regions(model, [(e.latitude, e.longitude) for e in inside])
        bins = [(e.event_time - start) // bin_width for e in inside]
        signs = [1.0 if e.kind == PICKUP else -1.0 for e in inside]
        np.add.at(gaps, (regions, np.asarray(bins)), signs)
    return {region_id(r): GapSeries(region_id(r), start, gaps[r], bin_width) for r in range(model.k)}


def floor_time(t: datetime, bin_width: timedelta) -> datetime:
    midnight = t.replace(hour=0, minute=0, second=0, microsecond=0)
    return midnight + ((t - midnight) // bin_width) * bin_width


# -- external data ----------------------------------------------------------------

@dataclass(frozen=True)
class ExternalRecord:
    bin_time: datetime
    day_type: str
    weather: str
    temperature: float


@dataclass(frozen=True)
class Vocabulary:
    """Frozen token list; index 0 is the reserved ``unknown`` token."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNKNOWN:
            object.__setattr__(self, "tokens", (UNKNOWN,) + tuple(t for t in self.tokens if t != UNKNOWN))
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        return cls(tuple(sorted(set(tokens) - {UNKNOWN})))

    def __len__(self):
        return len(self.tokens)

    def index(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            return 0


DAY_TYPE_VOCAB = Vocabulary((UNKNOWN,) + DAY_TYPES)


def day_type(day: date, holidays: Iterable[date] = ()) -> str:
    if day in set(holidays):
        return "holiday"
    return "weekend" if day.weekday() >= 5 else "weekday"


def load_external(source: TextIO, bin_width: timedelta = DEFAULT_BIN_WIDTH,
                  span: tuple[datetime, datetime] | None = None,
                  holidays: Iterable[date] = ()) -> list[ExternalRecord]:
    """Forward-fill ``timestamp,weather_token,temperature_c`` rows onto the bin grid.

    Every bin takes the latest observation at or before its start time. A bin
    whose latest observation is more than 24 h old, or that precedes all
    observations, is an error. Without a span, the observation range is used.
    """
    reader = csv.reader(source)
    header = [h.strip() for h in (next(reader, None) or [])]
    if header[:3] != ["timestamp", "weather_token", "temperature_c"]:
        raise ConfigError(f"weather header must be timestamp,weather_token,temperature_c; got {header}")
    obs = []
    for n, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            obs.append((datetime.fromisoformat(row[0].strip()), row[1].strip(), float(row[2])))
        except (ValueError, IndexError) as exc:
            raise DataQualityError(f"weather line {n}: {exc}") from exc
    if not obs:
        raise DataQualityError("weather file has no observations")
    obs.sort(key=lambda o: o[0])
    times = [o[0] for o in obs]
    if span is None:
        start = floor_time(times[0], bin_width)
        if start < times[0]:
            start += bin_width
        span = (start, floor_time(times[-1], bin_width) + bin_width)
    n_bins = _bin_count(span, bin_width)
    holidays = set(holidays)
    records = []
    for i in range(n_bins):
        t = span[0] + i * bin_width
        j = bisect.bisect_right(times, t) - 1
        if j < 0:
            raise DataQualityError(f"no weather observation at or before {t.isoformat()}")
        if t - times[j] > MAX_WEATHER_GAP:
            raise DataQualityError(
                f"weather coverage gap: bin {t.isoformat()} is {t - times[j]} after the last observation")
        _, token, temp = obs[j]
        records.append(ExternalRecord(t, day_type(t.date(), holidays), token, temp))
    return records


def weather_vocabulary(records: Iterable[ExternalRecord]) -> Vocabulary:
    return Vocabulary.from_tokens(r.weather for r in records)


def save_external(records: Sequence[ExternalRecord], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_time", "day_type", "weather", "temperature_c"])
        for r in records:
            writer.writerow([r.bin_time.isoformat(), r.day_type, r.weather, repr(float(r.temperature))])
    return path


def read_external(source: TextIO | str | Path) -> list[ExternalRecord]:
    """Read records written by :func:`save_external`."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_external(fh)
    reader = csv.DictReader(source)
    return [ExternalRecord(datetime.fromisoformat(r["bin_time"]), r["day_type"], r["weather"],
                           float(r["temperature_c"])) for r in reader]


# -- pre-aggregated gaps ------------------------------------------------------------

def load_didi(source: TextIO, bin_width: timedelta | None = None) -> dict[str, GapSeries]:
    """Read ``region,timestamp,gap`` rows (gaps already computed per district).

    Values are kept as given; slots missing between a region's first and last
    row are zero-filled.
    """
    reader = csv.reader(source)
    header = [h.strip() for h in (next(reader, None) or [])]
    if header[:3] != ["region", "timestamp", "gap"]:
        raise ConfigError(f"expected header region,timestamp,gap; got {header}")
    rows: dict[str, list[tuple[datetime, float]]] = defaultdict(list)
    for row in reader:
        if row:
            rows[row[0].strip()].append((datetime.fromisoformat(row[1].strip()), float(row[2])))
    if not rows:
        raise DataQualityError("no gap rows")
    if bin_width is None:
        steps = [b[0] - a[0] for r in rows.values() for a, b in zip(sorted(r), sorted(r)[1:])]
        steps = [s for s in steps if s > timedelta(0)]
        bin_width = min(steps) if steps else DEFAULT_BIN_WIDTH
    out = {}
    for rid in sorted(rows):
        obs = sorted(rows[rid])
        start = obs[0][0]
        n = (obs[-1][0] - start) // bin_width + 1
        values = np.zeros(n)
        for t, v in obs:
            idx, rest = divmod(t - start, bin_width)
            if rest:
                raise DataQualityError(f"region {rid}: {t.isoformat()} is off the {bin_width} grid")
            values[idx] = v
        out[rid] = GapSeries(rid, start, values, bin_width)
    return out


# -- splitting ------------------------------------------------------------------------

T = TypeVar("T")


def split_train_test(samples: Sequence[T], train_fraction: float = TRAIN_FRACTION) -> tuple[list[T], list[T]]:
    """Chronological split: the first ``floor(0.85 n)`` items train, the rest test."""
    n = len(samples)
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    cut = int(np.floor(train_fraction * n + 1e-9))
    cut = min(max(cut, 1), n - 1)
    return list(samples[:cut]), list(samples[cut:])
