"""
From trip records to per-region gap series
==========================================

Reads the 20-row test fixture, clusters pick-up and drop-off points into two
regions and counts ``pickups - dropoffs`` in 10-minute bins.
"""

from collections import Counter
from datetime import timedelta
from pathlib import Path

from gapcast.ingest import ColumnMapping, build_gap_series, fit_regions, parse_trips

fixture = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "trips_20_rows.csv"
columns = ColumnMapping("pickup_datetime", "pickup_latitude", "pickup_longitude",
                        "dropoff_datetime", "dropoff_latitude", "dropoff_longitude")

with open(fixture) as fh:
    parsed = parse_trips(fh, columns)

# bad coordinates, unparsable times and half-filled drop-offs are dropped
print(f"{parsed.rows} rows, {parsed.rejected} rejected, {len(parsed)} events")
print(Counter(e.kind for e in parsed))

regions = fit_regions([(e.latitude, e.longitude) for e in parsed], k=2, seed=0)
print("centroids (lat, lon):")
print(regions.centroids)

series = build_gap_series(parsed, regions, timedelta(minutes=10))
for rid, s in series.items():
    print(rid, s.start_time.isoformat(), s.values, "sum", s.values.sum())

# every accepted event lands in exactly one region and one bin
print("total gap:", sum(s.values.sum() for s in series.values()))
