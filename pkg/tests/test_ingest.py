import io
from collections import Counter
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from gapcast.errors import ConfigError, DataQualityError
from gapcast.ingest import (DROPOFF, PICKUP, ColumnMapping, RegionModel, TripEvent, Vocabulary,
                            assign_region, assign_regions, build_gap_series, day_type, fit_regions,
                            kmeans_lloyd, load_didi, load_external, parse_trips, split_train_test)
from gapcast.series import GapSeries

FIXTURES = Path(__file__).parent / "fixtures"
YELLOW = ColumnMapping("pickup_datetime", "pickup_latitude", "pickup_longitude",
                       "dropoff_datetime", "dropoff_latitude", "dropoff_longitude")
CENTRES = [(40.70, -74.00), (40.80, -73.95), (40.65, -73.80), (40.75, -73.85)]
T0 = datetime(2016, 3, 7, 8, 0)
TEN = timedelta(minutes=10)


def trips_csv(rows):
    head = "pickup_datetime,pickup_latitude,pickup_longitude,dropoff_datetime,dropoff_latitude,dropoff_longitude\n"
    return io.StringIO(head + "".join(r + "\n" for r in rows))


def brute_force_gaps(events, centroids, start, bin_width, n_bins):
    gaps = np.zeros((len(centroids), n_bins))
    for e in events:
        k = (e.event_time - start) // bin_width
        if not 0 <= k < n_bins:
            continue
        dists = [(e.latitude - a) ** 2 + (e.longitude - b) ** 2 for a, b in centroids]
        r = dists.index(min(dists))
        gaps[r, k] += 1 if e.kind == PICKUP else -1
    return gaps


class TestParseTrips:
    def test_ten_complete_rows(self):
        rows = [f"2016-03-07T08:{i:02d}:00,40.7,-74.0,2016-03-07T08:{i + 20:02d}:00,40.8,-73.9" for i in range(10)]
        parsed = parse_trips(trips_csv(rows), YELLOW)
        assert len(parsed) == 20
        assert Counter(e.kind for e in parsed) == {PICKUP: 10, DROPOFF: 10}

    def test_latitude_91_is_skipped(self):
        rows = ["2016-03-07T08:00:00,91,-74.0,2016-03-07T08:10:00,40.8,-73.9",
                "2016-03-07T08:01:00,40.7,-74.0,2016-03-07T08:10:00,40.8,-73.9"]
        parsed = parse_trips(trips_csv(rows), YELLOW)
        assert parsed.rejected == 1 and parsed.rows == 2 and len(parsed) == 2

    def test_twenty_row_fixture_matches_hand_tally(self):
        with open(FIXTURES / "trips_20_rows.csv") as fh:
            parsed = parse_trips(fh, YELLOW)
        pickups = [(0, 40.70, -74.00), (1, 40.71, -74.01), (3, 40.80, -73.95), (4, 40.65, -73.80),
                   (6, 40.70, -74.00), (7, 40.80, -73.95), (8, 40.75, -73.85), (9, 40.65, -73.80),
                   (11, 40.80, -73.95), (12, 40.70, -74.00), (13, 40.75, -73.85), (15, 40.65, -73.80),
                   (16, 40.80, -73.95), (17, 40.70, -74.00), (18, 40.75, -73.85), (19, 40.65, -73.80)]
        dropoffs = [(12, 40.80, -73.95), (9, 40.70, -74.00), (30, 40.75, -73.85), (7, 40.70, -74.00),
                    (40, 40.65, -73.80), (18, 40.80, -73.95), (11, 40.65, -73.80), (21, 40.75, -73.85),
                    (25, 40.65, -73.80), (14, 40.75, -73.85), (26, 40.70, -74.00), (35, 40.80, -73.95),
                    (28, 40.65, -73.80), (29, 40.75, -73.85)]
        expected = Counter([(T0 + timedelta(minutes=m), a, b, PICKUP) for m, a, b in pickups]
                           + [(T0 + timedelta(minutes=m), a, b, DROPOFF) for m, a, b in dropoffs])
        got = Counter((e.event_time, e.latitude, e.longitude, e.kind) for e in parsed)
        assert got == expected
        assert parsed.rows == 20 and parsed.rejected == 4
        times = [e.event_time for e in parsed]
        assert times == sorted(times)

    def test_missing_column_is_config_error(self):
        with pytest.raises(ConfigError, match="dropoff_longitude"):
            parse_trips(io.StringIO("pickup_datetime,pickup_latitude,pickup_longitude,dropoff_datetime,"
                                    "dropoff_latitude\n"), YELLOW)

    def test_empty_source_is_config_error(self):
        with pytest.raises(ConfigError):
            parse_trips(io.StringIO(""), YELLOW)

    def test_majority_rejected_is_fatal(self):
        rows = ["x,40.7,-74.0,,,", "y,40.7,-74.0,,,", "2016-03-07T08:00:00,40.7,-74.0,,,"]
        with pytest.raises(DataQualityError):
            parse_trips(trips_csv(rows), YELLOW)

    def test_pickup_only_mapping_and_custom_format(self):
        mapping = ColumnMapping.from_mapping({"pickup_time": "t", "pickup_lat": "la", "pickup_lon": "lo",
                                              "delimiter": ";", "time_format": "%d/%m/%Y %H:%M"})
        parsed = parse_trips(io.StringIO("t;la;lo\n07/03/2016 08:05;41.15;-8.61\n"), mapping)
        assert [(e.event_time, e.kind) for e in parsed] == [(datetime(2016, 3, 7, 8, 5), PICKUP)]

    def test_unknown_mapping_key(self):
        with pytest.raises(ConfigError, match="pickup_tiem"):
            ColumnMapping.from_mapping({"pickup_tiem": "t", "pickup_lat": "a", "pickup_lon": "b"})

    def test_trip_event_bounds(self):
        with pytest.raises(ValueError):
            TripEvent(T0, 0.0, 181.0, PICKUP)


class TestRegions:
    def test_k1_is_mean(self):
        pts = np.random.default_rng(0).normal(size=(40, 2))
        np.testing.assert_allclose(fit_regions(pts, 1).centroids[0], pts.mean(axis=0), atol=1e-12)

    def test_k17_deterministic(self):
        pts = np.random.default_rng(1).uniform([40.5, -74.2], [40.9, -73.7], size=(600, 2))
        a, b = fit_regions(pts, 17, seed=4), fit_regions(pts, 17, seed=4)
        assert a.k == 17
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_separated_clouds(self):
        rng = np.random.default_rng(2)
        centres = np.array([[0.0, 0.0], [10.0, 10.0], [-10.0, 10.0]])
        pts = np.concatenate([c + rng.normal(scale=0.3, size=(30, 2)) for c in centres])
        model = fit_regions(pts, 3, seed=0)
        labels = assign_regions(model, pts)
        truth = np.repeat(np.arange(3), 30)
        # clusters match clouds up to relabelling
        mapping = {t: labels[truth == t][0] for t in range(3)}
        assert len(set(mapping.values())) == 3
        np.testing.assert_array_equal(labels, [mapping[t] for t in truth])

    def test_too_few_distinct_points(self):
        with pytest.raises(DataQualityError):
            fit_regions([(1.0, 1.0)] * 10 + [(2.0, 2.0)], 3)

    def test_assignment_rules(self):
        model = RegionModel([(0, 0), (5, 5), (-1, 0), (3, 3), (9, 9), (2, 2), (7, 7), (1, 0)])
        assert assign_region(model, (2, 2)) == 5
        assert assign_region(model, (0, 0.5)) == 0
        # equidistant from centroid 2 (-1, 0) and centroid 7 (1, 0)
        tie = RegionModel([(50, 50), (60, 60), (-1, 0), (70, 70), (80, 80), (90, 90), (85, 85), (1, 0)])
        assert assign_region(tie, (0, 0)) == 2

    def test_assignment_matches_scan(self):
        rng = np.random.default_rng(3)
        model = RegionModel(rng.normal(size=(6, 2)))
        pts = rng.normal(size=(100, 2))
        scan = [min(range(6), key=lambda j: (np.sum((p - model.centroids[j]) ** 2), j)) for p in pts]
        np.testing.assert_array_equal(assign_regions(model, pts), scan)

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(300, 2))
        _, _, history = kmeans_lloyd(pts, pts[:8].copy())
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_save_load(self, tmp_path):
        model = fit_regions(np.random.default_rng(6).normal(size=(50, 2)), 4)
        back = RegionModel.load(model.save(tmp_path / "regions.txt"))
        np.testing.assert_array_equal(back.centroids, model.centroids)


class TestGapSeries:
    def test_counting(self):
        model = RegionModel([(0, 0), (10, 10)])
        events = [TripEvent(T0, 0, 0, PICKUP)] * 3 + [TripEvent(T0, 0, 0, DROPOFF)]
        out = build_gap_series(events, model, TEN, (T0, T0 + 2 * TEN))
        np.testing.assert_array_equal(out["r00"].values, [2, 0])
        np.testing.assert_array_equal(out["r01"].values, [0, 0])

    def test_fifty_event_fixture(self):
        with open(FIXTURES / "trips_50_events.csv") as fh:
            events = list(parse_trips(fh, YELLOW))
        assert len(events) == 50
        model = RegionModel(CENTRES)
        span = (T0, T0 + 6 * TEN)
        out = build_gap_series(events, model, TEN, span)
        got = np.array([out[r].values for r in model.region_ids()])
        np.testing.assert_array_equal(got, brute_force_gaps(events, CENTRES, T0, TEN, 6))
        pickups = sum(e.kind == PICKUP for e in events)
        assert got.sum() == pickups - (50 - pickups)

    def test_permutation_invariance_and_span_clip(self):
        with open(FIXTURES / "trips_50_events.csv") as fh:
            events = list(parse_trips(fh, YELLOW))
        model = RegionModel(CENTRES)
        span = (T0 + TEN, T0 + 4 * TEN)
        a = build_gap_series(events, model, TEN, span)
        shuffled = [events[i] for i in np.random.default_rng(0).permutation(len(events))]
        b = build_gap_series(shuffled, model, TEN, span)
        for r in a:
            np.testing.assert_array_equal(a[r].values, b[r].values)
        got = np.array([a[r].values for r in model.region_ids()])
        np.testing.assert_array_equal(got, brute_force_gaps(events, CENTRES, span[0], TEN, 3))

    @pytest.mark.parametrize("span", [(T0, T0), (T0, T0 + timedelta(minutes=15))])
    def test_bad_span(self, span):
        with pytest.raises(ValueError):
            build_gap_series([], RegionModel([(0, 0)]), TEN, span)


class TestExternal:
    def test_day_types(self):
        assert day_type(date(2016, 3, 12)) == "weekend"
        assert day_type(date(2016, 3, 7)) == "weekday"
        assert day_type(date(2016, 3, 7), [date(2016, 3, 7)]) == "holiday"

    def test_forward_fill_hourly_to_ten_minutes(self):
        src = io.StringIO("timestamp,weather_token,temperature_c\n2016-03-07T08:00:00,rain,5.0\n")
        recs = load_external(src, TEN, (T0, T0 + 6 * TEN))
        assert len(recs) == 6
        assert {(r.day_type, r.weather, r.temperature) for r in recs} == {("weekday", "rain", 5.0)}

    def test_fixture_join_table(self):
        with open(FIXTURES / "weather.csv") as fh:
            recs = load_external(fh, timedelta(minutes=30), (T0, T0 + timedelta(hours=4)),
                                 holidays=[])
        expected = [("08:00", "clear", 4.0), ("08:30", "clear", 4.0), ("09:00", "rain", 3.5),
                    ("09:30", "rain", 3.5), ("10:00", "rain", 3.0), ("10:30", "rain", 3.0),
                    ("11:00", "snow", -1.0), ("11:30", "snow", -1.0)]
        assert [(r.bin_time.strftime("%H:%M"), r.weather, r.temperature) for r in recs] == expected

    def test_coverage_gap_is_fatal(self):
        src = io.StringIO("timestamp,weather_token,temperature_c\n2016-03-07T00:00:00,rain,5\n"
                          "2016-03-09T00:00:00,rain,5\n")
        with pytest.raises(DataQualityError, match="gap"):
            load_external(src, timedelta(hours=1))

    def test_unknown_token(self):
        vocab = Vocabulary.from_tokens(["rain", "clear", "rain"])
        assert vocab.tokens == ("unknown", "clear", "rain")
        assert vocab.index("hail") == 0 and vocab.index("rain") == 2


class TestDidi:
    def test_round_trip_bit_exact(self):
        text = ("region,timestamp,gap\nd1,2016-01-01T00:00:00,3.25\nd1,2016-01-01T00:20:00,-1e-7\n"
                "d2,2016-01-01T00:10:00,4\nd2,2016-01-01T00:20:00,0.1\n")
        series = load_didi(io.StringIO(text))
        np.testing.assert_array_equal(series["d1"].values, [3.25, 0.0, -1e-7])
        for s in series.values():
            back = GapSeries.from_csv(io.StringIO(s.to_csv_string()), s.region_id)
            assert back.values.tobytes() == s.values.tobytes() and back.start_time == s.start_time


class TestSplit:
    @pytest.mark.parametrize("n,n_train", [(100, 85), (7, 5), (20, 17), (2, 1)])
    def test_floor_rule(self, n, n_train):
        train, test = split_train_test(list(range(n)))
        assert len(train) == n_train and len(test) == n - n_train
        assert max(train) < min(test)

    def test_too_few(self):
        with pytest.raises(ValueError):
            split_train_test([1])
