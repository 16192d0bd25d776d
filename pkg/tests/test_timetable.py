# -*- coding: utf-8 -*-
import itertools
import shutil
from datetime import date

import networkx as nx
import numpy as np
import pytest

from conftest import GTFS_DIR
from conftest import network
from conftest import stop
from conftest import trip
from trex import DAY
from trex.timetable import FootpathClosureError
from trex.timetable import Stop
from trex.timetable import TimetableError
from trex.timetable import TripData
from trex.timetable import UnsupportedFeatureError
from trex.timetable import apply_buffer_time
from trex.timetable import build_timetable
from trex.timetable import close_footpaths
from trex.timetable import delay_event
from trex.timetable import group_lines
from trex.timetable import load_gtfs
from trex.timetable import parse_gtfs_time


def _stops(count):
    return [Stop(id=i, name=f"P{i}") for i in range(count)]


def test_close_footpaths_self_loops():
    footpaths = close_footpaths([], 3)
    assert list(footpaths.entries()) == [(0, 0, 0), (1, 1, 0), (2, 2, 0)]
    assert footpaths.duration(0, 1) is None


def test_close_footpaths_triangle():
    footpaths = close_footpaths([(0, 1, 60), (1, 2, 60)], 3)
    assert footpaths.duration(0, 2) == 120
    assert footpaths.duration(2, 0) == 120
    assert footpaths.duration(1, 0) == 60
    assert list(footpaths.neighbours(0)) == [(0, 0), (1, 60), (2, 120)]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_close_footpaths_floyd_warshall(seed):
    rng = np.random.default_rng(seed)
    raw = []
    for p in range(8):
        for q in range(p + 1, 8):
            if rng.random() < 0.3:
                raw.append((p, q, int(rng.integers(10, 200))))
    footpaths = close_footpaths(raw, 8)

    graph = nx.Graph()
    graph.add_nodes_from(range(8))
    for p, q, duration in raw:
        graph.add_edge(p, q, weight=duration)
    expected = nx.floyd_warshall(graph)
    for p in range(8):
        for q in range(8):
            distance = expected[p][q]
            if distance == float("inf"):
                assert footpaths.duration(p, q) is None
            else:
                assert footpaths.duration(p, q) == distance


def test_close_footpaths_cap():
    with pytest.raises(FootpathClosureError, match="4 stops") as error:
        close_footpaths([(0, 1, 10), (1, 2, 10), (2, 3, 10)], 5, cap=3)
    assert error.value.component == [0, 1, 2, 3]


def test_close_footpaths_negative():
    with pytest.raises(TimetableError, match="Negative"):
        close_footpaths([(0, 1, -1)], 2)


def test_apply_buffer_time():
    tt = build_timetable(
        _stops(2),
        [
            TripData("t", [0, 1], [100, 200], [160, 200]),
            TripData("u", [1, 0], [100, 300], [110, 300]),
        ],
        [],
        DAY,
    )
    assert apply_buffer_time(tt, 0) is tt

    buffered = apply_buffer_time(tt, 30)
    t, u = trip(tt, "t"), trip(tt, "u")
    assert buffered.event_dep[tt.event(t, 0)] == 130
    assert buffered.event_arr[tt.event(t, 0)] == 100
    assert buffered.event_dep[tt.event(u, 0)] == 100
    assert buffered.event_arr == tt.event_arr

    with pytest.raises(TimetableError, match="must not be negative"):
        apply_buffer_time(tt, -5)


def test_group_lines_overtaking():
    trips = [
        TripData("a", [0, 1, 2], [0, 10, 20], [0, 10, 20]),
        TripData("b", [0, 1, 2], [5, 15, 25], [5, 15, 25]),
        # leaves after b but arrives before it
        TripData("c", [0, 1, 2], [8, 12, 16], [8, 12, 16]),
    ]
    tt = build_timetable(_stops(3), trips, [], DAY)
    assert len(tt.lines) == 2
    for line in tt.lines:
        assert list(line.trips) == list(range(line.trips[0], line.trips[-1] + 1))
        for earlier, later in zip(line.trips, line.trips[1:]):
            assert tt.event_dep[tt.event(earlier, 0)] < tt.event_dep[tt.event(later, 0)]


def test_fixture_lines(feeder):
    line = feeder.lines[feeder.trip_line[trip(feeder, "Ta'")]]
    assert line.trips == (trip(feeder, "Ta'"), trip(feeder, "Ta"))
    assert [feeder.stops[s].name for s in line.stops] == ["s", "p1", "p2"]
    assert feeder.line_position(trip(feeder, "Ta")) == 1


def test_stats(feeder):
    assert feeder.stats() == {
        "stops": 6,
        "footpaths": 4,
        "stop_events": 10,
        "connections": 6,
        "trips": 4,
        "lines": 3,
    }


def test_earliest_trip_boundary():
    tt = network("one_line")
    assert tt.trip_names[tt.earliest_trip(0, 0, 600)] == "late"
    assert tt.trip_names[tt.earliest_trip(0, 0, 1)] == "late"
    assert tt.trip_names[tt.earliest_trip(0, 0, 0)] == "early"
    assert tt.earliest_trip(0, 0, 601) is None


def test_delay_event():
    tt = network("one_line")
    early = trip(tt, "early")
    edits = delay_event(tt, tt.event(early, 2), 30)
    assert sorted(edits) == [tt.event(early, i) for i in (2, 3, 4)]

    delayed = tt.with_event_times(edits)
    assert delayed.event_arr[tt.event(early, 2)] == 150
    assert delayed.event_dep[tt.event(early, 4)] == 270
    assert delayed.event_arr[tt.event(early, 1)] == 60


def test_delay_event_overtaking():
    tt = network("one_line")
    early = trip(tt, "early")
    edits = delay_event(tt, tt.event(early, 2), 700)
    with pytest.raises(TimetableError, match="overtakes"):
        tt.with_event_times(edits)


def test_build_timetable_errors():
    with pytest.raises(TimetableError, match="dense"):
        build_timetable([Stop(id=1, name="x")], [], [], DAY)
    with pytest.raises(TimetableError, match="unknown stop"):
        build_timetable(_stops(2), [TripData("t", [0, 5], [0, 1], [0, 1])], [], DAY)
    with pytest.raises(TimetableError, match="Invalid trip"):
        build_timetable(_stops(2), [TripData("t", [0, 1], [0, 10], [20, 10])], [], DAY)
    with pytest.raises(TimetableError, match="exceeds two days"):
        build_timetable(_stops(2), [TripData("t", [0, 1], [0, 10], [0, 10])], [], 3 * DAY)


@pytest.mark.parametrize(
    "value, result",
    [("00:00:00", 0), ("08:10:05", 29405), ("25:30:00", 91800), (" 7:05:00 ", 25500)],
)
def test_parse_gtfs_time(value, result):
    assert parse_gtfs_time(value) == result


def test_parse_gtfs_time_invalid():
    with pytest.raises(TimetableError, match="Unparseable"):
        parse_gtfs_time("8h10")


def test_load_gtfs():
    tt = load_gtfs(GTFS_DIR, date(2024, 3, 4))
    assert tt.trip_count == 2
    assert tt.event_count == 6
    assert [s.name for s in tt.stops] == ["Alpha", "Bravo", "Charlie"]
    assert tt.stops[0].lat == pytest.approx(46.20)

    late = trip(tt, "t2/1")
    assert tt.event_dep[tt.event(late, 0)] == 91800
    assert tt.footpaths.duration(stop(tt, "Alpha"), stop(tt, "Bravo")) == 120


def test_load_gtfs_two_days():
    tt = load_gtfs(GTFS_DIR, "2024-03-04", day_count=2)
    assert tt.trip_count == 4
    second = trip(tt, "t1/2")
    assert tt.event_dep[tt.event(second, 0)] == 8 * 3600 + DAY
    assert tt.period == 2 * DAY


def test_load_gtfs_outside_calendar():
    tt = load_gtfs(GTFS_DIR, date(2030, 1, 1))
    assert tt.trip_count == 0
    assert tt.stop_count == 3


def test_load_gtfs_frequencies(tmp_path):
    feed = tmp_path / "feed"
    shutil.copytree(GTFS_DIR, feed)
    (feed / "frequencies.txt").write_text("trip_id,start_time,end_time,headway_secs\n")
    with pytest.raises(UnsupportedFeatureError, match="frequencies.txt"):
        load_gtfs(str(feed), date(2024, 3, 4))


def test_load_gtfs_missing_file(tmp_path):
    feed = tmp_path / "feed"
    shutil.copytree(GTFS_DIR, feed)
    (feed / "stop_times.txt").unlink()
    with pytest.raises(TimetableError, match="stop_times.txt"):
        load_gtfs(str(feed), date(2024, 3, 4))


def test_load_gtfs_unknown_transfer_stop(tmp_path):
    feed = tmp_path / "feed"
    shutil.copytree(GTFS_DIR, feed)
    (feed / "transfers.txt").write_text(
        "from_stop_id,to_stop_id,transfer_type,min_transfer_time\nA,Z,2,60\n"
    )
    with pytest.raises(TimetableError, match="unknown stop 'Z'"):
        load_gtfs(str(feed), date(2024, 3, 4))


def _random_trips(seed, count=20):
    rng = np.random.default_rng(seed)
    sequences = [[0, 1, 2], [2, 1, 0], [0, 3, 4, 5], [5, 4, 1]]
    trips = []
    for t in range(count):
        stops = sequences[int(rng.integers(len(sequences)))]
        arrivals, departures = [], []
        clock = int(rng.integers(0, 1800))
        for _ in stops:
            arrivals.append(clock)
            clock += int(rng.integers(0, 3)) * 30
            departures.append(clock)
            clock += int(rng.integers(60, 900))
        trips.append(TripData(f"t{t}", stops, arrivals, departures))
    return trips


def _strictly_follows(later, earlier):
    return all(
        later.arrivals[i] > earlier.arrivals[i] and later.departures[i] > earlier.departures[i]
        for i in range(len(later.stops))
    )


def _first_fit(trips):
    """Lines per stop sequence, trips taken by departure vector, first fitting line wins"""
    lines = {}
    for sequence in sorted({tuple(t.stops) for t in trips}):
        chosen = sorted(
            (i for i, t in enumerate(trips) if tuple(t.stops) == sequence),
            key=lambda i: (trips[i].departures, trips[i].arrivals, i),
        )
        groups = []
        for i in chosen:
            fitting = [g for g in groups if _strictly_follows(trips[i], trips[g[-1]])]
            if fitting:
                fitting[0].append(i)
            else:
                groups.append([i])
        lines[sequence] = groups
    return lines


@pytest.mark.parametrize("seed", range(10))
def test_group_lines_first_fit(seed):
    trips = _random_trips(seed)
    lines = group_lines(trips)

    assert sorted(i for line in lines for i in line.trips) == list(range(len(trips)))
    by_sequence = {}
    for line in lines:
        for earlier, later in zip(line.trips, line.trips[1:]):
            assert _strictly_follows(trips[later], trips[earlier])
        assert all(tuple(trips[i].stops) == line.stops for i in line.trips)
        by_sequence.setdefault(line.stops, []).append(list(line.trips))
    assert by_sequence == _first_fit(trips)

    # no partition can use fewer lines than the largest set of mutually overtaking trips
    for sequence, groups in by_sequence.items():
        members = [i for group in groups for i in group]
        conflicts = max(
            len(subset)
            for size in range(1, len(members) + 1)
            for subset in itertools.combinations(members, size)
            if all(
                not _strictly_follows(trips[a], trips[b])
                and not _strictly_follows(trips[b], trips[a])
                for a, b in itertools.combinations(subset, 2)
            )
        )
        assert len(groups) >= conflicts
