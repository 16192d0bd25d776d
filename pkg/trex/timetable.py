# -*- coding: utf-8 -*-
import bisect
import logging
import os
import re
from collections import defaultdict
from dataclasses import dataclass
from datetime import date
from datetime import datetime
from datetime import timedelta
from typing import List
from typing import NamedTuple
from typing import Optional
from typing import Tuple

import networkx as nx
import numpy as np
import pandas as pd
import yaml

from trex import DAY
from trex import FOOTPATH_CLOSURE_CAP
from trex import MAX_PERIOD_DAYS
from trex import TrexError

logger = logging.getLogger()

GTFS_MANDATORY = ("stops.txt", "routes.txt", "trips.txt", "stop_times.txt")
WEEKDAYS = (
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
)


class TimetableError(TrexError):
    pass


class UnsupportedFeatureError(TimetableError):
    pass


class FootpathClosureError(TimetableError):
    def __init__(self, component):
        self.component = sorted(component)
        super().__init__(
            f"Footpath component of {len(self.component)} stops exceeds the closure cap: "
            + ", ".join(str(stop) for stop in self.component)
        )


@dataclass(frozen=True)
class Stop:
    id: int
    name: str
    lat: Optional[float] = None
    lon: Optional[float] = None


@dataclass(frozen=True)
class Line:
    id: int
    stops: Tuple[int, ...]
    trips: Tuple[int, ...]


class TripData(NamedTuple):
    """Raw trip before line grouping: parallel lists over its stop events"""

    name: str
    stops: List[int]
    arrivals: List[int]
    departures: List[int]


class FootpathSet:
    """Closed footpaths stored as one contiguous, target-sorted run per stop"""

    def __init__(self, offsets, targets, durations):
        assert len(offsets) >= 1 and offsets[0] == 0
        assert len(targets) == len(durations) == offsets[-1]
        self.offsets = list(offsets)
        self.targets = list(targets)
        self.durations = list(durations)
        self._lookup = None

    @property
    def stop_count(self):
        return len(self.offsets) - 1

    def __len__(self):
        return len(self.targets)

    def __eq__(self, other):
        return (
            isinstance(other, FootpathSet)
            and self.offsets == other.offsets
            and self.targets == other.targets
            and self.durations == other.durations
        )

    def neighbours(self, stop):
        start, end = self.offsets[stop], self.offsets[stop + 1]
        return zip(self.targets[start:end], self.durations[start:end])

    def duration(self, source, target):
        """Walking time between two stops, None without a footpath"""
        if self._lookup is None:
            self._lookup = {
                (p, q): d
                for p in range(self.stop_count)
                for q, d in self.neighbours(p)
            }
        return self._lookup.get((source, target))

    def entries(self):
        for p in range(self.stop_count):
            for q, d in self.neighbours(p):
                yield p, q, d


def close_footpaths(raw, stop_count, cap=FOOTPATH_CLOSURE_CAP):
    """Min-plus transitive closure of raw footpaths, one component at a time

    Args:
        raw (iterable): (source, target, duration) tuples, in any direction
        stop_count (int): number of stops in the network
        cap (int): largest footpath component allowed before aborting

    Returns:
        FootpathSet: symmetric, closed, with a zero self-loop per stop
    """
    graph = nx.Graph()
    graph.add_nodes_from(range(stop_count))
    for p, q, duration in raw:
        if duration < 0:
            raise TimetableError(f"Negative footpath duration {p} -> {q}")
        if not (0 <= p < stop_count and 0 <= q < stop_count):
            raise TimetableError(f"Footpath {p} -> {q} references an unknown stop")
        if p == q:
            continue
        if graph.has_edge(p, q):
            duration = min(duration, graph.edges[p, q]["duration"])
        graph.add_edge(p, q, duration=int(duration))

    runs = [[(p, 0)] for p in range(stop_count)]
    for component in nx.connected_components(graph):
        if len(component) < 2:
            continue
        if len(component) > cap:
            raise FootpathClosureError(component)

        # Floyd-Warshall on the dense component matrix
        members = sorted(component)
        position = {stop: i for i, stop in enumerate(members)}
        matrix = np.full((len(members), len(members)), np.inf)
        np.fill_diagonal(matrix, 0)
        for p, q, duration in graph.subgraph(members).edges(data="duration"):
            matrix[position[p], position[q]] = duration
            matrix[position[q], position[p]] = duration
        for k in range(len(members)):
            matrix = np.minimum(matrix, matrix[:, k, None] + matrix[None, k, :])

        for i, p in enumerate(members):
            runs[p] = [(q, int(matrix[i, j])) for j, q in enumerate(members)]

    offsets, targets, durations = [0], [], []
    for run in runs:
        for q, duration in sorted(run):
            targets.append(q)
            durations.append(duration)
        offsets.append(len(targets))

    footpaths = FootpathSet(offsets, targets, durations)
    logger.debug(f"Closed footpaths: {len(footpaths)} entries over {stop_count} stops")
    return footpaths


def group_lines(trips):
    """Greedily group trips into lines of identical stop sequences

    Trips are sorted by stop sequence then by departure vector, and each one is
    appended to the first line whose last trip it strictly follows at every
    index, else it opens a new line.

    Returns:
        list of Line: lines referencing the positions of `trips`
    """

    def _follows(later, earlier):
        return all(
            a_late > a_early and d_late > d_early
            for a_late, a_early, d_late, d_early in zip(
                later.arrivals, earlier.arrivals, later.departures, earlier.departures
            )
        )

    order = sorted(
        range(len(trips)),
        key=lambda t: (
            tuple(trips[t].stops),
            tuple(trips[t].departures),
            tuple(trips[t].arrivals),
            t,
        ),
    )

    members = []
    by_sequence = defaultdict(list)
    for t in order:
        sequence = tuple(trips[t].stops)
        for line in by_sequence[sequence]:
            if _follows(trips[t], trips[members[line][-1]]):
                members[line].append(t)
                break
        else:
            by_sequence[sequence].append(len(members))
            members.append([t])

    return [
        Line(id=i, stops=tuple(trips[group[0]].stops), trips=tuple(group))
        for i, group in enumerate(members)
    ]


def validate_trip(trip):
    """Returns a reason string when the trip breaks an event invariant"""
    if len(trip.stops) < 2:
        return "fewer than 2 events"
    if not (len(trip.stops) == len(trip.arrivals) == len(trip.departures)):
        return "inconsistent event lists"
    for i, (arr, dep) in enumerate(zip(trip.arrivals, trip.departures)):
        if arr < 0 or arr > dep:
            return f"arrival after departure at index {i}"
        if i + 1 < len(trip.stops) and dep > trip.arrivals[i + 1]:
            return f"departure after next arrival at index {i}"
    return None


class Timetable:
    """Canonical network: stops, closed footpaths, trip-contiguous stop events
    and lines whose trips carry consecutive ids in ≺ order.

    Attributes:
        stops (list): Stop per dense stop id
        footpaths (FootpathSet): closed footpaths
        period (int): service period length in seconds
        lines (list): Line per line id, trips listed in ≺ order
        trip_names (list): external trip name per trip id
        trip_offsets (list): first event id per trip, plus the total event count
        event_stop, event_arr, event_dep (list): per stop event
    """

    def __init__(
        self,
        stops,
        footpaths,
        period,
        line_stops,
        line_sizes,
        trip_names,
        trip_offsets,
        event_stop,
        event_arr,
        event_dep,
    ):
        if period > MAX_PERIOD_DAYS * DAY:
            raise TimetableError(f"Service period of {period}s exceeds two days")
        if footpaths.stop_count != len(stops):
            raise TimetableError("Footpaths and stops disagree on the stop count")
        self.stops = list(stops)
        self.footpaths = footpaths
        self.period = int(period)
        self.trip_names = list(trip_names)
        self.trip_offsets = list(trip_offsets)
        self.event_stop = list(event_stop)
        self.event_arr = list(event_arr)
        self.event_dep = list(event_dep)

        # Lines own consecutive trip ids
        self.lines = []
        self.trip_line = []
        first = 0
        for line_id, (sequence, size) in enumerate(zip(line_stops, line_sizes)):
            trips = tuple(range(first, first + size))
            self.lines.append(Line(id=line_id, stops=tuple(sequence), trips=trips))
            self.trip_line.extend([line_id] * size)
            first += size
        assert first == len(self.trip_names), "Lines do not cover every trip"
        assert len(self.trip_offsets) == len(self.trip_names) + 1

        self.event_trip = []
        for trip in range(self.trip_count):
            self.event_trip.extend([trip] * self.trip_length(trip))

        self._check_events()
        self._build_indexes()

    def _check_events(self):
        for line in self.lines:
            for trip in line.trips:
                events = self.trip_events(trip)
                if [self.event_stop[e] for e in events] != list(line.stops):
                    raise TimetableError(f"Trip {trip} leaves the stops of line {line.id}")
                for e in events:
                    if self.event_arr[e] > self.event_dep[e]:
                        raise TimetableError(f"Event {e} departs before it arrives")
                    if e + 1 < events.stop and self.event_dep[e] > self.event_arr[e + 1]:
                        raise TimetableError(f"Trip {trip} goes back in time at event {e}")
            for earlier, later in zip(line.trips, line.trips[1:]):
                for e, f in zip(self.trip_events(earlier), self.trip_events(later)):
                    if not (
                        self.event_arr[e] < self.event_arr[f]
                        and self.event_dep[e] < self.event_dep[f]
                    ):
                        raise TimetableError(
                            f"Trip {later} overtakes trip {earlier} on line {line.id}"
                        )

    def _build_indexes(self):
        # Occurrences sorted by line then index
        self.stop_occurrences = [[] for _ in self.stops]
        for line in self.lines:
            for index, stop in enumerate(line.stops):
                self.stop_occurrences[stop].append((line.id, index))

        # Departure columns per line and index, for binary searches
        self.line_departures = []
        for line in self.lines:
            first = [self.trip_offsets[trip] for trip in line.trips]
            self.line_departures.append(
                [[self.event_dep[e + i] for e in first] for i in range(len(line.stops))]
            )

    @property
    def stop_count(self):
        return len(self.stops)

    @property
    def trip_count(self):
        return len(self.trip_names)

    @property
    def event_count(self):
        return len(self.event_stop)

    def trip_length(self, trip):
        return self.trip_offsets[trip + 1] - self.trip_offsets[trip]

    def trip_events(self, trip):
        return range(self.trip_offsets[trip], self.trip_offsets[trip + 1])

    def event(self, trip, index):
        return self.trip_offsets[trip] + index

    def event_index(self, event):
        return event - self.trip_offsets[self.event_trip[event]]

    def line_position(self, trip):
        """Position of the trip within its line"""
        return trip - self.lines[self.trip_line[trip]].trips[0]

    def earliest_trip(self, line, index, time):
        """Earliest trip of the line departing at `index` no sooner than `time`"""
        departures = self.line_departures[line][index]
        position = bisect.bisect_left(departures, time)
        if position == len(departures):
            return None
        return self.lines[line].trips[0] + position

    def with_event_times(self, edits):
        """Copy of the timetable with some events retimed

        Args:
            edits (dict): event id -> (arrival, departure)

        Raises:
            TimetableError: when an edited trip breaks its line's total order
        """
        arrivals, departures = self.event_arr[:], self.event_dep[:]
        for event, (arr, dep) in edits.items():
            if not 0 <= event < self.event_count:
                raise TimetableError(f"Unknown event {event}")
            arrivals[event], departures[event] = int(arr), int(dep)
        return self._rebuild(arrivals, departures)

    def _rebuild(self, arrivals, departures):
        return Timetable(
            self.stops,
            self.footpaths,
            self.period,
            [line.stops for line in self.lines],
            [len(line.trips) for line in self.lines],
            self.trip_names,
            self.trip_offsets,
            self.event_stop,
            arrivals,
            departures,
        )

    def stats(self):
        connections = sum(self.trip_length(t) - 1 for t in range(self.trip_count))
        return {
            "stops": self.stop_count,
            "footpaths": len(self.footpaths) - self.stop_count,
            "stop_events": self.event_count,
            "connections": connections,
            "trips": self.trip_count,
            "lines": len(self.lines),
        }


def build_timetable(stops, trips, raw_footpaths, period, footpath_cap=FOOTPATH_CLOSURE_CAP):
    """Create the canonical timetable from well-formed raw trips

    Args:
        stops (list): Stop per dense id
        trips (list): TripData entries
        raw_footpaths (iterable): (source, target, duration) before closure
        period (int): service period length in seconds
        footpath_cap (int): closure component cap

    Returns:
        Timetable
    """
    for position, stop in enumerate(stops):
        if stop.id != position:
            raise TimetableError(f"Stop ids must be dense, found {stop.id} at {position}")
    for trip in trips:
        reason = validate_trip(trip)
        if reason is not None:
            raise TimetableError(f"Invalid trip {trip.name}: {reason}")
        for stop in trip.stops:
            if not 0 <= stop < len(stops):
                raise TimetableError(f"Trip {trip.name} visits unknown stop {stop}")

    footpaths = close_footpaths(raw_footpaths, len(stops), footpath_cap)
    lines = group_lines(trips)

    # Renumber trips so each line owns a consecutive range
    trip_names, trip_offsets = [], [0]
    event_stop, event_arr, event_dep = [], [], []
    for line in lines:
        for t in line.trips:
            trip = trips[t]
            trip_names.append(trip.name)
            event_stop.extend(trip.stops)
            event_arr.extend(trip.arrivals)
            event_dep.extend(trip.departures)
            trip_offsets.append(len(event_stop))

    timetable = Timetable(
        stops,
        footpaths,
        period,
        [line.stops for line in lines],
        [len(line.trips) for line in lines],
        trip_names,
        trip_offsets,
        event_stop,
        event_arr,
        event_dep,
    )
    logger.info(
        "Built timetable: {stops} stops, {trips} trips, {lines} lines, {stop_events} events".format(
            **timetable.stats()
        )
    )
    return timetable


def apply_buffer_time(tt, buffer):
    """Subtract a buffer from every departure, floored at the arrival"""
    if buffer < 0:
        raise TimetableError("Buffer time must not be negative")
    if buffer == 0:
        return tt
    departures = [max(arr, dep - buffer) for arr, dep in zip(tt.event_arr, tt.event_dep)]
    return tt._rebuild(tt.event_arr[:], departures)


def delay_event(tt, event, seconds):
    """Edits delaying an event and every later event of its trip

    Returns:
        dict: event id -> (arrival, departure), for Timetable.with_event_times
    """
    if seconds < 0:
        raise TimetableError("Delays must not be negative")
    trip = tt.event_trip[event]
    return {
        e: (tt.event_arr[e] + seconds, tt.event_dep[e] + seconds)
        for e in range(event, tt.trip_offsets[trip + 1])
    }


def parse_gtfs_time(value):
    """Parse a GTFS HH:MM:SS clock, hours may exceed 24"""
    match = re.match(r"^\s*(\d+):([0-5]\d):([0-5]\d)\s*$", str(value))
    if match is None:
        raise TimetableError(f"Unparseable GTFS time {value!r}")
    hours, minutes, seconds = (int(part) for part in match.groups())
    return hours * 3600 + minutes * 60 + seconds


def _read_gtfs(directory, name):
    return pd.read_csv(
        os.path.join(directory, name), dtype=str, keep_default_na=False
    )


def _active_services(directory, day):
    """Service ids running on the given date, None when every service runs"""
    calendar_path = os.path.join(directory, "calendar.txt")
    dates_path = os.path.join(directory, "calendar_dates.txt")
    if not os.path.exists(calendar_path) and not os.path.exists(dates_path):
        return None

    active = set()
    stamp = day.strftime("%Y%m%d")
    if os.path.exists(calendar_path):
        calendar = _read_gtfs(directory, "calendar.txt")
        weekday = WEEKDAYS[day.weekday()]
        running = calendar[
            (calendar[weekday] == "1")
            & (calendar["start_date"] <= stamp)
            & (calendar["end_date"] >= stamp)
        ]
        active.update(running["service_id"])

    if os.path.exists(dates_path):
        exceptions = _read_gtfs(directory, "calendar_dates.txt")
        today = exceptions[exceptions["date"] == stamp]
        active.update(today[today["exception_type"] == "1"]["service_id"])
        active.difference_update(today[today["exception_type"] == "2"]["service_id"])

    return active


def load_gtfs(directory, service_day, day_count=1, footpath_cap=FOOTPATH_CLOSURE_CAP):
    """Instantiate every trip active on consecutive service days

    Args:
        directory (str): unpacked GTFS feed
        service_day (date): first day, its midnight is time 0
        day_count (int): number of consecutive days, at most 2

    Returns:
        Timetable
    """
    for name in GTFS_MANDATORY:
        if not os.path.exists(os.path.join(directory, name)):
            raise TimetableError(f"Missing mandatory GTFS file {name}")
    if os.path.exists(os.path.join(directory, "frequencies.txt")):
        raise UnsupportedFeatureError(
            "frequencies.txt is not supported, expand frequency-based trips first"
        )
    if not 1 <= day_count <= MAX_PERIOD_DAYS:
        raise TimetableError(f"Day count must be between 1 and {MAX_PERIOD_DAYS}")
    if isinstance(service_day, str):
        service_day = datetime.strptime(service_day, "%Y-%m-%d").date()
    assert isinstance(service_day, date), "service_day must be a date"

    # Stops keep the feed order as dense ids
    stops_df = _read_gtfs(directory, "stops.txt")
    stop_ids = {}
    stops = []
    for row in stops_df.itertuples(index=False):
        lat = getattr(row, "stop_lat", "")
        lon = getattr(row, "stop_lon", "")
        stop_ids[row.stop_id] = len(stops)
        stops.append(
            Stop(
                id=len(stops),
                name=getattr(row, "stop_name", "") or row.stop_id,
                lat=float(lat) if lat else None,
                lon=float(lon) if lon else None,
            )
        )

    trips_df = _read_gtfs(directory, "trips.txt")
    stop_times = _read_gtfs(directory, "stop_times.txt")
    stop_times["stop_sequence"] = stop_times["stop_sequence"].astype(int)
    stop_times = stop_times.sort_values(["trip_id", "stop_sequence"], kind="stable")

    patterns = {}
    for trip_id, group in stop_times.groupby("trip_id", sort=True):
        sequence, arrivals, departures = [], [], []
        for row in group.itertuples(index=False):
            if row.stop_id not in stop_ids:
                raise TimetableError(f"Trip {trip_id} visits unknown stop {row.stop_id}")
            arr = row.arrival_time or row.departure_time
            dep = row.departure_time or row.arrival_time
            sequence.append(stop_ids[row.stop_id])
            arrivals.append(parse_gtfs_time(arr))
            departures.append(parse_gtfs_time(dep))
        patterns[trip_id] = (sequence, arrivals, departures)

    trips = []
    short = broken = 0
    for offset in range(day_count):
        day = service_day + timedelta(days=offset)
        active = _active_services(directory, day)
        for row in trips_df.itertuples(index=False):
            if active is not None and row.service_id not in active:
                continue
            if row.trip_id not in patterns:
                short += 1
                continue
            sequence, arrivals, departures = patterns[row.trip_id]
            shift = offset * DAY
            trip = TripData(
                name=f"{row.trip_id}/{offset + 1}",
                stops=list(sequence),
                arrivals=[t + shift for t in arrivals],
                departures=[t + shift for t in departures],
            )
            reason = validate_trip(trip)
            if reason == "fewer than 2 events":
                short += 1
            elif reason is not None:
                broken += 1
            else:
                trips.append(trip)

    if short:
        logger.warning(f"Dropped {short} trips with fewer than 2 events")
    if broken:
        logger.warning(f"Dropped {broken} trips with non-monotone times")

    footpaths = []
    if os.path.exists(os.path.join(directory, "transfers.txt")):
        transfers = _read_gtfs(directory, "transfers.txt")
        for row in transfers.itertuples(index=False):
            if row.transfer_type != "2" or row.from_stop_id == row.to_stop_id:
                continue
            duration = getattr(row, "min_transfer_time", "") or "0"
            for stop_id in (row.from_stop_id, row.to_stop_id):
                if stop_id not in stop_ids:
                    raise TimetableError(f"transfers.txt references unknown stop {stop_id!r}")
            footpaths.append(
                (stop_ids[row.from_stop_id], stop_ids[row.to_stop_id], int(duration))
            )

    return build_timetable(stops, trips, footpaths, day_count * DAY, footpath_cap)


def _parse_fixture_time(value):
    if isinstance(value, str):
        return parse_gtfs_time(value)
    return int(value)


def load_network(path, footpath_cap=FOOTPATH_CLOSURE_CAP):
    """Load a hand-written network described in YAML

    The file lists `stops` (names, or mappings with name/lat/lon), `trips`
    (name, stops, times as [arrival, departure] pairs), optional `footpaths`
    as [from, to, duration] triples and an optional `days` count.
    """
    assert os.path.exists(path), f"Missing network in {path}"
    with open(path) as network_fd:
        data = yaml.safe_load(network_fd)
    assert isinstance(data, dict), "Network file must contain a mapping"
    extra = set(data) - {"stops", "trips", "footpaths", "days"}
    assert not extra, f"network has unknown fields: {sorted(extra)!r}"

    stops, names = [], {}
    for entry in data["stops"]:
        if not isinstance(entry, dict):
            entry = {"name": str(entry)}
        names[entry["name"]] = len(stops)
        stops.append(
            Stop(id=len(stops), name=entry["name"], lat=entry.get("lat"), lon=entry.get("lon"))
        )

    trips = []
    for entry in data["trips"]:
        times = [
            (_parse_fixture_time(arr), _parse_fixture_time(dep))
            for arr, dep in entry["times"]
        ]
        trips.append(
            TripData(
                name=str(entry["name"]),
                stops=[names[stop] for stop in entry["stops"]],
                arrivals=[arr for arr, _ in times],
                departures=[dep for _, dep in times],
            )
        )

    footpaths = [
        (names[p], names[q], int(duration))
        for p, q, duration in data.get("footpaths") or []
    ]
    return build_timetable(stops, trips, footpaths, data.get("days", 1) * DAY, footpath_cap)
