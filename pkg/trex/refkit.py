# -*- coding: utf-8 -*-
"""Reference toolkit: brute-force oracles, synthetic networks and query workloads

The oracles never look at the transfer set (except for cell traversals, which
take the rank filter as an input), so they check transfer generation and
every query engine end to end. They are slow on purpose.
"""
import logging
import os
from collections import deque

import numpy as np
import yaml

from trex import DAY
from trex import MAX_ROUNDS
from trex import TrexError
from trex.config import parse_time
from trex.query import FrontEntry
from trex.query import Query
from trex.query import QueryError
from trex.query import departure_candidates
from trex.timetable import Stop
from trex.timetable import TripData
from trex.timetable import build_timetable

logger = logging.getLogger()

INFINITY = float("inf")
EARTH_RADIUS = 6371.0

FIELDS = frozenset(
    (
        "clusters",
        "footpath_density",
        "horizon",
        "inter_cluster_fraction",
        "lines",
        "seed",
        "stops",
        "trips_per_line",
    )
)
DEFAULTS = {
    "clusters": 4,
    "footpath_density": 0.1,
    "horizon": "16h",
    "inter_cluster_fraction": 0.2,
    "lines": 24,
    "seed": 0,
    "stops": 80,
    "trips_per_line": 4,
}

__all__ = [
    "OracleFront",
    "SyntheticSpec",
    "SyntheticSpecError",
    "departure_candidates",
    "gen_synthetic",
    "geo_rank_queries",
    "oracle_cell_traversal",
    "oracle_front",
    "oracle_profile",
    "random_queries",
]


class SyntheticSpecError(TrexError):
    pass


class SyntheticSpec:
    """Shape of a clustered random network

    Attributes:
        clusters (int): number of stop clusters, each served by local lines
        footpath_density (float): probability of a footpath between two stops of a cluster
        horizon (int): seconds within which trips start
        inter_cluster_fraction (float): share of lines linking clusters
        lines (int): number of generated lines
        seed (int): random generator seed
        stops (int): number of stops
        trips_per_line (int): trips generated per line
    """

    def __init__(self, data=None, **overrides):
        data = dict(DEFAULTS, **(data or {}))
        data.update(overrides)
        extra = list(set(data) - FIELDS)
        assert not extra, f"synthetic spec has extra fields: {extra!r}"

        self.stops = int(data["stops"])
        self.lines = int(data["lines"])
        self.trips_per_line = int(data["trips_per_line"])
        self.clusters = int(data["clusters"])
        self.inter_cluster_fraction = float(data["inter_cluster_fraction"])
        self.footpath_density = float(data["footpath_density"])
        self.horizon = int(parse_time(data["horizon"]))
        self.seed = int(data["seed"])

        if self.stops < 2:
            raise SyntheticSpecError("A network needs at least 2 stops")
        if self.lines < 1 or self.trips_per_line < 1:
            raise SyntheticSpecError("A network needs at least one line and one trip per line")
        if not 1 <= self.clusters <= self.stops:
            raise SyntheticSpecError(f"Cluster count must be within 1..{self.stops}")
        if not 0 < self.horizon <= DAY:
            raise SyntheticSpecError("Horizon must be positive and at most one day")
        if not (0 <= self.inter_cluster_fraction <= 1 and 0 <= self.footpath_density <= 1):
            raise SyntheticSpecError("Fractions and densities must be within [0, 1]")

    def as_dict(self):
        return {field: getattr(self, field) for field in sorted(FIELDS)}

    @classmethod
    def from_file(cls, spec_yml, **overrides):
        assert os.path.exists(spec_yml), f"Missing synthetic spec in {spec_yml}"
        with open(spec_yml) as spec_fd:
            return cls(yaml.safe_load(spec_fd), **overrides)


def _line_stops(rng, spec, members, inter):
    if inter:
        count = min(int(rng.integers(2, 4)), spec.clusters)
        clusters = rng.choice(spec.clusters, size=count, replace=False)
        sequence = []
        for cluster in clusters:
            pool = members[cluster]
            sequence.extend(rng.choice(pool, size=min(2, len(pool)), replace=False).tolist())
        if len(sequence) >= 2:
            return sequence

    pool = members[int(rng.integers(spec.clusters))]
    if len(pool) < 2:
        pool = list(range(spec.stops))
    size = min(len(pool), int(rng.integers(3, 9)))
    return rng.choice(pool, size=size, replace=False).tolist()


def gen_synthetic(spec):
    """Clustered random network: dense local lines inside clusters, a few
    lines linking 2-3 clusters, trips of a line following one time profile

    Returns:
        Timetable: identical for identical specs
    """
    rng = np.random.default_rng(spec.seed)
    members = [list(range(c, spec.stops, spec.clusters)) for c in range(spec.clusters)]

    centres = rng.uniform((45.8, 5.9), (47.8, 10.5), size=(spec.clusters, 2))
    offsets = rng.normal(0.0, 0.03, size=(spec.stops, 2))
    stops = [
        Stop(
            id=i,
            name=f"S{i}",
            lat=round(float(centres[i % spec.clusters][0] + offsets[i][0]), 6),
            lon=round(float(centres[i % spec.clusters][1] + offsets[i][1]), 6),
        )
        for i in range(spec.stops)
    ]

    footpaths = []
    for pool in members:
        for a in range(len(pool)):
            for b in range(a + 1, len(pool)):
                if rng.random() < spec.footpath_density:
                    footpaths.append((pool[a], pool[b], int(rng.integers(30, 300))))

    inter_lines = round(spec.lines * spec.inter_cluster_fraction) if spec.clusters > 1 else 0
    trips = []
    for line in range(spec.lines):
        sequence = _line_stops(rng, spec, members, line < inter_lines)
        travel = rng.integers(120, 600, size=len(sequence) - 1)
        dwell = rng.integers(0, 60, size=len(sequence))
        headway = int(rng.integers(600, 1800))
        latest = max(1, spec.horizon - (spec.trips_per_line - 1) * headway)
        start = int(rng.integers(0, latest))

        for k in range(spec.trips_per_line):
            time = start + k * headway
            arrivals, departures = [], []
            for i in range(len(sequence)):
                if i:
                    time += int(travel[i - 1])
                arrivals.append(time)
                time += int(dwell[i])
                departures.append(time)
            trips.append(TripData(f"L{line}T{k}", [int(s) for s in sequence], arrivals, departures))

    last = max(trip.arrivals[-1] for trip in trips)
    if last >= 2 * DAY:
        raise SyntheticSpecError("Generated trips do not fit in a two day period")
    period = DAY if last < DAY else 2 * DAY
    return build_timetable(stops, trips, footpaths, period)


class OracleFront(dict):
    """Pareto front of (arrival, trips) per reachable stop"""

    def at(self, stop):
        return self.get(stop, [])


def _check_query(tt, source, target):
    for stop in (source, target):
        if not 0 <= stop < tt.stop_count:
            raise QueryError(f"Unknown stop {stop}")


def oracle_front(tt, q, max_rounds=MAX_ROUNDS):
    """Exact fronts by a round-based dynamic program over every feasible
    trip boarding, independent of any precomputed transfer

    `ready[p]` is the earliest time p is reached with at most n trips,
    footpaths included. A stop gains a front entry in every round that
    improves it.
    """
    _check_query(tt, q.source, q.target)
    ready = [INFINITY] * tt.stop_count
    for stop, duration in tt.footpaths.neighbours(q.source):
        ready[stop] = q.departure + duration

    fronts = OracleFront()
    for stop, time in enumerate(ready):
        if time < INFINITY:
            fronts[stop] = [FrontEntry(time, 0)]

    for n in range(1, max_rounds + 1):
        arrive = [INFINITY] * tt.stop_count
        for trip in range(tt.trip_count):
            events = tt.trip_events(trip)
            boarded = False
            for e in events:
                stop = tt.event_stop[e]
                if boarded:
                    arrive[stop] = min(arrive[stop], tt.event_arr[e])
                elif e + 1 < events.stop and ready[stop] <= tt.event_dep[e]:
                    boarded = True

        improved = ready[:]
        for p, time in enumerate(arrive):
            if time == INFINITY:
                continue
            for stop, duration in tt.footpaths.neighbours(p):
                improved[stop] = min(improved[stop], time + duration)

        changed = False
        for stop, time in enumerate(improved):
            if time < ready[stop]:
                fronts.setdefault(stop, []).append(FrontEntry(time, n))
                changed = True
        ready = improved
        if not changed:
            break

    return fronts


def oracle_profile(tt, pq, max_rounds=MAX_ROUNDS):
    """Union of the fixed-departure fronts over every candidate departure

    Departures are visited latest first. An entry is kept unless a later
    departure already reached the target as early with at most as many
    trips; walking-only entries are left out.

    Returns:
        list: sorted (departure, arrival, trips) triples
    """
    _check_query(tt, pq.source, pq.target)
    if pq.start > pq.end:
        raise QueryError(f"Empty departure interval [{pq.start}, {pq.end}]")

    best = [INFINITY] * (max_rounds + 1)
    entries = []
    for departure in departure_candidates(tt, pq.source, pq.start, pq.end):
        front = oracle_front(tt, Query(pq.source, pq.target, departure), max_rounds)
        accepted = [
            (arrival, trips)
            for arrival, trips in front.at(pq.target)
            if trips > 0 and arrival < min(best[1 : trips + 1])
        ]
        for arrival, trips in accepted:
            best[trips] = min(best[trips], arrival)
            entries.append((departure, arrival, trips))
    return sorted(entries)


def oracle_cell_traversal(tt, part, cell, source, ts, min_rank=0, max_rounds=MAX_ROUNDS):
    """Outgoing border events of `cell` reachable from the IBE `source`

    Breadth-first search over boardings: a ride starts after its boarding
    event and ends at the first event leaving the cell; a boarding right at
    an outgoing border event reaches it without riding. Every event of a ride
    transfers through the transfers of rank ≥ min_rank.

    Returns:
        dict: OBE -> minimal number of trips
    """
    level, cell_id = cell

    def _inside(e):
        return part.cell(tt.event_stop[e], level) == cell_id

    def _leaves(e):
        trip_end = tt.trip_offsets[tt.event_trip[e] + 1]
        return e + 1 < trip_end and not _inside(e + 1)

    reached = {}
    seen = {source}
    pending = deque([(source, 1, True)])
    while pending:
        boarding, n, root = pending.popleft()
        if not root and _inside(boarding) and _leaves(boarding):
            reached.setdefault(boarding, n)
            continue

        ride = []
        trip_end = tt.trip_offsets[tt.event_trip[boarding] + 1]
        for e in range(boarding + 1, trip_end):
            ride.append(e)
            if _leaves(e):
                reached.setdefault(e, n)
                break

        if n == max_rounds:
            continue
        for e in ride:
            for t in ts.run(e):
                target = ts.targets[t]
                if ts.ranks[t] >= min_rank and target not in seen:
                    seen.add(target)
                    pending.append((target, n + 1, False))
    return reached


def random_queries(tt, count, seed=0):
    """Uniform source and target stops, departure uniform over the first day"""
    rng = np.random.default_rng(seed)
    sources = rng.integers(0, tt.stop_count, size=count)
    targets = rng.integers(0, tt.stop_count, size=count)
    departures = rng.integers(0, DAY, size=count)
    return [Query(int(s), int(t), int(d)) for s, t, d in zip(sources, targets, departures)]


def haversine(lat, lon, lats, lons):
    """Great-circle distances in km from one point to arrays of points"""
    lat, lon, lats, lons = (np.radians(v) for v in (lat, lon, lats, lons))
    a = np.sin((lats - lat) / 2) ** 2 + np.cos(lat) * np.cos(lats) * np.sin((lons - lon) / 2) ** 2
    return 2 * EARTH_RADIUS * np.arcsin(np.sqrt(a))


def geo_rank_queries(tt, sources, seed=0):
    """Queries to the 2^r-th closest stop of each sampled source

    Returns:
        list: (Query, r) pairs, for r = 0, 1, ... while such a stop exists
    """
    if any(stop.lat is None or stop.lon is None for stop in tt.stops):
        raise QueryError("Geo-rank queries need coordinates for every stop")
    rng = np.random.default_rng(seed)
    lats = np.array([stop.lat for stop in tt.stops], dtype=np.float64)
    lons = np.array([stop.lon for stop in tt.stops], dtype=np.float64)
    ids = np.arange(tt.stop_count)

    queries = []
    for source in rng.integers(0, tt.stop_count, size=sources):
        source = int(source)
        distances = haversine(lats[source], lons[source], lats, lons)
        order = [int(s) for s in np.lexsort((ids, distances)) if s != source]
        departure = int(rng.integers(0, DAY))
        rank = 0
        while (1 << rank) <= len(order):
            queries.append((Query(source, order[(1 << rank) - 1], departure), rank))
            rank += 1
    return queries
