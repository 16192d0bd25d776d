# -*- coding: utf-8 -*-
import logging
from dataclasses import dataclass
from dataclasses import field
from time import perf_counter
from typing import List
from typing import NamedTuple
from typing import Optional

from trex import ALGORITHMS
from trex import MAX_ROUNDS
from trex import TrexError
from trex.customize import ReachedIndexStore
from trex.customize import Segment
from trex.customize import enqueue
from trex.partition import lcl
from trex.partition import lcl_test
from trex.transfers import is_feasible

logger = logging.getLogger()

INFINITY = float("inf")


class QueryError(TrexError):
    pass


class Query(NamedTuple):
    source: int
    target: int
    departure: int


class ProfileQuery(NamedTuple):
    source: int
    target: int
    start: int
    end: int


class JourneyLeg(NamedTuple):
    """Ride on `trip` from event `enter` to event `exit`"""

    trip: int
    enter: int
    exit: int


class FrontEntry(NamedTuple):
    arrival: int
    trips: int


@dataclass
class Journey:
    source: int
    target: int
    legs: List[JourneyLeg]
    initial_walk: int
    final_walk: int
    departure: int
    arrival: int

    @property
    def trips(self):
        return len(self.legs)

    @property
    def cost(self):
        return FrontEntry(self.arrival, self.trips)

    def validate(self, tt, ts):
        """Replay the journey against the timetable and the transfer set

        Raises:
            QueryError: on the first inconsistency found
        """
        footpaths = tt.footpaths
        if not self.legs:
            walk = footpaths.duration(self.source, self.target)
            if walk is None or walk != self.initial_walk:
                raise QueryError(f"No footpath from {self.source} to {self.target}")
            if self.arrival != self.departure + walk:
                raise QueryError("Walking journey arrival does not match its footpath")
            return

        for leg in self.legs:
            trip_events = tt.trip_events(leg.trip)
            if leg.enter not in trip_events or leg.exit not in trip_events:
                raise QueryError(f"Leg {leg} leaves its trip")
            if leg.enter >= leg.exit:
                raise QueryError(f"Leg {leg} does not move forward")

        for previous, following in zip(self.legs, self.legs[1:]):
            if not ts.contains(previous.exit, following.enter):
                raise QueryError(f"Missing transfer {previous.exit} -> {following.enter}")
            if not is_feasible(tt, previous.exit, following.enter):
                raise QueryError(f"Infeasible transfer {previous.exit} -> {following.enter}")

        first, last = self.legs[0], self.legs[-1]
        if footpaths.duration(self.source, tt.event_stop[first.enter]) != self.initial_walk:
            raise QueryError("Initial footpath does not match the first boarding stop")
        if footpaths.duration(tt.event_stop[last.exit], self.target) != self.final_walk:
            raise QueryError("Final footpath does not match the last exit stop")
        if self.departure + self.initial_walk > tt.event_dep[first.enter]:
            raise QueryError("First trip departs before the traveller reaches it")
        if self.arrival != tt.event_arr[last.exit] + self.final_walk:
            raise QueryError("Arrival does not match the last exit event")


class ProfileEntry(NamedTuple):
    departure: int
    arrival: int
    trips: int
    journey: Optional[Journey]


@dataclass
class QueryMetrics:
    scanned_segments: int = 0
    relaxed_transfers: int = 0
    skipped_transfers: int = 0
    rounds: int = 0
    elapsed_us: float = 0.0
    unpack_us: float = 0.0


@dataclass
class QueryResult:
    query: Query
    front: List[FrontEntry] = field(default_factory=list)
    journeys: List[Journey] = field(default_factory=list)
    metrics: QueryMetrics = field(default_factory=QueryMetrics)

    def costs(self):
        return [tuple(entry) for entry in self.front]


@dataclass
class ProfileResult:
    query: ProfileQuery
    entries: List[ProfileEntry] = field(default_factory=list)
    metrics: QueryMetrics = field(default_factory=QueryMetrics)

    def costs(self):
        return sorted((e.departure, e.arrival, e.trips) for e in self.entries)


def departure_candidates(tt, source, start, end):
    """Departure times from `source` worth a profile run, latest first"""
    candidates = set()
    for stop, duration in tt.footpaths.neighbours(source):
        for line, index in tt.stop_occurrences[stop]:
            if index == len(tt.lines[line].stops) - 1:
                continue
            for departure in tt.line_departures[line][index]:
                if start <= departure - duration <= end:
                    candidates.add(departure - duration)
    return sorted(candidates, reverse=True)


class TripBasedEngine:
    """TB query over the full transfer set

    Search state (queues, tentative front, reached index) lives on the engine
    and is reused by sequential queries; use one engine per thread.
    """

    name = "tb"

    def __init__(self, state):
        if state.timetable is None or state.transfers is None:
            raise QueryError(f"Engine {self.name} needs the timetable and the transfers")
        self.state = state
        self.tt = state.timetable
        self.ts = state.transfers
        self.reached = ReachedIndexStore(self.tt)
        self.profile_reached = None
        self.queues = []
        self.best = []
        self.hits = []
        self.targets = {}

    def _check_stops(self, *stops):
        for stop in stops:
            if not 0 <= stop < self.tt.stop_count:
                raise QueryError(f"Unknown stop {stop}")

    def _prepare(self, source, target):
        pass

    def _initialize(self, source, target, departure, reached):
        tt = self.tt
        self.queues = [[] for _ in range(MAX_ROUNDS + 2)]
        self.hits = [None] * (MAX_ROUNDS + 1)
        self.targets = dict(tt.footpaths.neighbours(target))
        walk = tt.footpaths.duration(source, target)
        self.best[0] = departure + walk if walk is not None else INFINITY

        for stop, duration in tt.footpaths.neighbours(source):
            for line, index in tt.stop_occurrences[stop]:
                if index == len(tt.lines[line].stops) - 1:
                    continue
                trip = tt.earliest_trip(line, index, departure + duration)
                if trip is not None:
                    enqueue(tt, reached, self.queues[1], tt.event(trip, index), None, n=1)

    def _search(self, source, target, departure, reached, metrics):
        self._prepare(source, target)
        self._initialize(source, target, departure, reached)
        tau = self.best[0]
        for n in range(1, MAX_ROUNDS + 1):
            if not self.queues[n]:
                break
            metrics.rounds = n
            tau = min(tau, self.best[n])
            tau = self._scan(n, tau, reached, metrics)

    def _target_checks(self, n, segments, indices, tau):
        tt = self.tt
        event_arr, event_stop, targets = tt.event_arr, tt.event_stop, self.targets
        for idx in indices:
            segment = segments[idx]
            first = tt.trip_offsets[segment.trip]
            for i in range(segment.start, segment.end + 1):
                arrival = event_arr[first + i]
                if arrival >= tau:
                    break
                walk = targets.get(event_stop[first + i])
                if walk is not None and arrival + walk < tau:
                    tau = arrival + walk
                    self.best[n] = tau
                    self.hits[n] = (idx, i)
        return tau

    def _allowed(self, transfer, event):
        return True

    def _scan(self, n, tau, reached, metrics):
        tt, ts = self.tt, self.ts
        queue = self.queues[n]
        metrics.scanned_segments += len(queue)
        tau = self._target_checks(n, queue, range(len(queue)), tau)

        for segment in queue:
            first = tt.trip_offsets[segment.trip]
            for i in range(segment.start, segment.end + 1):
                if tt.event_arr[first + i] >= tau:
                    segment.end = i - 1
                    break

        if n == MAX_ROUNDS:
            return tau
        following = self.queues[n + 1]
        offsets, targets = ts.offsets, ts.targets
        for idx, segment in enumerate(queue):
            first = tt.trip_offsets[segment.trip]
            for e in range(first + segment.start, first + segment.end + 1):
                for t in range(offsets[e], offsets[e + 1]):
                    if not self._allowed(t, e):
                        metrics.skipped_transfers += 1
                        continue
                    metrics.relaxed_transfers += 1
                    enqueue(tt, reached, following, targets[t], (n, idx), n=n + 1)
        return tau

    def _leads_to(self, parent, event, target):
        t = self.ts.find(event, target)
        return t is not None and self._allowed(t, event)

    def _exit_index(self, parent, child):
        tt = self.tt
        target = tt.trip_offsets[child.trip] + child.entry
        first = tt.trip_offsets[parent.trip]
        for i in range(parent.start, parent.end + 1):
            if self._leads_to(parent, first + i, target):
                return i
        raise QueryError(f"Dangling parent link into event {target}")

    def _unpack(self, source, target, departure, n):
        tt = self.tt
        footpaths = tt.footpaths
        if n == 0:
            walk = footpaths.duration(source, target)
            return Journey(source, target, [], walk, 0, departure, departure + walk)

        idx, exit_index = self.hits[n]
        segment = self.queues[n][idx]
        legs = []
        while True:
            first = tt.trip_offsets[segment.trip]
            legs.append(JourneyLeg(segment.trip, first + segment.entry, first + exit_index))
            if segment.parent is None:
                break
            parent_round, parent_idx = segment.parent
            parent = self.queues[parent_round][parent_idx]
            exit_index = self._exit_index(parent, segment)
            segment = parent
        legs.reverse()

        enter, exit = legs[0].enter, legs[-1].exit
        initial_walk = footpaths.duration(source, tt.event_stop[enter])
        final_walk = footpaths.duration(tt.event_stop[exit], target)
        return Journey(
            source=source,
            target=target,
            legs=legs,
            initial_walk=initial_walk,
            final_walk=final_walk,
            departure=tt.event_dep[enter] - initial_walk,
            arrival=tt.event_arr[exit] + final_walk,
        )

    def query(self, q, journeys=True):
        """Pareto front of (arrival, trips) for a fixed departure

        Returns:
            QueryResult: front sorted by trips, one journey per front entry
        """
        self._check_stops(q.source, q.target)
        metrics = QueryMetrics()
        result = QueryResult(query=q, metrics=metrics)

        started = perf_counter()
        self.reached.new_query()
        self.best = [INFINITY] * (MAX_ROUNDS + 1)
        self._search(q.source, q.target, q.departure, self.reached, metrics)
        metrics.elapsed_us = (perf_counter() - started) * 1e6

        rounds = [n for n in range(MAX_ROUNDS + 1) if self.best[n] < INFINITY]
        result.front = [FrontEntry(self.best[n], n) for n in rounds]
        if journeys:
            started = perf_counter()
            result.journeys = [self._unpack(q.source, q.target, q.departure, n) for n in rounds]
            metrics.unpack_us = (perf_counter() - started) * 1e6
        return result

    def profile(self, pq):
        """All Pareto-optimal (departure, arrival, trips) triples in a window

        Runs one search per candidate departure, latest first. Tentative
        arrivals and reached indices per round carry over between runs so
        later departures prune earlier ones.
        """
        self._check_stops(pq.source, pq.target)
        if pq.start > pq.end:
            raise QueryError(f"Empty departure interval [{pq.start}, {pq.end}]")
        metrics = QueryMetrics()
        result = ProfileResult(query=pq, metrics=metrics)

        if self.profile_reached is None:
            self.profile_reached = ReachedIndexStore(self.tt, rounds=MAX_ROUNDS + 1)
        reached = self.profile_reached
        reached.new_query()
        self.best = [INFINITY] * (MAX_ROUNDS + 1)

        for departure in departure_candidates(self.tt, pq.source, pq.start, pq.end):
            started = perf_counter()
            self._search(pq.source, pq.target, departure, reached, metrics)
            metrics.elapsed_us += (perf_counter() - started) * 1e6

            started = perf_counter()
            for n in range(1, MAX_ROUNDS + 1):
                if self.hits[n] is None:
                    continue
                journey = self._unpack(pq.source, pq.target, departure, n)
                result.entries.append(ProfileEntry(departure, self.best[n], n, journey))
            metrics.unpack_us += (perf_counter() - started) * 1e6
        return result


class TrexBasicEngine(TripBasedEngine):
    """TB with the rank test on every transfer before it is enqueued"""

    name = "trex"

    def __init__(self, state):
        super().__init__(state)
        if state.partition is None or "customize" not in state.stages:
            raise QueryError(f"Engine {self.name} needs a customized partition")
        self.stop_cells = state.partition.stop_cells
        self.source_cell = self.target_cell = 0

    def _prepare(self, source, target):
        self.source_cell = self.stop_cells[source]
        self.target_cell = self.stop_cells[target]

    def _allowed(self, transfer, event):
        return lcl_test(
            self.ts.ranks[transfer],
            self.stop_cells[self.tt.event_stop[event]],
            self.source_cell,
            self.target_cell,
        )


class TrexOverlayEngine(TrexBasicEngine):
    """T-REX query: segments split along cell borders, each relaxing the
    transfer overlay of its level"""

    name = "trex-overlay"

    def __init__(self, state):
        super().__init__(state)
        if state.overlays is None or state.successors is None:
            raise QueryError(f"Engine {self.name} needs overlays and the successor table")
        self.overlays = state.overlays
        self.successors = state.successors

    def _piece_level(self, stop):
        cell = self.stop_cells[stop]
        return min(lcl(cell, self.source_cell), lcl(cell, self.target_cell))

    def _split(self, segment, pieces, target_pieces):
        tt = self.tt
        first = tt.trip_offsets[segment.trip]
        target_cell = self.target_cell
        start, level = segment.start, segment.level
        boundary = self.successors.get(tt, first + segment.entry, max(level - 1, 0))
        while start <= segment.end:
            end = min(boundary - 1, segment.end)
            if end >= start:
                if self.stop_cells[tt.event_stop[first + start]] == target_cell:
                    assert level == 0, "target cell piece above level 0"
                    target_pieces.append(len(pieces))
                pieces.append(
                    Segment(segment.trip, segment.entry, start, end, level, segment.parent)
                )
            if boundary > segment.end:
                break
            start = boundary
            level = self._piece_level(tt.event_stop[first + start])
            boundary = self.successors.get(tt, first + start, max(level - 1, 0))

    def _scan(self, n, tau, reached, metrics):
        tt = self.tt
        pieces, target_pieces = [], []
        for segment in self.queues[n]:
            self._split(segment, pieces, target_pieces)
        self.queues[n] = pieces
        metrics.scanned_segments += len(pieces)
        tau = self._target_checks(n, pieces, target_pieces, tau)

        if n == MAX_ROUNDS:
            return tau
        following = self.queues[n + 1]
        for idx, piece in enumerate(pieces):
            first = tt.trip_offsets[piece.trip]
            # lazy pruning against the target's best arrival
            for i in range(piece.start, piece.end + 1):
                if tt.event_arr[first + i] >= tau:
                    piece.end = i - 1
                    break
            offsets = self.overlays.offsets[piece.level]
            targets = self.overlays.targets[piece.level]
            for e in range(first + piece.start, first + piece.end + 1):
                for position in range(offsets[e], offsets[e + 1]):
                    metrics.relaxed_transfers += 1
                    enqueue(
                        tt,
                        reached,
                        following,
                        targets[position],
                        (n, idx),
                        level=piece.level,
                        n=n + 1,
                    )
        return tau

    def _leads_to(self, parent, event, target):
        return self.overlays.find(parent.level, event, target) is not None


ENGINES = {
    "tb": TripBasedEngine,
    "trex": TrexBasicEngine,
    "trex-overlay": TrexOverlayEngine,
}
assert tuple(ENGINES) == ALGORITHMS


class Router:
    """Query facade over an engine state, one lazily built engine per algorithm"""

    def __init__(self, state):
        self.state = state
        self.engines = {}

    def engine(self, algorithm):
        if algorithm not in ENGINES:
            raise QueryError(f"Unknown algorithm {algorithm}, use one of {', '.join(ALGORITHMS)}")
        if algorithm not in self.engines:
            self.engines[algorithm] = ENGINES[algorithm](self.state)
        return self.engines[algorithm]

    def query(self, q, algorithm="tb", journeys=True):
        return self.engine(algorithm).query(q, journeys=journeys)

    def profile(self, pq, algorithm="tb"):
        return self.engine(algorithm).profile(pq)


def stop_id(tt, value):
    """Resolve a stop given as a dense id or a stop name"""
    if isinstance(value, int) or (isinstance(value, str) and value.isdigit()):
        stop = int(value)
        if 0 <= stop < tt.stop_count:
            return stop
    for stop in tt.stops:
        if stop.name == value:
            return stop.id
    raise QueryError(f"Unknown stop {value}")
