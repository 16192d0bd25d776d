# -*- coding: utf-8 -*-
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from trex import MAX_RANK
from trex import MAX_ROUNDS
from trex import MAX_TRIP_EVENTS
from trex import TrexError
from trex.partition import NestedPartition
from trex.timetable import Timetable
from trex.transfers import TransferSet

logger = logging.getLogger()

TIMESTAMP_LIMIT = 1 << 16
UPDATE_MODES = frozenset(("thorough", "windowed"))
STAGES = ("ingest", "transfers", "partition", "customize")


class CustomizationError(TrexError):
    pass


class ReachedIndexStore:
    """Timestamped reached index R(T) for every trip

    An entry whose timestamp differs from the current query id reads as |T|,
    so nothing needs clearing between queries. Timestamps wrap every 2^16
    queries, at which point every entry is reset.

    With `rounds` > 1 one index is kept per round and lowering the index of a
    round lowers it for all later rounds too (profile runs reuse them).
    """

    def __init__(self, tt, rounds=1):
        assert rounds >= 1
        self.tt = tt
        self.rounds = rounds
        self.reached = [[0] * tt.trip_count for _ in range(rounds)]
        self.stamps = [[0] * tt.trip_count for _ in range(rounds)]
        self.query_id = 0
        self.line_end = [tt.lines[tt.trip_line[trip]].trips[-1] for trip in range(tt.trip_count)]

    def new_query(self):
        self.query_id += 1
        if self.query_id == TIMESTAMP_LIMIT:
            for stamps in self.stamps:
                stamps[:] = [0] * len(stamps)
            self.query_id = 1

    def _layer(self, n):
        return min(n, self.rounds - 1)

    def get(self, trip, n=0):
        layer = self._layer(n)
        if self.stamps[layer][trip] != self.query_id:
            return self.tt.trip_offsets[trip + 1] - self.tt.trip_offsets[trip]
        return self.reached[layer][trip]

    def lower(self, trip, index, n=0):
        """R(T') <- index for T' ⪰ trip, until an equal or smaller index stops the walk"""
        for layer in range(self._layer(n), self.rounds):
            reached, stamps = self.reached[layer], self.stamps[layer]
            for other in range(trip, self.line_end[trip] + 1):
                if stamps[other] == self.query_id and reached[other] <= index:
                    break
                stamps[other] = self.query_id
                reached[other] = index


class Segment:
    """Trip segment T[start..end], entered at index `entry`

    `parent` is the (round, queue position) of the segment whose transfer
    reached this one, None for segments created by the initial enqueue.
    """

    __slots__ = ("trip", "entry", "start", "end", "level", "parent")

    def __init__(self, trip, entry, start, end, level=0, parent=None):
        self.trip = trip
        self.entry = entry
        self.start = start
        self.end = end
        self.level = level
        self.parent = parent

    def __repr__(self):
        return (
            f"Segment(trip={self.trip}, entry={self.entry}, {self.start}..{self.end}, "
            f"level={self.level}, parent={self.parent})"
        )


def enqueue(tt, reached, queue, target, parent, level=0, n=0):
    """Push the segment reached by a transfer into event `target`

    Returns:
        Segment: the new segment, None when the trip was already reached there
    """
    trip = tt.event_trip[target]
    index = target - tt.trip_offsets[trip]
    limit = reached.get(trip, n)
    if limit <= index + 1:
        return None
    segment = Segment(trip, index, index + 1, limit - 1, level, parent)
    queue.append(segment)
    reached.lower(trip, index + 1, n)
    return segment


class SuccessorTable:
    """succ(T[i], ℓ): first index j ≥ i whose stop leaves the level-ℓ cell of
    T[i], or |T| when the trip never leaves it (0-based indices)."""

    def __init__(self, array):
        self.array = np.asarray(array, dtype=np.uint8)
        assert self.array.ndim == 2
        self.rows = [row.tolist() for row in self.array]

    @property
    def levels(self):
        return self.array.shape[0]

    def __eq__(self, other):
        return isinstance(other, SuccessorTable) and np.array_equal(self.array, other.array)

    def get(self, tt, event, level):
        if level >= self.levels:
            return tt.trip_length(tt.event_trip[event])
        return self.rows[level][event]


def build_successor_table(tt, part):
    for trip in range(tt.trip_count):
        if tt.trip_length(trip) > MAX_TRIP_EVENTS:
            raise CustomizationError(
                f"Trip {tt.trip_names[trip]} has {tt.trip_length(trip)} events, "
                f"at most {MAX_TRIP_EVENTS} are supported"
            )

    array = np.zeros((part.levels, tt.event_count), dtype=np.uint8)
    for level in range(part.levels):
        cells = [part.cell(stop, level) for stop in tt.event_stop]
        row = array[level]
        for trip in range(tt.trip_count):
            first, length = tt.trip_offsets[trip], tt.trip_length(trip)
            successor = length
            for i in range(length - 1, -1, -1):
                if i + 1 < length and cells[first + i] != cells[first + i + 1]:
                    successor = i + 1
                row[first + i] = successor
    return SuccessorTable(array)


@dataclass
class BorderEvents:
    """Incoming border events per level, grouped by the cell they lead into"""

    levels: int
    incoming: list

    def ibes(self, level):
        return self.incoming[level]

    def count(self, level):
        return sum(len(events) for events in self.incoming[level].values())


def is_border(tt, part, event, level):
    """Whether the event and its successor on the trip lie in different level-ℓ cells"""
    trip = tt.event_trip[event]
    if event + 1 >= tt.trip_offsets[trip + 1]:
        return False
    return part.cell(tt.event_stop[event], level) != part.cell(tt.event_stop[event + 1], level)


def is_obe(tt, part, event, cell):
    """Outgoing border event test for cell = (level, cell id)"""
    level, cell_id = cell
    return part.cell(tt.event_stop[event], level) == cell_id and is_border(tt, part, event, level)


def collect_border_events(tt, part):
    borders = [e for e in range(tt.event_count) if is_border(tt, part, e, 0)]
    incoming = []
    for level in range(part.levels):
        # IBEs of a level are a subset of those below it
        borders = [e for e in borders if is_border(tt, part, e, level)]
        cells = defaultdict(list)
        for e in borders:
            cells[part.cell(tt.event_stop[e + 1], level)].append(e)
        incoming.append(dict(cells))
    return BorderEvents(levels=part.levels, incoming=incoming)


class EventSearch:
    """Event-TB: a TB search seeded with a single stop event

    Confined to a cell, each segment is cut after its first outgoing border
    event and the reached OBEs are collected. Without a cell every scanned
    event is collected with the round it was first scanned in.
    """

    def __init__(self, tt, ts, part, successors=None):
        self.tt = tt
        self.ts = ts
        self.part = part
        self.successors = successors if successors is not None else build_successor_table(tt, part)
        self.reached = ReachedIndexStore(tt)
        self.queues = []
        self.found = {}
        self.min_rank = 0
        self.marks = [0] * len(ts)
        self.mark_id = 0

    def _bound(self, segment, level):
        if level is None:
            return
        first = self.tt.trip_offsets[segment.trip]
        if segment.parent is not None and is_obe(
            self.tt, self.part, first + segment.entry, (level, self.cell_id)
        ):
            # Entered right at the border, nothing left to ride inside the cell
            segment.end = segment.start - 1
            return
        successor = self.successors.get(self.tt, first + segment.start, level)
        segment.end = min(segment.end, successor - 1)

    def run(self, source, cell=None, min_rank=0, max_rounds=MAX_ROUNDS):
        """Search from `source`, relaxing only transfers of rank ≥ min_rank

        Args:
            source (int): initial stop event, an IBE of `cell` when one is given
            cell (tuple): (level, cell id) confinement, None for the whole network

        Returns:
            dict: reached event -> number of trips used to reach it
        """
        tt, ts = self.tt, self.ts
        level = None
        if cell is not None:
            level, self.cell_id = cell
            assert is_border(tt, self.part, source, level), f"Event {source} is no border event"
            assert (
                self.part.cell(tt.event_stop[source + 1], level) == self.cell_id
            ), f"Event {source} does not lead into cell {cell}"

        self.reached.new_query()
        self.min_rank = min_rank
        self.found = {}
        self.queues = [[] for _ in range(max_rounds + 2)]
        root = enqueue(tt, self.reached, self.queues[1], source, None)
        if root is None:
            return {}
        self._bound(root, level)

        ranks, targets, offsets = ts.ranks, ts.targets, ts.offsets
        for n in range(1, max_rounds + 1):
            queue = self.queues[n]
            if not queue:
                break

            for position, segment in enumerate(queue):
                first = tt.trip_offsets[segment.trip]
                if level is None:
                    for i in range(segment.start, segment.end + 1):
                        self.found.setdefault(first + i, (n, position))
                    continue
                if segment.parent is not None and segment.end < segment.start:
                    entry = first + segment.entry
                    if is_obe(tt, self.part, entry, cell):
                        self.found.setdefault(entry, (n, position))
                elif segment.end >= segment.start:
                    last = first + segment.end
                    if is_obe(tt, self.part, last, cell):
                        self.found.setdefault(last, (n, position))

            if n == max_rounds:
                break
            following = self.queues[n + 1]
            for position, segment in enumerate(queue):
                first = tt.trip_offsets[segment.trip]
                for e in range(first + segment.start, first + segment.end + 1):
                    for t in range(offsets[e], offsets[e + 1]):
                        if ranks[t] < min_rank:
                            continue
                        child = enqueue(tt, self.reached, following, targets[t], (n, position))
                        if child is not None:
                            self._bound(child, level)

        return {event: n for event, (n, _) in self.found.items()}

    def entering_transfer(self, parent, child):
        """First transfer of the parent's scanned range leading into the child"""
        tt, ts = self.tt, self.ts
        target = tt.trip_offsets[child.trip] + child.entry
        first = tt.trip_offsets[parent.trip]
        for e in range(first + parent.start, first + parent.end + 1):
            t = ts.find(e, target)
            if t is not None and ts.ranks[t] >= self.min_rank:
                return t
        raise CustomizationError(f"Dangling parent link into event {target}")

    def journey_transfers(self, events):
        """Transfers of the journeys to the given reached events

        Transfers are marked once collected; a journey meeting a marked
        transfer shares the rest of its prefix with an unpacked one.
        """
        self.mark_id += 1
        if self.mark_id == TIMESTAMP_LIMIT:
            self.marks = [0] * len(self.ts)
            self.mark_id = 1

        collected = []
        for event in events:
            n, position = self.found[event]
            segment = self.queues[n][position]
            while segment.parent is not None:
                parent_round, parent_position = segment.parent
                parent = self.queues[parent_round][parent_position]
                t = self.entering_transfer(parent, segment)
                if self.marks[t] == self.mark_id:
                    break
                self.marks[t] = self.mark_id
                collected.append(t)
                segment = parent
        return collected


def event_tb(tt, ts, part, source, cell=None, min_rank=0, successors=None):
    """One-shot Event-TB search, see EventSearch.run"""
    return EventSearch(tt, ts, part, successors).run(source, cell, min_rank)


def _batches(items, count):
    count = max(1, min(count, len(items)))
    return [items[i::count] for i in range(count)]


def _parallel(batches, work, threads):
    if threads <= 1 or len(batches) <= 1:
        return [work(batch) for batch in batches]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(work, batches))


def _search_all(tt, ts, part, successors, level, sources, threads):
    """Transfer ids on every journey found from the given IBEs"""

    def _work(batch):
        search = EventSearch(tt, ts, part, successors)
        found = set()
        for source in batch:
            cell = (level, part.cell(tt.event_stop[source + 1], level))
            reached = search.run(source, cell, min_rank=level)
            found.update(search.journey_transfers(sorted(reached)))
        return found

    found = set()
    for batch_found in _parallel(_batches(sources, threads), _work, threads):
        found |= batch_found
    return found


def customize(tt, ts, part, threads=1, successors=None, border=None):
    """Rank every transfer bottom-up from Event-TB searches at all IBEs

    Ranks only ever grow (by max) and are written after each level, so the
    result does not depend on the thread count.

    Returns:
        list: the rank of each transfer, also stored in `ts.ranks`
    """
    if part.levels > MAX_RANK:
        raise CustomizationError(f"Ranks cannot exceed {MAX_RANK}")
    if successors is None:
        successors = build_successor_table(tt, part)
    if border is None:
        border = collect_border_events(tt, part)

    ranks = ts.ranks
    for level in range(part.levels):
        sources = sorted(e for events in border.ibes(level).values() for e in events)
        found = _search_all(tt, ts, part, successors, level, sources, threads)
        for t in found:
            ranks[t] = max(ranks[t], level + 1)
        logger.info(
            f"Level {level}: {len(sources)} incoming border events, "
            f"{len(found)} transfers ranked above {level}"
        )
    return ranks


class TransferOverlays:
    """Per level ℓ = 0..K, the adjacency of transfers with rank ≥ ℓ

    `ids` maps every overlay entry back to its transfer id.
    """

    def __init__(self, offsets, targets, ids):
        assert len(offsets) == len(targets) == len(ids)
        self.offsets = [list(level) for level in offsets]
        self.targets = [list(level) for level in targets]
        self.ids = [list(level) for level in ids]

    def __eq__(self, other):
        return (
            isinstance(other, TransferOverlays)
            and self.offsets == other.offsets
            and self.targets == other.targets
            and self.ids == other.ids
        )

    @property
    def levels(self):
        return len(self.offsets)

    def size(self, level):
        return len(self.targets[level])

    def sizes(self):
        return [self.size(level) for level in range(self.levels)]

    def run(self, level, event):
        return range(self.offsets[level][event], self.offsets[level][event + 1])

    def find(self, level, source, target):
        """Transfer id of (source, target) in overlay `level`, None when absent"""
        targets = self.targets[level]
        for position in self.run(level, source):
            if targets[position] == target:
                return self.ids[level][position]
        return None


def build_overlays(ts, levels):
    ranks = np.asarray(ts.ranks, dtype=np.int64)
    sources = np.asarray(ts.sources, dtype=np.int64)
    targets = np.asarray(ts.targets, dtype=np.int64)

    offsets, overlay_targets, ids = [], [], []
    for level in range(levels + 1):
        keep = np.nonzero(ranks >= level)[0]
        counts = np.bincount(sources[keep], minlength=ts.event_count)
        offsets.append(np.concatenate(([0], np.cumsum(counts))).tolist())
        overlay_targets.append(targets[keep].tolist())
        ids.append(keep.tolist())

    overlays = TransferOverlays(offsets, overlay_targets, ids)
    logger.info(f"Transfer overlay sizes per level: {overlays.sizes()}")
    return overlays


@dataclass
class EngineState:
    """Everything the query engines and snapshots need, filled stage by stage"""

    timetable: Optional[Timetable] = None
    transfers: Optional[TransferSet] = None
    partition: Optional[NestedPartition] = None
    successors: Optional[SuccessorTable] = None
    overlays: Optional[TransferOverlays] = None

    @property
    def stages(self):
        done = []
        for stage, component in zip(
            STAGES, (self.timetable, self.transfers, self.partition, self.overlays)
        ):
            if component is not None:
                done.append(stage)
        return done


def build_engine_state(tt, ts, part, threads=1):
    """Customize, then build the overlays and successor table for queries"""
    successors = build_successor_table(tt, part)
    customize(tt, ts, part, threads=threads, successors=successors)
    return EngineState(
        timetable=tt,
        transfers=ts,
        partition=part,
        successors=successors,
        overlays=build_overlays(ts, part.levels),
    )


def rank_histogram(ts):
    """Transfer count per rank"""
    if not len(ts):
        return []
    return np.bincount(np.asarray(ts.ranks, dtype=np.int64)).tolist()


def _incident(ts, ranks, level):
    incident = defaultdict(set)
    for t, (source, target) in enumerate(zip(ts.sources, ts.targets)):
        if ranks[t] >= level:
            incident[source].add((source, target))
            incident[target].add((source, target))
    return incident


def _affected_events(tt, old, current, current_ranks, level, edited_trips):
    before = _incident(old, old.ranks, level)
    after = _incident(current, current_ranks, level)
    direct = {e for e in set(before) | set(after) if before.get(e) != after.get(e)}

    # Successor trips of a changed trip inherit its affected indices
    changed = set(direct)
    for trip in edited_trips if level == 0 else ():
        changed.update(tt.trip_events(trip))
    indirect = set()
    for e in changed:
        trip = tt.event_trip[e]
        line = tt.lines[tt.trip_line[trip]]
        if trip != line.trips[-1]:
            indirect.add(tt.event(trip + 1, tt.event_index(e)))
    return direct | indirect


def _windowed_sources(tt, sources, window):
    """IBE groups per (line, index), latest departure first, dropping the
    ones leaving after the window"""
    earliest, latest = window
    groups = defaultdict(list)
    for e in sources:
        if tt.event_dep[e] > latest:
            continue
        groups[(tt.trip_line[tt.event_trip[e]], tt.event_index(e))].append(e)
    return [
        sorted(group, key=lambda e: tt.event_dep[e], reverse=True)
        for _, group in sorted(groups.items())
    ]


def update_ranks(tt, ts, part, old, changes, mode="thorough", threads=1):
    """Bring ranks up to date after event time changes

    Args:
        tt (Timetable): the changed timetable
        ts (TransferSet): transfers already regenerated for `tt`
        part (NestedPartition): unchanged partition
        old (TransferSet): previous transfers with their customized ranks
        changes (dict): event id -> (arrival, departure) edits
        mode (str): "thorough" recomputes affected cells exactly, "windowed"
            only raises ranks, skipping IBEs outside the affected time window

    Returns:
        list: updated ranks, also stored in `ts.ranks`
    """
    if mode not in UPDATE_MODES:
        raise CustomizationError(f"Unknown update mode {mode}, use {sorted(UPDATE_MODES)}")

    ts.copy_ranks_from(old)
    ranks = ts.ranks
    if not changes:
        logger.info("No timetable change, ranks kept")
        return ranks

    successors = build_successor_table(tt, part)
    border = collect_border_events(tt, part)
    edited_trips = sorted({tt.event_trip[e] for e in changes})

    for level in range(part.levels):
        affected = _affected_events(tt, old, ts, ranks, level, edited_trips)
        cells = defaultdict(list)
        for e in affected:
            cells[part.cell(tt.event_stop[e], level)].append(e)
        if not cells:
            logger.info(f"Rank update stops at level {level}")
            break

        ibes = border.ibes(level)
        if mode == "thorough":
            sources = sorted(e for cell in cells for e in ibes.get(cell, []))
            found = _search_all(tt, ts, part, successors, level, sources, threads)
            for t, source in enumerate(ts.sources):
                if part.cell(tt.event_stop[source], level) not in cells:
                    continue
                if t in found:
                    ranks[t] = ranks[t] if ranks[t] >= level + 1 else level + 1
                else:
                    ranks[t] = min(ranks[t], level)
        else:
            found = set()
            for cell, events in sorted(cells.items()):
                arrivals = [tt.event_arr[e] for e in events]
                window = (min(arrivals), max(arrivals))
                groups = _windowed_sources(tt, ibes.get(cell, []), window)
                found |= _search_windowed(
                    tt, ts, part, successors, level, cell, groups, window, threads
                )
            for t in found:
                ranks[t] = max(ranks[t], level + 1)

        logger.info(
            f"Level {level}: updated {len(cells)} cells, {len(found)} transfers found"
        )
    return ranks


def _search_windowed(tt, ts, part, successors, level, cell, groups, window, threads):
    earliest, _ = window

    def _work(batch):
        search = EventSearch(tt, ts, part, successors)
        found = set()
        for group in batch:
            for source in group:
                reached = search.run(source, (level, cell), min_rank=level)
                found.update(search.journey_transfers(sorted(reached)))
                if reached and max(tt.event_arr[e] for e in reached) < earliest:
                    break
        return found

    found = set()
    for batch_found in _parallel(_batches(groups, threads), _work, threads):
        found |= batch_found
    return found
