# -*- coding: utf-8 -*-
import bisect
import logging
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger()

INFINITY = float("inf")


class TransferSet:
    """Event-to-event transfers, one contiguous run per source event

    Runs are sorted by target event id. `ranks` holds one rank per transfer
    and stays all-zero until customization.
    """

    def __init__(self, offsets, targets, ranks=None):
        assert offsets[0] == 0 and offsets[-1] == len(targets)
        self.offsets = list(offsets)
        self.targets = list(targets)
        self.ranks = list(ranks) if ranks is not None else [0] * len(self.targets)
        assert len(self.ranks) == len(self.targets)
        self._sources = None

    @classmethod
    def from_runs(cls, runs, ranks=None):
        offsets, targets = [0], []
        for run in runs:
            targets.extend(sorted(run))
            offsets.append(len(targets))
        return cls(offsets, targets, ranks)

    def __len__(self):
        return len(self.targets)

    def __eq__(self, other):
        return (
            isinstance(other, TransferSet)
            and self.offsets == other.offsets
            and self.targets == other.targets
            and self.ranks == other.ranks
        )

    @property
    def event_count(self):
        return len(self.offsets) - 1

    @property
    def sources(self):
        """Source event per transfer id"""
        if self._sources is None:
            self._sources = []
            for event in range(self.event_count):
                self._sources.extend([event] * (self.offsets[event + 1] - self.offsets[event]))
        return self._sources

    def run(self, event):
        return range(self.offsets[event], self.offsets[event + 1])

    def outgoing(self, event):
        return self.targets[self.offsets[event] : self.offsets[event + 1]]

    def find(self, source, target):
        """Transfer id of (source, target), None when absent"""
        start, end = self.offsets[source], self.offsets[source + 1]
        position = bisect.bisect_left(self.targets, target, start, end)
        if position < end and self.targets[position] == target:
            return position
        return None

    def contains(self, source, target):
        return self.find(source, target) is not None

    def pairs(self):
        for event in range(self.event_count):
            for target in self.outgoing(event):
                yield event, target

    def filtered(self, keep):
        """Subset of transfers flagged in `keep`, ranks preserved"""
        offsets, targets, ranks = [0], [], []
        for event in range(self.event_count):
            for t in self.run(event):
                if keep[t]:
                    targets.append(self.targets[t])
                    ranks.append(self.ranks[t])
            offsets.append(len(targets))
        return TransferSet(offsets, targets, ranks)

    def copy_ranks_from(self, other):
        """Carry ranks over from another set for identical (source, target) pairs"""
        for t, (source, target) in enumerate(zip(self.sources, self.targets)):
            previous = other.find(source, target) if source < other.event_count else None
            self.ranks[t] = other.ranks[previous] if previous is not None else 0


def _in_chunks(tt, process, workers):
    """Apply `process` to every trip, results concatenated in trip order"""
    trips = range(tt.trip_count)
    if workers <= 1:
        results = [process(trip) for trip in trips]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(process, trips))
    return [run for runs in results for run in runs]


def _generate_trip(tt, trip):
    events = tt.trip_events(trip)
    line_a = tt.trip_line[trip]
    position_a = tt.line_position(trip)
    runs = [[] for _ in events]

    # Smallest generated trip position per line, as a prefix minimum over indices
    generated = {}

    for j in range(len(events) - 1, 0, -1):
        exit_event = events[j]
        arrival = tt.event_arr[exit_event]

        candidates = []
        for stop, duration in tt.footpaths.neighbours(tt.event_stop[exit_event]):
            for line, index in tt.stop_occurrences[stop]:
                if index == len(tt.lines[line].stops) - 1:
                    continue
                target_trip = tt.earliest_trip(line, index, arrival + duration)
                if target_trip is None:
                    continue
                position = tt.line_position(target_trip)
                if line == line_a and position >= position_a and j <= index:
                    continue
                candidates.append((line, index, position, target_trip))

        for line, index, position, target_trip in sorted(candidates):
            prefix = generated.get(line)
            if prefix is not None and prefix[index] <= position:
                continue
            if prefix is None:
                prefix = generated[line] = [INFINITY] * len(tt.lines[line].stops)
            for k in range(index, len(prefix)):
                if prefix[k] > position:
                    prefix[k] = position
            runs[j].append(tt.event(target_trip, index))

    return runs


def generate_transfers(tt, workers=1):
    """Generate the transfer set with same-line and Lehoux-Loiodice suppression"""
    runs = _in_chunks(tt, lambda trip: _generate_trip(tt, trip), workers)
    transfers = TransferSet.from_runs(runs)
    logger.info(f"Generated {len(transfers)} transfers")
    return transfers


def prune_uturn(tt, ts, workers=1):
    """Drop transfers that step back to the stop the traveller just came from

    Membership of the shortcut transfer is tested against the input set, so the
    outcome does not depend on processing order.
    """

    def _trip(trip):
        keep = []
        for exit_event in tt.trip_events(trip):
            for t in ts.run(exit_event):
                target = ts.targets[t]
                keep.append(
                    not (
                        tt.event_index(exit_event) > 0
                        and tt.event_index(target) + 1 < tt.trip_length(tt.event_trip[target])
                        and tt.event_stop[exit_event - 1] == tt.event_stop[target + 1]
                        and ts.contains(exit_event - 1, target + 1)
                    )
                )
        return [keep]

    keep = _in_chunks(tt, _trip, workers)
    keep = [flag for flags in keep for flag in flags]
    pruned = ts.filtered(keep)
    logger.info(f"U-turn rule removed {len(ts) - len(pruned)} transfers")
    return pruned


def prune_latest_exit(tt, ts, workers=1):
    """Drop transfers dominated by a transfer from a later exit of the same trip

    Each trip is swept backwards with the best arrival per stop reachable
    through the transfers kept at later exits, footpaths included. A transfer
    survives only if some exit of its target trip strictly improves one of
    these arrivals.
    """

    def _trip(trip):
        labels = {}
        flags = []
        for exit_event in reversed(tt.trip_events(trip)):
            run = ts.run(exit_event)
            kept = []
            for t in run:
                target = ts.targets[t]
                end = tt.trip_offsets[tt.event_trip[target] + 1]
                useful = any(
                    tt.event_arr[e] < labels.get(tt.event_stop[e], INFINITY)
                    for e in range(target + 1, end)
                )
                kept.append(useful)

            for t, useful in zip(run, kept):
                if not useful:
                    continue
                target = ts.targets[t]
                end = tt.trip_offsets[tt.event_trip[target] + 1]
                for e in range(target + 1, end):
                    for stop, duration in tt.footpaths.neighbours(tt.event_stop[e]):
                        arrival = tt.event_arr[e] + duration
                        if arrival < labels.get(stop, INFINITY):
                            labels[stop] = arrival
            flags.append(kept)

        return [flag for kept in reversed(flags) for flag in kept]

    keep = _in_chunks(tt, lambda trip: [_trip(trip)], workers)
    keep = [flag for flags in keep for flag in flags]
    pruned = ts.filtered(keep)
    logger.info(f"Latest-exit rule removed {len(ts) - len(pruned)} transfers")
    return pruned


def build_transfers(tt, uturn=True, latest_exit=True, workers=1):
    """Full preprocessing: generation then the optional pruning rules, in order"""
    transfers = generate_transfers(tt, workers)
    if uturn:
        transfers = prune_uturn(tt, transfers, workers)
    if latest_exit:
        transfers = prune_latest_exit(tt, transfers, workers)
    return transfers


def is_feasible(tt, source, target):
    """Whether exiting at `source` and entering at `target` respects the footpath time"""
    duration = tt.footpaths.duration(tt.event_stop[source], tt.event_stop[target])
    if duration is None:
        return False
    if tt.event_index(source) == 0:
        return False
    if tt.event_index(target) == tt.trip_length(tt.event_trip[target]) - 1:
        return False
    return tt.event_arr[source] + duration <= tt.event_dep[target]
