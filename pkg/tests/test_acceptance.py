# -*- coding: utf-8 -*-
"""End to end checks of the engines on clustered synthetic instances

The desk instances run by default with small query counts. The full-scale
instances run with `pytest --slow`.
"""
import logging

import numpy as np
import pytest

from conftest import prepare
from trex import ALGORITHMS
from trex import snapshot
from trex.customize import EngineState
from trex.customize import build_overlays
from trex.customize import build_successor_table
from trex.customize import customize
from trex.customize import event_tb
from trex.customize import rank_histogram
from trex.customize import update_ranks
from trex.partition import lcl_test
from trex.query import ProfileQuery
from trex.query import Router
from trex.refkit import SyntheticSpec
from trex.refkit import gen_synthetic
from trex.refkit import oracle_front
from trex.refkit import oracle_profile
from trex.refkit import random_queries
from trex.timetable import TimetableError
from trex.timetable import delay_event
from trex.transfers import TransferSet
from trex.transfers import build_transfers

logger = logging.getLogger()

DESK = {"queries": 25, "profiles": 5, "journeys": 20, "updates": 4, "update_queries": 6}
FULL = {"queries": 1000, "profiles": 200, "journeys": 200, "updates": 50, "update_queries": 10}

# (spec fields, K, ε)
DESK_INSTANCES = [
    ({"stops": 60, "lines": 16, "trips_per_line": 3, "clusters": 4, "seed": 21}, 0, 0.25),
    ({"stops": 60, "lines": 16, "trips_per_line": 3, "clusters": 4, "seed": 22}, 2, 0.25),
    ({"stops": 80, "lines": 20, "trips_per_line": 2, "clusters": 4, "seed": 23}, 4, 0.5),
    ({"stops": 64, "lines": 18, "trips_per_line": 3, "clusters": 8, "seed": 24}, 6, 0.25),
]

# (spec fields, K, ε, counts)
INSTANCES = [
    pytest.param((fields, levels, epsilon, DESK), id=f"seed{fields['seed']}-K{levels}")
    for fields, levels, epsilon in DESK_INSTANCES
] + [
    pytest.param(
        (
            {
                "stops": 60 + 7 * i,
                "lines": 16 + i,
                "trips_per_line": 3 + i % 3,
                "clusters": 4 + 4 * (i % 2),
                "seed": 101 + i,
            },
            (0, 2, 4, 6)[i % 4],
            (0.25, 0.5)[i // 4 % 2],
            FULL,
        ),
        id=f"seed{101 + i}-K{(0, 2, 4, 6)[i % 4]}",
        marks=pytest.mark.slow,
    )
    for i in range(20)
]


class Instance:
    def __init__(self, state, counts):
        self.state = state
        self.counts = counts


@pytest.fixture(scope="module", params=INSTANCES)
def instance(request):
    fields, levels, epsilon, counts = request.param
    state = prepare(gen_synthetic(SyntheticSpec(fields)), levels, epsilon=epsilon)
    return Instance(state, counts)


@pytest.fixture(scope="module")
def queries(instance):
    return random_queries(instance.state.timetable, instance.counts["queries"], seed=7)


def test_oracle_equivalence(instance, queries):
    state = instance.state
    tt, ts = state.timetable, state.transfers
    router = Router(state)
    cells = state.partition.stop_cells
    for query in queries:
        expected = oracle_front(tt, query).at(query.target)
        for algorithm in ALGORITHMS:
            result = router.query(query, algorithm)
            assert result.front == expected, f"{algorithm} on {query}"
            for journey in result.journeys:
                journey.validate(tt, ts)

        # every transfer of a returned journey passes the rank test
        for journey in router.query(query, "trex").journeys:
            for previous, following in zip(journey.legs, journey.legs[1:]):
                t = ts.find(previous.exit, following.enter)
                cell = cells[tt.event_stop[previous.exit]]
                assert lcl_test(ts.ranks[t], cell, cells[query.source], cells[query.target])


def test_subjourneys_found_from_their_events(instance, queries):
    state = instance.state
    tt, ts, part = state.timetable, state.transfers, state.partition
    router = Router(state)
    journeys = [j for q in queries for j in router.query(q, "tb").journeys if j.legs]
    assert journeys
    for journey in journeys[: instance.counts["journeys"]]:
        last = journey.legs[-1].exit
        for i, leg in enumerate(journey.legs):
            # the exit event itself cannot transfer inside its own search
            for event in range(leg.enter, leg.exit):
                reached = event_tb(tt, ts, part, event, successors=state.successors)
                assert reached.get(last) == len(journey.legs) - i, f"{event} on {journey}"


def test_profile_equivalence(instance):
    state = instance.state
    router = Router(state)
    for query in random_queries(state.timetable, instance.counts["profiles"], seed=5):
        pq = ProfileQuery(query.source, query.target, query.departure, query.departure + 3 * 3600)
        expected = sorted(oracle_profile(state.timetable, pq))
        for algorithm in ALGORITHMS:
            assert router.profile(pq, algorithm).costs() == expected, f"{algorithm} on {pq}"


def test_search_space_ordering(instance, queries):
    state = instance.state
    router = Router(state)
    totals = {algorithm: 0 for algorithm in ALGORITHMS}
    reductions = []
    for query in queries:
        relaxed = {
            algorithm: router.query(query, algorithm, journeys=False).metrics.relaxed_transfers
            for algorithm in ALGORITHMS
        }
        assert relaxed["trex-overlay"] <= relaxed["trex"] <= relaxed["tb"], query
        for algorithm, count in relaxed.items():
            totals[algorithm] += count
        if relaxed["trex"]:
            reductions.append(relaxed["tb"] / relaxed["trex"])

    median = float(np.median(reductions)) if reductions else 1.0
    logger.info(f"K={state.partition.levels} relaxed transfers {totals}, median reduction {median}")
    if state.partition.levels:
        assert totals["trex"] < totals["tb"]


def test_pruning_soundness(instance, queries):
    state = instance.state
    unpruned = Router(
        prepare(state.timetable, state.partition.levels, uturn=False, latest_exit=False)
    )
    router = Router(state)
    for query in queries:
        assert router.query(query).costs() == unpruned.query(query).costs()


@pytest.mark.parametrize("threads", [1, 4, 8])
def test_customization_determinism(instance, threads):
    state = instance.state
    tt, ts, part = state.timetable, state.transfers, state.partition
    fresh = TransferSet(ts.offsets, ts.targets)
    customize(tt, fresh, part, threads=threads)
    assert fresh.ranks == ts.ranks
    customize(tt, fresh, part, threads=threads)
    assert fresh.ranks == ts.ranks


def _delay_scenarios(tt, count):
    """Delayed timetables with their edits, skipping delays that break a line"""
    rng = np.random.default_rng(13)
    scenarios = []
    for _ in range(count * 4):
        if len(scenarios) == count:
            break
        edits = delay_event(tt, int(rng.integers(tt.event_count)), int(rng.integers(60, 600)))
        try:
            scenarios.append((tt.with_event_times(edits), edits))
        except TimetableError:
            continue
    return scenarios


def _state(tt, ts, part):
    return EngineState(
        timetable=tt,
        transfers=ts,
        partition=part,
        successors=build_successor_table(tt, part),
        overlays=build_overlays(ts, part.levels),
    )


def test_thorough_update_matches_customization(instance):
    state = instance.state
    part = state.partition
    scenarios = _delay_scenarios(state.timetable, instance.counts["updates"])
    assert scenarios
    for seed, (delayed, edits) in enumerate(scenarios):
        ts = build_transfers(delayed)
        update_ranks(delayed, ts, part, state.transfers, edits, mode="thorough")
        scratch = TransferSet(ts.offsets, ts.targets)
        customize(delayed, scratch, part)

        updated = Router(_state(delayed, ts, part))
        customized = Router(_state(delayed, scratch, part))
        for query in random_queries(delayed, instance.counts["update_queries"], seed=seed):
            expected = customized.query(query, "trex").front
            assert expected == oracle_front(delayed, query).at(query.target)
            for algorithm in ("trex", "trex-overlay"):
                assert updated.query(query, algorithm).front == expected, f"{algorithm} on {query}"


def test_windowed_update_matches_oracle(instance):
    state = instance.state
    part = state.partition
    scenarios = _delay_scenarios(state.timetable, instance.counts["updates"])
    assert scenarios
    for seed, (delayed, edits) in enumerate(scenarios):
        ts = build_transfers(delayed)
        update_ranks(delayed, ts, part, state.transfers, edits, mode="windowed")
        router = Router(_state(delayed, ts, part))
        for query in random_queries(delayed, instance.counts["update_queries"], seed=seed):
            expected = oracle_front(delayed, query).at(query.target)
            for algorithm in ("trex", "trex-overlay"):
                assert router.query(query, algorithm).front == expected, f"{algorithm} on {query}"


def test_snapshot_round_trip(instance, queries, tmp_path):
    path = str(tmp_path / "instance.trex")
    snapshot.save(path, instance.state)
    loaded = Router(snapshot.load(path))
    router = Router(instance.state)
    for query in queries:
        for algorithm in ALGORITHMS:
            assert loaded.query(query, algorithm).costs() == router.query(query, algorithm).costs()


def test_rank_shape(instance):
    state = instance.state
    levels = state.partition.levels
    histogram = rank_histogram(state.transfers)
    sizes = state.overlays.sizes()
    logger.info(f"K={levels} rank histogram {histogram}, overlay sizes {sizes}")
    assert sizes == sorted(sizes, reverse=True)
    if levels:
        assert histogram[0] < len(state.transfers)
        assert len(histogram) - 1 <= levels
