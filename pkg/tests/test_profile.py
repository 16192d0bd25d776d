# -*- coding: utf-8 -*-
import pytest

from conftest import prepare
from conftest import stop
from trex import ALGORITHMS
from trex.query import ProfileQuery
from trex.query import QueryError
from trex.query import Router
from trex.query import departure_candidates
from trex.refkit import oracle_profile


@pytest.fixture
def two_trip_state(two_trip):
    return prepare(two_trip, 1)


def test_departure_candidates(two_trip):
    a = stop(two_trip, "a")
    assert departure_candidates(two_trip, a, 0, 20) == [10, 0]
    assert departure_candidates(two_trip, a, 1, 10) == [10]
    assert departure_candidates(two_trip, stop(two_trip, "d"), 0, 200) == []


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_two_trip_profile(two_trip_state, algorithm):
    tt = two_trip_state.timetable
    query = ProfileQuery(stop(tt, "a"), stop(tt, "d"), 0, 20)
    result = Router(two_trip_state).profile(query, algorithm)
    assert result.costs() == [(0, 100, 1), (10, 50, 2)]
    assert oracle_profile(tt, query) == result.costs()
    for entry in result.entries:
        assert (entry.journey.arrival, entry.journey.trips) == (entry.arrival, entry.trips)
        entry.journey.validate(tt, two_trip_state.transfers)


def test_profile_repeatable(two_trip_state):
    tt = two_trip_state.timetable
    router = Router(two_trip_state)
    query = ProfileQuery(stop(tt, "a"), stop(tt, "d"), 0, 20)
    first = router.profile(query).costs()
    assert router.profile(query).costs() == first
    assert router.profile(query._replace(start=5)).costs() == [(10, 50, 2)]


def test_profile_empty_interval(two_trip_state):
    tt = two_trip_state.timetable
    router = Router(two_trip_state)
    with pytest.raises(QueryError, match="Empty departure interval"):
        router.profile(ProfileQuery(stop(tt, "a"), stop(tt, "d"), 20, 0))
    with pytest.raises(QueryError, match="Empty departure interval"):
        oracle_profile(tt, ProfileQuery(stop(tt, "a"), stop(tt, "d"), 20, 0))
    assert router.profile(ProfileQuery(stop(tt, "a"), stop(tt, "d"), 11, 11)).entries == []


def test_profile_unknown_stop(two_trip_state):
    with pytest.raises(QueryError, match="Unknown stop"):
        Router(two_trip_state).profile(ProfileQuery(0, 42, 0, 10))


def test_synthetic_profile(synthetic):
    tt = synthetic.timetable
    router = Router(synthetic)
    pairs = [(0, tt.stop_count - 1), (1, tt.stop_count // 2), (tt.stop_count - 2, 3)]
    for source, target in pairs:
        query = ProfileQuery(source, target, 6 * 3600, 12 * 3600)
        expected = oracle_profile(tt, query)
        for algorithm in ALGORITHMS:
            result = router.profile(query, algorithm)
            assert result.costs() == expected, f"{algorithm} on {query}"
            for entry in result.entries:
                assert query.start <= entry.departure <= query.end
                entry.journey.validate(tt, synthetic.transfers)
