# -*- coding: utf-8 -*-
import os

import pytest

from trex.customize import build_engine_state
from trex.partition import build_layout_graph
from trex.partition import import_partition
from trex.partition import nested_bipartition
from trex.refkit import SyntheticSpec
from trex.refkit import gen_synthetic
from trex.timetable import load_network
from trex.transfers import build_transfers

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), "fixtures")
NETWORKS_DIR = os.path.join(FIXTURES_DIR, "networks")
GTFS_DIR = os.path.join(FIXTURES_DIR, "gtfs", "toy")

# Small clustered instances shared by the engine suites: (spec fields, K, ε)
SYNTHETIC = [
    ({"stops": 24, "lines": 8, "trips_per_line": 3, "clusters": 2, "seed": 1}, 2, 0.25),
    ({"stops": 40, "lines": 14, "trips_per_line": 2, "clusters": 4, "seed": 2}, 4, 0.5),
    ({"stops": 30, "lines": 10, "trips_per_line": 1, "clusters": 3, "seed": 3}, 0, 0.25),
]


def pytest_addoption(parser):
    parser.addoption(
        "--slow", action="store_true", default=False, help="run the full-scale instances"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale instance, runs with --slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip = pytest.mark.skip(reason="full-scale instance, use --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def network(name):
    path = os.path.join(NETWORKS_DIR, f"{name}.yml")
    assert os.path.exists(path), f"Missing network fixture {name}"
    return load_network(path)


def trip(tt, name):
    """Trip id of a named fixture trip"""
    return tt.trip_names.index(name)


def stop(tt, name):
    return next(s.id for s in tt.stops if s.name == name)


def prepare(tt, levels, epsilon=0.25, seed=0, uturn=True, latest_exit=True, threads=1):
    ts = build_transfers(tt, uturn=uturn, latest_exit=latest_exit)
    part = nested_bipartition(build_layout_graph(tt), levels, epsilon=epsilon, seed=seed)
    return build_engine_state(tt, ts, part, threads=threads)


@pytest.fixture
def feeder():
    return network("feeder")


@pytest.fixture
def two_trip():
    return network("two_trip")


@pytest.fixture
def two_cities():
    """Two-city fixture customized on its hand-written one-level partition"""
    tt = network("two_cities")
    part = import_partition(tt, os.path.join(NETWORKS_DIR, "two_cities.part"), 1)
    return build_engine_state(tt, build_transfers(tt), part)


@pytest.fixture(scope="session", params=SYNTHETIC, ids=lambda p: f"seed{p[0]['seed']}-K{p[1]}")
def synthetic(request):
    """Customized engine state of a small synthetic instance"""
    fields, levels, epsilon = request.param
    return prepare(gen_synthetic(SyntheticSpec(fields)), levels, epsilon=epsilon)
