# -*- coding: utf-8 -*-
import os

import pytest

from conftest import GTFS_DIR
from conftest import NETWORKS_DIR
from trex import snapshot
from trex.config import DEFAULTS
from trex.refkit import SyntheticSpec
from trex.workflow import Workflow

YAML_CONF = """---
levels: 2
imbalance: 0.1
threads: 2
"""


def test_configure_local(tmp_path):
    workflow = Workflow()

    # Fails on missing file
    with pytest.raises(AssertionError, match="Missing configuration in nope.yml"):
        workflow.configure(local_path="nope.yml")

    # Read a local conf
    conf = tmp_path / "conf.yml"
    conf.write_text(YAML_CONF)
    assert workflow.configure(local_path=conf).as_dict() == dict(
        DEFAULTS, levels=2, imbalance=0.1, threads=2
    )

    # Explicit overrides win, unset ones are ignored
    assert workflow.configure(local_path=conf, levels=3, seed=None, uturn=False).as_dict() == dict(
        DEFAULTS, levels=3, imbalance=0.1, threads=2, uturn=False
    )

    # Defaults without any file
    assert workflow.configure().as_dict() == DEFAULTS


def test_configure_invalid(tmp_path):
    conf = tmp_path / "conf.yml"
    conf.write_text("---\nlevels: 2\nworkers: 4\n")
    with pytest.raises(AssertionError, match="extra fields"):
        Workflow().configure(local_path=conf)


def test_prepare_network(tmp_path):
    path = str(tmp_path / "feeder.trex")
    workflow = Workflow()
    workflow.configure(levels=2)
    state = workflow.prepare(path, network=os.path.join(NETWORKS_DIR, "feeder.yml"))
    assert workflow.completed == ["ingest", "transfers", "partition", "customize"]
    assert snapshot.stages(path) == ["ingest", "transfers", "partition", "customize"]
    assert state.partition.levels == 2
    assert len(state.transfers) == 2
    assert state.overlays.levels == 3


def test_import_partition(tmp_path):
    path = str(tmp_path / "two_cities.trex")
    workflow = Workflow()
    workflow.configure(levels=1)
    workflow.ingest(path, network=os.path.join(NETWORKS_DIR, "two_cities.yml"))
    workflow.transfers(path)
    workflow.partition(path, import_path=os.path.join(NETWORKS_DIR, "two_cities.part"))
    state = workflow.customize(path)
    assert sorted(state.transfers.ranks) == [0, 0, 0, 1, 1]

    # a new partition drops the ranks of the old one
    state = workflow.partition(path, import_path=os.path.join(NETWORKS_DIR, "two_cities.part"))
    assert state.stages == ["ingest", "transfers", "partition"]
    assert snapshot.load(path).transfers.ranks == [0] * 5


def test_generate(tmp_path):
    path = str(tmp_path / "synthetic.trex")
    workflow = Workflow()
    workflow.configure(levels=1)
    state = workflow.prepare(path, spec=SyntheticSpec(stops=12, lines=4, clusters=2))
    assert state.timetable.stop_count == 12
    assert state.stages == ["ingest", "transfers", "partition", "customize"]


def test_ingest_gtfs(tmp_path):
    path = str(tmp_path / "toy.trex")
    workflow = Workflow()
    workflow.configure(buffer=60)
    state = workflow.ingest(path, gtfs=GTFS_DIR, day="2024-03-04", days=2)
    assert state.timetable.trip_count == 4
    # arrival equals departure in the feed, the buffer is floored there
    assert state.timetable.event_dep == state.timetable.event_arr

    with pytest.raises(AssertionError, match="XOR"):
        workflow.ingest(path, gtfs=GTFS_DIR, network="feeder.yml")
    with pytest.raises(AssertionError, match="service day"):
        workflow.ingest(path, gtfs=GTFS_DIR)
