# -*- coding: utf-8 -*-
import logging
import os

import yaml

from trex import snapshot
from trex.config import EngineConfiguration
from trex.customize import EngineState
from trex.customize import build_engine_state
from trex.partition import build_layout_graph
from trex.partition import import_partition
from trex.partition import nested_bipartition
from trex.refkit import gen_synthetic
from trex.timetable import apply_buffer_time
from trex.timetable import load_gtfs
from trex.timetable import load_network
from trex.transfers import build_transfers

logger = logging.getLogger()


class Workflow(object):
    """Preprocessing pipeline, every stage reading and rewriting one snapshot"""

    def __init__(self):
        self.config = None
        self.completed = []

    def configure(self, local_path=None, **overrides):
        """Load the engine configuration from a local file, explicit overrides win"""

        config = {}
        if local_path is not None:
            assert os.path.exists(local_path), f"Missing configuration in {local_path}"
            with open(local_path) as config_fd:
                config = yaml.safe_load(config_fd) or {}
        assert isinstance(config, dict), "configuration must be a mapping"

        config.update({key: value for key, value in overrides.items() if value is not None})
        self.config = EngineConfiguration(config)
        return self.config

    def _save(self, path, state, stage):
        snapshot.save(path, state)
        self.completed.append(stage)
        return state

    def ingest(self, out, gtfs=None, network=None, day=None, days=1):
        """Build the timetable from a GTFS feed or a YAML network"""
        assert (gtfs is None) != (network is None), "Specify a GTFS feed XOR a network file"
        if gtfs is not None:
            assert day is not None, "GTFS ingestion needs a service day"
            tt = load_gtfs(gtfs, day, days, self.config.footpath_cap)
        else:
            tt = load_network(network, self.config.footpath_cap)
        tt = apply_buffer_time(tt, self.config.buffer)
        return self._save(out, EngineState(timetable=tt), "ingest")

    def generate(self, out, spec):
        """Synthetic timetable in place of an ingested one"""
        logger.info(f"Generating synthetic network: {spec.as_dict()}")
        tt = apply_buffer_time(gen_synthetic(spec), self.config.buffer)
        return self._save(out, EngineState(timetable=tt), "ingest")

    def transfers(self, path):
        state = snapshot.load(path, required=("ingest",))
        ts = build_transfers(
            state.timetable,
            uturn=self.config.uturn,
            latest_exit=self.config.latest_exit,
            workers=self.config.threads,
        )
        state = EngineState(timetable=state.timetable, transfers=ts, partition=state.partition)
        return self._save(path, state, "transfers")

    def partition(self, path, import_path=None):
        state = snapshot.load(path, required=("ingest",))
        if import_path is not None:
            part = import_partition(state.timetable, import_path, self.config.levels)
        else:
            part = nested_bipartition(
                build_layout_graph(state.timetable),
                self.config.levels,
                epsilon=self.config.imbalance,
                seed=self.config.seed,
            )
        if state.transfers is not None:
            state.transfers.ranks = [0] * len(state.transfers)
        state = EngineState(timetable=state.timetable, transfers=state.transfers, partition=part)
        return self._save(path, state, "partition")

    def customize(self, path):
        state = snapshot.load(path, required=("ingest", "transfers", "partition"))
        state.transfers.ranks = [0] * len(state.transfers)
        state = build_engine_state(
            state.timetable, state.transfers, state.partition, threads=self.config.threads
        )
        return self._save(path, state, "customize")

    def prepare(self, path, spec=None, gtfs=None, network=None, day=None, days=1):
        """Every preprocessing stage in order"""
        if spec is not None:
            self.generate(path, spec)
        else:
            self.ingest(path, gtfs=gtfs, network=network, day=day, days=days)
        self.transfers(path)
        self.partition(path)
        return self.customize(path)
