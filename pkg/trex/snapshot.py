# -*- coding: utf-8 -*-
"""Sectioned binary snapshot of the engine state

Layout, all little-endian:

    magic b"TRXS" | uint32 version | uint32 section count
    per section: 16-byte NUL padded name | uint64 payload length
                 | first 8 bytes of the payload's SHA-256 | payload

Payloads are sequences of length-prefixed (uint64) numpy arrays and UTF-8
strings. Sections map to pipeline stages: `timetable` to ingest,
`transfers` to transfers, `partition` to partition, and `ranks`,
`overlays`, `successors` to customize.
"""
import hashlib
import logging
import os
import struct
import tempfile

import numpy as np

from trex import SNAPSHOT_MAGIC
from trex import SNAPSHOT_VERSION
from trex import TrexError
from trex.customize import STAGES
from trex.customize import EngineState
from trex.customize import SuccessorTable
from trex.customize import TransferOverlays
from trex.partition import NestedPartition
from trex.timetable import FootpathSet
from trex.timetable import Stop
from trex.timetable import Timetable
from trex.transfers import TransferSet

logger = logging.getLogger()

HEADER = struct.Struct("<4sII")
SECTION = struct.Struct("<16sQ8s")
LENGTH = struct.Struct("<Q")
SECTION_STAGES = {
    "timetable": "ingest",
    "transfers": "transfers",
    "partition": "partition",
    "ranks": "customize",
    "overlays": "customize",
    "successors": "customize",
}


class SnapshotError(TrexError):
    pass


class BadMagicError(SnapshotError):
    pass


class VersionMismatchError(SnapshotError):
    pass


class ChecksumError(SnapshotError):
    pass


class MissingStageError(SnapshotError):
    def __init__(self, stage, path=None):
        self.stage = stage
        where = f" in {path}" if path else ""
        super().__init__(f"Missing stage {stage}{where}, run it first")


def checksum(payload):
    return hashlib.sha256(payload).digest()[:8]


class SectionWriter:
    def __init__(self):
        self.parts = []

    def array(self, values, dtype):
        array = np.ascontiguousarray(values, dtype=dtype)
        self.parts.append(LENGTH.pack(array.size))
        self.parts.append(array.tobytes())

    def integers(self, values):
        self.array(values, "<i8")

    def floats(self, values):
        self.array(values, "<f8")

    def texts(self, values):
        self.parts.append(LENGTH.pack(len(values)))
        for value in values:
            encoded = value.encode("utf-8")
            self.parts.append(LENGTH.pack(len(encoded)))
            self.parts.append(encoded)

    def payload(self):
        return b"".join(self.parts)


class SectionReader:
    def __init__(self, name, payload):
        self.name = name
        self.payload = payload
        self.offset = 0

    def _take(self, size):
        if self.offset + size > len(self.payload):
            raise ChecksumError(f"Section {self.name} is truncated")
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def _length(self):
        return LENGTH.unpack(self._take(LENGTH.size))[0]

    def array(self, dtype):
        dtype = np.dtype(dtype)
        count = self._length()
        return np.frombuffer(self._take(count * dtype.itemsize), dtype=dtype)

    def integers(self):
        return self.array("<i8").tolist()

    def floats(self):
        return self.array("<f8").tolist()

    def texts(self):
        return [self._take(self._length()).decode("utf-8") for _ in range(self._length())]

    def done(self):
        if self.offset != len(self.payload):
            trailing = len(self.payload) - self.offset
            raise SnapshotError(f"Section {self.name} has {trailing} trailing bytes")


def _flatten(groups):
    offsets, values = [0], []
    for group in groups:
        values.extend(group)
        offsets.append(len(values))
    return offsets, values


def _unflatten(offsets, values):
    return [values[start:end] for start, end in zip(offsets, offsets[1:])]


def _write_timetable(writer, tt):
    writer.texts([stop.name for stop in tt.stops])
    writer.floats([np.nan if stop.lat is None else stop.lat for stop in tt.stops])
    writer.floats([np.nan if stop.lon is None else stop.lon for stop in tt.stops])
    writer.integers(tt.footpaths.offsets)
    writer.integers(tt.footpaths.targets)
    writer.integers(tt.footpaths.durations)
    writer.integers([tt.period])
    offsets, values = _flatten(line.stops for line in tt.lines)
    writer.integers(offsets)
    writer.integers(values)
    writer.integers([len(line.trips) for line in tt.lines])
    writer.texts(tt.trip_names)
    writer.integers(tt.trip_offsets)
    writer.integers(tt.event_stop)
    writer.integers(tt.event_arr)
    writer.integers(tt.event_dep)


def _read_timetable(reader):
    names = reader.texts()
    lats, lons = reader.floats(), reader.floats()
    stops = [
        Stop(
            id=i,
            name=name,
            lat=None if np.isnan(lat) else lat,
            lon=None if np.isnan(lon) else lon,
        )
        for i, (name, lat, lon) in enumerate(zip(names, lats, lons))
    ]
    footpaths = FootpathSet(reader.integers(), reader.integers(), reader.integers())
    (period,) = reader.integers()
    line_stops = _unflatten(reader.integers(), reader.integers())
    return Timetable(
        stops,
        footpaths,
        period,
        line_stops,
        reader.integers(),
        reader.texts(),
        reader.integers(),
        reader.integers(),
        reader.integers(),
        reader.integers(),
    )


def _sections(state):
    """Yield (name, payload) for every component present in the state"""
    if state.timetable is not None:
        writer = SectionWriter()
        _write_timetable(writer, state.timetable)
        yield "timetable", writer.payload()

    if state.transfers is not None:
        writer = SectionWriter()
        writer.integers(state.transfers.offsets)
        writer.integers(state.transfers.targets)
        yield "transfers", writer.payload()

    if state.partition is not None:
        writer = SectionWriter()
        writer.integers([state.partition.levels])
        writer.floats([state.partition.imbalance])
        writer.integers(state.partition.stop_cells)
        yield "partition", writer.payload()

    if state.overlays is not None and state.successors is not None:
        writer = SectionWriter()
        writer.array(state.transfers.ranks, "<u1")
        yield "ranks", writer.payload()

        writer = SectionWriter()
        writer.integers([state.overlays.levels])
        for level in range(state.overlays.levels):
            writer.integers(state.overlays.offsets[level])
            writer.integers(state.overlays.targets[level])
            writer.integers(state.overlays.ids[level])
        yield "overlays", writer.payload()

        writer = SectionWriter()
        writer.integers(state.successors.array.shape)
        writer.array(state.successors.array.ravel(), "<u1")
        yield "successors", writer.payload()


def save(path, state):
    """Write every component of the state, replacing `path` atomically"""
    sections = list(_sections(state))
    directory = os.path.dirname(os.path.abspath(path))
    descriptor, temporary = tempfile.mkstemp(prefix=".snapshot-", dir=directory)
    try:
        with os.fdopen(descriptor, "wb") as snapshot_fd:
            snapshot_fd.write(HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, len(sections)))
            for name, payload in sections:
                snapshot_fd.write(
                    SECTION.pack(name.encode("ascii"), len(payload), checksum(payload))
                )
                snapshot_fd.write(payload)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
    logger.info(f"Saved snapshot {path}: {', '.join(name for name, _ in sections)}")


def read_sections(path):
    """Verified raw payloads by section name"""
    if not os.path.exists(path):
        raise SnapshotError(f"Missing snapshot {path}")
    with open(path, "rb") as snapshot_fd:
        data = snapshot_fd.read()

    if len(data) < HEADER.size:
        raise ChecksumError(f"Snapshot {path} is truncated")
    if data[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise BadMagicError(f"{path} is not a snapshot")
    _, version, count = HEADER.unpack_from(data)
    if version != SNAPSHOT_VERSION:
        raise VersionMismatchError(
            f"Snapshot {path} has format version {version}, expected {SNAPSHOT_VERSION}"
        )

    sections = {}
    offset = HEADER.size
    for _ in range(count):
        if offset + SECTION.size > len(data):
            raise ChecksumError(f"Snapshot {path} is truncated")
        raw_name, length, digest = SECTION.unpack_from(data, offset)
        offset += SECTION.size
        name = raw_name.rstrip(b"\0").decode("ascii")
        payload = data[offset : offset + length]
        offset += length
        if len(payload) != length or checksum(payload) != digest:
            raise ChecksumError(f"Section {name} of {path} fails its checksum")
        sections[name] = payload
    return sections


def stages(path):
    """Pipeline stages whose sections are all present"""
    names = set(read_sections(path))
    return [
        stage
        for stage in STAGES
        if all(name in names for name, owner in SECTION_STAGES.items() if owner == stage)
    ]


def load(path, required=()):
    """Load an engine state

    Args:
        path (str): snapshot file
        required (iterable): stages that must be present

    Raises:
        MissingStageError: naming the first required stage that is absent
    """
    sections = read_sections(path)
    present = {
        stage
        for stage in STAGES
        if all(name in sections for name, owner in SECTION_STAGES.items() if owner == stage)
    }
    for stage in STAGES:
        if stage in required and stage not in present:
            raise MissingStageError(stage, path)

    state = EngineState()
    if "timetable" in sections:
        reader = SectionReader("timetable", sections["timetable"])
        state.timetable = _read_timetable(reader)
        reader.done()

    if "transfers" in sections:
        reader = SectionReader("transfers", sections["transfers"])
        state.transfers = TransferSet(reader.integers(), reader.integers())
        reader.done()

    if "partition" in sections:
        reader = SectionReader("partition", sections["partition"])
        (levels,) = reader.integers()
        (imbalance,) = reader.floats()
        state.partition = NestedPartition(levels, imbalance, reader.integers())
        reader.done()

    if "customize" in present and state.transfers is not None:
        reader = SectionReader("ranks", sections["ranks"])
        state.transfers.ranks = reader.array("<u1").tolist()
        reader.done()

        reader = SectionReader("overlays", sections["overlays"])
        (levels,) = reader.integers()
        offsets, targets, ids = [], [], []
        for _ in range(levels):
            offsets.append(reader.integers())
            targets.append(reader.integers())
            ids.append(reader.integers())
        state.overlays = TransferOverlays(offsets, targets, ids)
        reader.done()

        reader = SectionReader("successors", sections["successors"])
        shape = reader.integers()
        state.successors = SuccessorTable(reader.array("<u1").reshape(shape))
        reader.done()

    logger.info(f"Loaded snapshot {path}: stages {', '.join(state.stages) or 'none'}")
    return state
