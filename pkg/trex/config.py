# coding: utf-8
import os
import re

import yaml

from trex import FOOTPATH_CLOSURE_CAP
from trex import MAX_LEVELS

FIELDS = frozenset(
    (
        "buffer",
        "footpath_cap",
        "imbalance",
        "latest_exit",
        "levels",
        "seed",
        "threads",
        "uturn",
    )
)
DEFAULTS = {
    "buffer": 0,
    "footpath_cap": FOOTPATH_CLOSURE_CAP,
    "imbalance": 0.25,
    "latest_exit": True,
    "levels": 4,
    "seed": 0,
    "threads": 1,
    "uturn": True,
}


def parse_time(time, divisor=1):
    """Parse a human readable time like 1h30m or 30m10s

    Args:
        time (str): time as a string, plain integers are seconds
        divisor (int): seconds to divide by (1s default, 60 for result in minutes, etc.)

    Returns:
        float: time in seconds (or units determined by divisor)
    """
    if isinstance(time, (int, float)):
        return time / divisor
    result = 0
    got_anything = False
    while time:
        match = re.match(r"\s*(\d+)\s*([wdhms]?)\s*(.*)", time, re.IGNORECASE)
        assert (
            got_anything or match is not None
        ), "time should be a number followed by optional unit"
        if match is None:
            break
        if match.group(2):
            multiplier = {
                "w": 7 * 24 * 60 * 60,
                "d": 24 * 60 * 60,
                "h": 60 * 60,
                "m": 60,
                "s": 1,
            }[match.group(2).lower()]
        else:
            assert not match.group(3), "trailing data"
            assert not got_anything, "multipart time must specify all units"
            multiplier = 1
        got_anything = True
        result += int(match.group(1)) * multiplier
        time = match.group(3)
    return result / divisor


def parse_clock(clock):
    """Parse a HH:MM[:SS] clock into seconds since midnight, hours may exceed 24"""
    if isinstance(clock, int):
        return clock
    match = re.match(r"^\s*(\d+):([0-5]\d)(?::([0-5]\d))?\s*$", clock)
    assert match is not None, f"clock should look like HH:MM:SS, got {clock!r}"
    hours, minutes, seconds = match.groups()
    return int(hours) * 3600 + int(minutes) * 60 + int(seconds or 0)


class EngineConfiguration:
    """Preprocessing configuration of the routing engine

    Attributes:
        buffer (int): seconds subtracted from every departure
        footpath_cap (int): largest footpath component accepted by the closure
        imbalance (float): ε, allowed cell imbalance of every bisection
        latest_exit (bool): apply the latest-exit reduction to transfers
        levels (int): K, number of nested bipartition levels
        seed (int): partitioner seed
        threads (int): worker threads for transfers and customization
        uturn (bool): apply the U-turn reduction to transfers
    """

    def __init__(self, data=None):
        data = dict(DEFAULTS, **(data or {}))
        extra = list(set(data) - FIELDS)
        assert not extra, f"configuration has extra fields: {extra!r}"

        self.levels = int(data["levels"])
        assert 0 <= self.levels <= MAX_LEVELS, f"levels must be within 0..{MAX_LEVELS}"
        self.imbalance = float(data["imbalance"])
        assert 0 <= self.imbalance < 1, "imbalance must be within [0, 1)"
        self.seed = int(data["seed"])
        self.threads = int(data["threads"])
        assert self.threads >= 1, "threads must be positive"
        self.buffer = int(self.parse_time(data["buffer"]))
        assert self.buffer >= 0, "buffer must not be negative"
        self.footpath_cap = int(data["footpath_cap"])
        assert self.footpath_cap >= 1, "footpath_cap must be positive"
        self.uturn = bool(data["uturn"])
        self.latest_exit = bool(data["latest_exit"])

    def as_dict(self):
        return {field: getattr(self, field) for field in sorted(FIELDS)}

    @classmethod
    def from_file(cls, config_yml):
        assert os.path.exists(config_yml), f"Missing configuration in {config_yml}"
        with open(config_yml) as config_fd:
            data = yaml.safe_load(config_fd)
        assert isinstance(data, dict) or data is None, "configuration must be a mapping"
        return cls(data)

    parse_time = staticmethod(parse_time)
    parse_clock = staticmethod(parse_clock)
