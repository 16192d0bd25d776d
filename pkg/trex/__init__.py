# -*- coding: utf-8 -*-
import logging

# Setup logger
logging.basicConfig(level=logging.INFO)

# Limits of the data layout
MAX_ROUNDS = 16
MAX_LEVELS = 16
MAX_RANK = 255
MAX_TRIP_EVENTS = 254
MAX_PERIOD_DAYS = 2
FOOTPATH_CLOSURE_CAP = 300
DAY = 24 * 60 * 60

# Binary snapshot format
SNAPSHOT_MAGIC = b"TRXS"
SNAPSHOT_VERSION = 1

# Query engines exposed to users
ALGORITHMS = ("tb", "trex", "trex-overlay")


class TrexError(Exception):
    """Base class of every error raised by the routing engine"""
