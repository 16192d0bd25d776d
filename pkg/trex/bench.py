# -*- coding: utf-8 -*-
import logging

import pandas as pd

from trex import TrexError
from trex.query import Query
from trex.query import Router

logger = logging.getLogger()

COLUMNS = [
    "query_id",
    "source",
    "target",
    "departure",
    "geo_rank",
    "algorithm",
    "pareto_size",
    "scanned_segments",
    "relaxed_transfers",
    "skipped_transfers",
    "rounds",
    "elapsed_us",
    "unpack_us",
]
# Smallest search space first
ORDERING = ("trex-overlay", "trex", "tb")


class BenchMismatchError(TrexError):
    pass


def run_bench(state, queries, algorithms, verify=True):
    """Run every query with every algorithm, one row per (query, algorithm)

    Args:
        state (EngineState): customized engine state
        queries (list): Query items, or (Query, geo rank) pairs
        algorithms (list): algorithm names
        verify (bool): abort on the first query whose fronts differ

    Returns:
        pandas.DataFrame: BenchRecord rows with the CSV columns
    """
    router = Router(state)
    records = []
    for query_id, item in enumerate(queries):
        query, rank = (item, None) if isinstance(item, Query) else item
        fronts = {}
        for algorithm in algorithms:
            result = router.query(query, algorithm)
            fronts[algorithm] = result.costs()
            metrics = result.metrics
            records.append(
                {
                    "query_id": query_id,
                    "source": query.source,
                    "target": query.target,
                    "departure": query.departure,
                    "geo_rank": rank,
                    "algorithm": algorithm,
                    "pareto_size": len(result.front),
                    "scanned_segments": metrics.scanned_segments,
                    "relaxed_transfers": metrics.relaxed_transfers,
                    "skipped_transfers": metrics.skipped_transfers,
                    "rounds": metrics.rounds,
                    "elapsed_us": round(metrics.elapsed_us, 1),
                    "unpack_us": round(metrics.unpack_us, 1),
                }
            )

        if verify and len({tuple(front) for front in fronts.values()}) > 1:
            raise BenchMismatchError(
                f"Query {query_id} {tuple(query)} has diverging fronts: {fronts}"
            )

    logger.info(f"Benchmarked {len(queries)} queries with {', '.join(algorithms)}")
    return pd.DataFrame(records, columns=COLUMNS)


def summarize(records):
    """Aggregate bench rows per algorithm

    Returns:
        dict: `algorithms` (mean/median table), `reduction` (tb mean over the
        algorithm's mean, per metric), `ordering` (share of queries whose
        relaxed transfers respect overlay ≤ basic ≤ tb) and `georank` (means
        per geo rank, None without geo ranks)
    """
    metrics = ["scanned_segments", "relaxed_transfers", "elapsed_us"]
    table = records.groupby("algorithm")[metrics].agg(["mean", "median"])

    reduction = {}
    means = records.groupby("algorithm")[metrics].mean()
    if "tb" in means.index:
        for algorithm in means.index:
            reduction[algorithm] = {
                metric: float(means.loc["tb", metric] / means.loc[algorithm, metric])
                if means.loc[algorithm, metric]
                else float("inf")
                for metric in metrics
            }

    ordering = None
    chain = [algorithm for algorithm in ORDERING if algorithm in means.index]
    if len(chain) > 1:
        relaxed = records.pivot(index="query_id", columns="algorithm", values="relaxed_transfers")
        respected = pd.Series(True, index=relaxed.index)
        for smaller, larger in zip(chain, chain[1:]):
            respected &= relaxed[smaller] <= relaxed[larger]
        ordering = float(respected.mean())

    georank = None
    if records["geo_rank"].notna().any():
        georank = records.groupby(["geo_rank", "algorithm"])[metrics].mean()

    return {"algorithms": table, "reduction": reduction, "ordering": ordering, "georank": georank}


def write_csv(records, path):
    records.to_csv(path, index=False, columns=COLUMNS)
    logger.info(f"Wrote {len(records)} bench rows to {path}")
