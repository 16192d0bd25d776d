# -*- coding: utf-8 -*-
import logging
import os
import random
from collections import defaultdict
from dataclasses import dataclass
from dataclasses import field
from typing import List

import networkx as nx

from trex import MAX_LEVELS
from trex import TrexError

logger = logging.getLogger()

FM_PASSES = 10
FM_PATIENCE = 64
GROWING_STARTS = 4


class PartitionError(TrexError):
    pass


@dataclass
class LayoutGraph:
    """Footpath components as weighted vertices, connections as weighted edges"""

    graph: nx.Graph
    stop_vertex: List[int]
    vertex_stops: List[List[int]]

    @property
    def vertex_count(self):
        return self.graph.number_of_nodes()


@dataclass
class NestedPartition:
    """K-level nested bipartition, the level-ℓ cell of a stop is its id >> ℓ"""

    levels: int
    imbalance: float
    stop_cells: List[int] = field(default_factory=list)

    def cell(self, stop, level):
        return self.stop_cells[stop] >> level

    def lcl(self, p, q):
        return lcl(self.stop_cells[p], self.stop_cells[q])


def lcl(c_p, c_q):
    """Lowest level on which two cell ids share a cell"""
    return (c_p ^ c_q).bit_length()


def lcl_test(rank, c_p, c_s, c_t):
    """Whether a transfer of `rank` at a stop in cell c_p is relaxed for a query
    from cell c_s to cell c_t"""
    return not (((c_p ^ c_s) >> rank) and ((c_p ^ c_t) >> rank))


def build_layout_graph(tt):
    stop_vertex = [None] * tt.stop_count
    vertex_stops = []
    for stop in range(tt.stop_count):
        if stop_vertex[stop] is not None:
            continue
        members = sorted(q for q, _ in tt.footpaths.neighbours(stop))
        for q in members:
            stop_vertex[q] = len(vertex_stops)
        vertex_stops.append(members)

    graph = nx.Graph()
    for vertex, members in enumerate(vertex_stops):
        graph.add_node(vertex, weight=len(members))

    for trip in range(tt.trip_count):
        events = tt.trip_events(trip)
        for e in events[:-1]:
            u = stop_vertex[tt.event_stop[e]]
            v = stop_vertex[tt.event_stop[e + 1]]
            if u == v:
                continue
            if graph.has_edge(u, v):
                graph.edges[u, v]["weight"] += 1
            else:
                graph.add_edge(u, v, weight=1)

    logger.info(
        f"Layout graph: {graph.number_of_nodes()} vertices, {graph.number_of_edges()} edges"
    )
    return LayoutGraph(graph=graph, stop_vertex=stop_vertex, vertex_stops=vertex_stops)


def balance_bound(total, epsilon):
    """Heaviest side weight accepted for a balanced bisection"""
    return (1 + epsilon) * total / 2


def cut_weight(graph, side):
    return sum(w for u, v, w in graph.edges(data="weight") if side[u] != side[v])


def _pseudo_peripheral(graph, start):
    vertex, eccentricity = start, -1
    for _ in range(8):
        distances = nx.single_source_shortest_path_length(graph, vertex)
        far = max(distances, key=lambda v: (distances[v], -v))
        if distances[far] <= eccentricity:
            break
        vertex, eccentricity = far, distances[far]
    return vertex


def _grow_region(graph, start, total, bound):
    weight_of = graph.nodes
    region = {start}
    weight = weight_of[start]["weight"]
    connection = defaultdict(int)
    skipped = set()
    for u, w in graph[start].items():
        connection[u] += w["weight"]

    while weight < total / 2:
        candidates = [v for v in connection if v not in region and v not in skipped]
        if not candidates:
            # Jump to another component
            rest = [v for v in sorted(graph.nodes) if v not in region and v not in skipped]
            if not rest:
                break
            vertex = rest[0]
        else:
            vertex = max(candidates, key=lambda v: (connection[v], -v))

        vertex_weight = weight_of[vertex]["weight"]
        if (bound is not None and weight + vertex_weight > bound) or (
            weight + vertex_weight >= total
        ):
            skipped.add(vertex)
            continue
        region.add(vertex)
        weight += vertex_weight
        for u, w in graph[vertex].items():
            connection[u] += w["weight"]

    return {v: 0 if v in region else 1 for v in graph.nodes}


def _quality(cut, weights, bound):
    overload = max(0, max(weights) - bound) if bound is not None else 0
    return (overload, cut, abs(weights[0] - weights[1]))


def _fm_pass(graph, side, bound):
    """One boundary Fiduccia-Mattheyses pass, rolled back to its best prefix"""
    weight_of = {v: graph.nodes[v]["weight"] for v in graph.nodes}
    weights = [0, 0]
    counts = [0, 0]
    for v, s in side.items():
        weights[s] += weight_of[v]
        counts[s] += 1

    gain = {}
    for v in graph.nodes:
        gain[v] = sum(
            data["weight"] if side[u] != side[v] else -data["weight"]
            for u, data in graph[v].items()
        )

    buckets = defaultdict(dict)
    for v in sorted(graph.nodes):
        if any(side[u] != side[v] for u in graph[v]):
            buckets[gain[v]][v] = None

    def _allowed(v):
        source = side[v]
        target = 1 - source
        if counts[source] == 1:
            return False
        if bound is None:
            return True
        moved = weights[target] + weight_of[v]
        return moved <= bound or (weights[source] > bound and moved < weights[source])

    cut = cut_weight(graph, side)
    best_key = _quality(cut, weights, bound)
    best_length = 0
    locked = set()
    moves = []

    while True:
        chosen = None
        for g in sorted(buckets, reverse=True):
            for v in buckets[g]:
                if _allowed(v):
                    chosen = v
                    break
            if chosen is not None:
                break
        if chosen is None:
            break

        del buckets[gain[chosen]][chosen]
        if not buckets[gain[chosen]]:
            del buckets[gain[chosen]]
        locked.add(chosen)
        source = side[chosen]
        cut -= gain[chosen]
        side[chosen] = 1 - source
        weights[source] -= weight_of[chosen]
        weights[1 - source] += weight_of[chosen]
        counts[source] -= 1
        counts[1 - source] += 1
        moves.append(chosen)

        for u, data in graph[chosen].items():
            if u in locked:
                continue
            if u in buckets.get(gain[u], {}):
                del buckets[gain[u]][u]
                if not buckets[gain[u]]:
                    del buckets[gain[u]]
            gain[u] += -2 * data["weight"] if side[u] == side[chosen] else 2 * data["weight"]
            if any(side[x] != side[u] for x in graph[u]):
                buckets[gain[u]][u] = None

        key = _quality(cut, weights, bound)
        if key < best_key:
            best_key, best_length = key, len(moves)
        elif len(moves) - best_length > FM_PATIENCE:
            break

    for v in reversed(moves[best_length:]):
        side[v] = 1 - side[v]
    return best_length > 0


def bisect(graph, epsilon=0.25, enforce_balance=True, seed=0):
    """Split a (sub)graph in two vertex sets

    Greedy region growing from a pseudo-peripheral vertex (plus a few seeded
    random starts), each followed by boundary FM refinement; the best result
    wins.

    Args:
        graph (nx.Graph): cell subgraph, vertex and edge attribute `weight`
        epsilon (float): allowed imbalance when enforce_balance is set
        enforce_balance (bool): bound the heavier side by balance_bound()
        seed (int): seed for the alternative start vertices

    Returns:
        tuple of set: both sides, the first one holding the smallest vertex id
    """
    nodes = sorted(graph.nodes)
    if len(nodes) <= 1:
        return set(nodes), set()

    total = sum(graph.nodes[v]["weight"] for v in nodes)
    bound = balance_bound(total, epsilon) if enforce_balance else None
    rng = random.Random(seed)

    starts = [_pseudo_peripheral(graph, nodes[0])]
    for vertex in rng.sample(nodes, min(GROWING_STARTS - 1, len(nodes))):
        if vertex not in starts:
            starts.append(vertex)

    best, best_key = None, None
    for start in starts:
        side = _grow_region(graph, start, total, bound)
        for _ in range(FM_PASSES):
            if not _fm_pass(graph, side, bound):
                break
        weights = [0, 0]
        for v, s in side.items():
            weights[s] += graph.nodes[v]["weight"]
        key = _quality(cut_weight(graph, side), weights, bound)
        if best_key is None or key < best_key:
            best, best_key = dict(side), key

    first = {v for v, s in best.items() if s == best[nodes[0]]}
    return first, set(nodes) - first


def _cell_seed(seed, depth, prefix):
    return random.Random(f"{seed}:{depth}:{prefix}").getrandbits(32)


def nested_bipartition(layout, levels, epsilon=0.25, seed=0):
    """Recursive top-down bisection, one cell id bit per level

    The topmost bisection ignores the balance constraint, every other one
    enforces `epsilon`.

    Returns:
        NestedPartition
    """
    if levels > MAX_LEVELS:
        raise PartitionError(f"At most {MAX_LEVELS} levels are supported, got {levels}")
    if levels < 0:
        raise PartitionError("Level count must not be negative")

    graph = layout.graph
    vertex_cells = [0] * layout.vertex_count
    pending = [(sorted(graph.nodes), 0, 0)]
    while pending:
        vertices, depth, prefix = pending.pop()
        if depth == levels:
            continue
        enforce = depth > 0
        first, second = bisect(
            graph.subgraph(vertices),
            epsilon=epsilon,
            enforce_balance=enforce,
            seed=_cell_seed(seed, depth, prefix),
        )

        if enforce and second:
            weights = [sum(graph.nodes[v]["weight"] for v in part) for part in (first, second)]
            bound = balance_bound(sum(weights), epsilon)
            if max(weights) > bound:
                logger.warning(
                    f"Cell {prefix} on depth {depth} cannot be balanced: {weights} > {bound}"
                )

        bit = 1 << (levels - 1 - depth)
        for v in second:
            vertex_cells[v] |= bit
        pending.append((sorted(second), depth + 1, prefix * 2 + 1))
        pending.append((sorted(first), depth + 1, prefix * 2))

    stop_cells = [vertex_cells[v] for v in layout.stop_vertex]
    partition = NestedPartition(levels=levels, imbalance=epsilon, stop_cells=stop_cells)
    if levels:
        logger.info(
            "Nested bipartition cut weights per level: {}".format(
                cut_weights(layout, partition)
            )
        )
    return partition


def cut_weights(layout, part):
    """Total weight of layout edges crossing level-ℓ cells, for ℓ = 0..K-1"""
    vertex_cells = [part.stop_cells[stops[0]] for stops in layout.vertex_stops]
    return [
        sum(
            w
            for u, v, w in layout.graph.edges(data="weight")
            if vertex_cells[u] >> level != vertex_cells[v] >> level
        )
        for level in range(part.levels)
    ]


def import_partition(tt, path, levels):
    """Read an external "stopId cellId" partition file

    Stop ids are dense integer ids or stop names.
    """
    if levels > MAX_LEVELS:
        raise PartitionError(f"At most {MAX_LEVELS} levels are supported, got {levels}")
    assert os.path.exists(path), f"Missing partition file {path}"
    names = {stop.name: stop.id for stop in tt.stops}
    cells = [None] * tt.stop_count
    with open(path) as partition_fd:
        for number, line in enumerate(partition_fd, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise PartitionError(f"Malformed line {number} in {path}")
            stop, cell = parts
            stop = int(stop) if stop.isdigit() and int(stop) < tt.stop_count else names.get(stop)
            if stop is None:
                raise PartitionError(f"Unknown stop on line {number} in {path}")
            cell = int(cell)
            if not 0 <= cell < (1 << levels):
                raise PartitionError(f"Cell id {cell} does not fit in {levels} bits")
            cells[stop] = cell

    missing = [stop for stop, cell in enumerate(cells) if cell is None]
    if missing:
        raise PartitionError(f"Partition file lacks {len(missing)} stops, first {missing[0]}")
    for p, q, _ in tt.footpaths.entries():
        if cells[p] != cells[q]:
            raise PartitionError(f"Footpath {p} -> {q} crosses a cell boundary")

    return NestedPartition(levels=levels, imbalance=float("nan"), stop_cells=cells)
