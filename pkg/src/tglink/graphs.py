"""Static projections of event streams.

Two projections are used: the full weighted aggregate (edge weight = event
multiplicity) that community detection runs on, and unweighted simple graphs
over a trailing time window, from which structural node features are read.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ValidationError
from .events import EventStream


class Graph:
    """Undirected simple graph, dict-of-dict adjacency with float weights."""

    def __init__(self):
        self._adj: dict[int, dict[int, float]] = {}

    def add_node(self, u: int) -> None:
        self._adj.setdefault(u, {})

    def add_edge(self, u: int, v: int, weight: float = 1.0) -> None:
        if u == v:
            raise ValidationError(f"self-loop on node {u}")
        row_u = self._adj.setdefault(u, {})
        row_v = self._adj.setdefault(v, {})
        row_u[v] = row_u.get(v, 0.0) + weight
        row_v[u] = row_v.get(u, 0.0) + weight

    def has_node(self, u: int) -> bool:
        return u in self._adj

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj.get(u, {})

    @property
    def num_nodes(self) -> int:
        return len(self._adj)

    @property
    def num_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self._adj.values()) // 2

    def nodes(self) -> list[int]:
        return sorted(self._adj)

    def neighbors(self, u: int) -> list[int]:
        return sorted(self._adj.get(u, {}))

    def degree(self, u: int) -> int:
        return len(self._adj.get(u, {}))

    def weight(self, u: int, v: int) -> float:
        return self._adj.get(u, {}).get(v, 0.0)

    def weighted_degree(self, u: int) -> float:
        return sum(self._adj.get(u, {}).values())

    def edges(self) -> list[tuple[int, int, float]]:
        out = []
        for u in self.nodes():
            for v, w in sorted(self._adj[u].items()):
                if u < v:
                    out.append((u, v, w))
        return out

    @property
    def total_weight(self) -> float:
        return sum(w for _, _, w in self.edges())

    def edge_set(self) -> set[tuple[int, int]]:
        return {(u, v) for u, v, _ in self.edges()}


def aggregate_static(stream: EventStream) -> Graph:
    """Weighted aggregate of a whole stream; weight(u,v) = event count."""
    if len(stream) == 0:
        raise ValidationError("cannot aggregate an empty stream")
    g = Graph()
    for i in range(len(stream)):
        g.add_edge(int(stream.src[i]), int(stream.dst[i]), 1.0)
    return g


class WindowGraph(Graph):
    """Unweighted simple graph over events in a trailing window [lo, hi)."""

    def __init__(self, window_lo: float, window_hi: float):
        super().__init__()
        self.window_lo = window_lo
        self.window_hi = window_hi


def aggregate_window(
    stream: EventStream, t: float, w: float, train_span: float
) -> WindowGraph:
    """Simple graph of edges with timestamp in [t - w*train_span, t).

    `w` is the window fraction and `train_span` the reference span it scales;
    duplicate node pairs collapse to one edge. An empty window is fine and
    yields an empty graph.
    """
    if not (0 < w <= 1):
        raise ContractError(f"window fraction must be in (0, 1], got {w}")
    if train_span <= 0:
        raise ContractError(f"train_span must be positive, got {train_span}")
    lo = t - w * train_span
    g = WindowGraph(lo, t)
    if len(stream) == 0:
        return g
    ts = stream.timestamps
    first = int(np.searchsorted(ts, lo, side="left"))
    last = int(np.searchsorted(ts, t, side="left"))
    for i in range(first, last):
        u, v = int(stream.src[i]), int(stream.dst[i])
        if not g.has_edge(u, v):
            g.add_edge(u, v, 1.0)
    return g
