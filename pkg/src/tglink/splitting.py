"""Community detection and node-disjoint transfer splits.

Louvain is implemented directly (local moves + coarsening) so the per-phase
modularity sequence can be logged and asserted monotone, and so node visit
order is owned by a seeded generator. The split assigns whole communities to
train/val/test groups greedily by node count; events crossing groups are
dropped and each sub-stream is re-indexed into its own dense node space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SplitError, ValidationError
from .events import EventStream
from .graphs import Graph

_GAIN_EPS = 1e-12


def modularity(graph: Graph, community_of: dict[int, int]) -> float:
    """Newman modularity of an assignment on a weighted undirected graph.

    Uses the convention A_uu = 2 * loop weight, degree k_u = sum_v A_uv.
    Kept independent of the Louvain internals so results can be re-checked.
    """
    nodes = graph.nodes()
    if not nodes:
        return 0.0
    missing = [u for u in nodes if u not in community_of]
    if missing:
        raise ValidationError(f"nodes without a community: {missing[:5]}")
    two_m = sum(graph.weighted_degree(u) for u in nodes)
    if two_m == 0:
        return 0.0
    internal: dict[int, float] = {}
    total: dict[int, float] = {}
    for u in nodes:
        c = community_of[u]
        k_u = graph.weighted_degree(u)
        total[c] = total.get(c, 0.0) + k_u
        for v in graph.neighbors(u):
            if community_of[v] == c:
                internal[c] = internal.get(c, 0.0) + graph.weight(u, v)
    q = 0.0
    for c in sorted(total):
        q += internal.get(c, 0.0) / two_m - (total[c] / two_m) ** 2
    return q


@dataclass
class CommunityAssignment:
    """Result of community detection plus the per-phase modularity log."""

    community_of: dict[int, int]
    modularity: float
    phase_modularity: tuple[float, ...] = ()

    @property
    def num_communities(self) -> int:
        return len(set(self.community_of.values()))

    def members(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for u in sorted(self.community_of):
            out.setdefault(self.community_of[u], []).append(u)
        return out


class _WorkGraph:
    """Louvain working graph: symmetric weights plus self-loop weights."""

    def __init__(self, n: int):
        self.n = n
        self.adj: list[dict[int, float]] = [dict() for _ in range(n)]
        self.loops = np.zeros(n)

    @classmethod
    def from_graph(cls, graph: Graph) -> tuple["_WorkGraph", list[int]]:
        nodes = graph.nodes()
        index = {u: i for i, u in enumerate(nodes)}
        wg = cls(len(nodes))
        for u, v, w in graph.edges():
            wg.adj[index[u]][index[v]] = w
            wg.adj[index[v]][index[u]] = w
        return wg, nodes

    def degree(self, i: int) -> float:
        return sum(self.adj[i].values()) + 2.0 * self.loops[i]

    @property
    def two_m(self) -> float:
        return float(sum(sum(a.values()) for a in self.adj) + 2.0 * self.loops.sum())


def _one_level(wg: _WorkGraph, rng: np.random.Generator) -> tuple[list[int], bool]:
    """Local-move phase: greedy modularity moves until none improves."""
    com = list(range(wg.n))
    k = np.array([wg.degree(i) for i in range(wg.n)])
    tot = k.copy()
    two_m = wg.two_m
    if two_m == 0:
        return com, False
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in rng.permutation(wg.n):
            i = int(i)
            old = com[i]
            link_w: dict[int, float] = {}
            for j, w in wg.adj[i].items():
                link_w[com[j]] = link_w.get(com[j], 0.0) + w
            tot[old] -= k[i]
            best_c, best_gain = old, link_w.get(old, 0.0) - tot[old] * k[i] / two_m
            for c in sorted(link_w):
                if c == old:
                    continue
                gain = link_w[c] - tot[c] * k[i] / two_m
                if gain > best_gain + _GAIN_EPS:
                    best_c, best_gain = c, gain
            tot[best_c] += k[i]
            com[i] = best_c
            if best_c != old:
                improved = True
                moved_any = True
    return com, moved_any


def _coarsen(wg: _WorkGraph, com: list[int]) -> tuple[_WorkGraph, dict[int, int]]:
    labels = sorted(set(com))
    remap = {c: i for i, c in enumerate(labels)}
    new = _WorkGraph(len(labels))
    for i in range(wg.n):
        ci = remap[com[i]]
        new.loops[ci] += wg.loops[i]
        for j, w in wg.adj[i].items():
            if j < i:
                continue
            cj = remap[com[j]]
            if ci == cj:
                new.loops[ci] += w
            else:
                new.adj[ci][cj] = new.adj[ci].get(cj, 0.0) + w
                new.adj[cj][ci] = new.adj[cj].get(ci, 0.0) + w
    return new, remap


def louvain(graph: Graph, rng: np.random.Generator) -> CommunityAssignment:
    """Louvain community detection, deterministic given the generator.

    Iterates local moves and coarsening until no move improves modularity.
    The reported modularity is recomputed on the input graph and the phase
    sequence is asserted non-decreasing.
    """
    if graph.num_nodes == 0:
        raise ValidationError("louvain requires at least one node")
    wg, nodes = _WorkGraph.from_graph(graph)
    # assignment[i] = current supernode of original node i (by position)
    assignment = list(range(len(nodes)))
    phase_log: list[float] = []

    def induced() -> dict[int, int]:
        return {nodes[i]: assignment[i] for i in range(len(nodes))}

    q_prev = modularity(graph, induced())
    while True:
        com, moved = _one_level(wg, rng)
        if not moved:
            break
        wg, remap = _coarsen(wg, com)
        assignment = [remap[com[a]] for a in assignment]
        q = modularity(graph, induced())
        if q < q_prev - 1e-9:
            raise AssertionError(f"modularity decreased across phase: {q_prev} -> {q}")
        phase_log.append(q)
        if q - q_prev < _GAIN_EPS:
            break
        q_prev = q

    final = induced()
    labels = sorted(set(final.values()), key=lambda c: min(u for u in final if final[u] == c))
    remap = {c: i for i, c in enumerate(labels)}
    final = {u: remap[c] for u, c in sorted(final.items())}
    return CommunityAssignment(final, modularity(graph, final), tuple(phase_log))


GROUP_NAMES = ("train", "val", "test")


@dataclass
class TransferSplit:
    """Node-disjoint sub-streams plus the bookkeeping of how they were made.

    `val` is None in the two-group fallback used when only two communities
    exist. Node sets contain exactly the nodes retained in each sub-stream;
    `node_maps` give original-id -> sub-stream dense id.
    """

    train: EventStream
    val: EventStream | None
    test: EventStream
    node_sets: dict[str, frozenset[int]]
    node_maps: dict[str, dict[int, int]]
    group_of_community: dict[int, str]
    dropped_events: int
    balance: dict[str, object] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def stream(self, group: str) -> EventStream | None:
        return {"train": self.train, "val": self.val, "test": self.test}[group]


def _reindex(stream: EventStream, keep: np.ndarray) -> tuple[EventStream, dict[int, int]]:
    src = stream.src[keep]
    dst = stream.dst[keep]
    mapping: dict[int, int] = {}
    for a, b in zip(src, dst):
        for u in (int(a), int(b)):
            if u not in mapping:
                mapping[u] = len(mapping)
    labels = None
    if stream.node_labels is not None:
        labels = tuple(stream.node_labels[u] for u in sorted(mapping, key=mapping.get))
    else:
        labels = tuple(str(u) for u in sorted(mapping, key=mapping.get))
    sub = EventStream(
        np.array([mapping[int(u)] for u in src], np.int64),
        np.array([mapping[int(u)] for u in dst], np.int64),
        stream.timestamps[keep],
        stream.edge_feat[keep],
        len(mapping),
        labels,
    )
    return sub, mapping


def make_transfer_split(
    stream: EventStream,
    assignment: CommunityAssignment,
    balance_tolerance: float = 0.25,
    allow_two_way: bool = False,
) -> TransferSplit:
    """Assign communities to train/val/test greedily by node count.

    Each community goes whole to the group currently holding the fewest
    nodes (ties resolved train < val < test). Cross-group events are dropped.
    With exactly two communities the split fails unless `allow_two_way`, in
    which case only train and test are produced and `val` is None.
    """
    members = assignment.members()
    groups = list(GROUP_NAMES)
    if len(members) < 3:
        if len(members) == 2 and allow_two_way:
            groups = ["train", "test"]
        else:
            raise SplitError(
                f"need at least 3 communities to build a 3-way split, got {len(members)}"
                + ("" if allow_two_way else " (two-way fallback disabled)")
            )

    order = sorted(members, key=lambda c: (-len(members[c]), c))
    counts = {g: 0 for g in groups}
    group_of_community: dict[int, str] = {}
    node_group: dict[int, str] = {}
    for c in order:
        g = min(groups, key=lambda name: (counts[name], groups.index(name)))
        group_of_community[c] = g
        counts[g] += len(members[c])
        for u in members[c]:
            node_group[u] = g

    src_groups = np.array([node_group.get(int(u), "?") for u in stream.src])
    dst_groups = np.array([node_group.get(int(u), "?") for u in stream.dst])
    same = src_groups == dst_groups
    dropped = int(len(stream) - same.sum())

    subs: dict[str, EventStream] = {}
    maps: dict[str, dict[int, int]] = {}
    sets: dict[str, frozenset[int]] = {}
    for g in groups:
        keep = np.flatnonzero(same & (src_groups == g))
        if len(keep) == 0:
            raise SplitError(f"group {g!r} has no events")
        subs[g], maps[g] = _reindex(stream, keep)
        sets[g] = frozenset(maps[g])

    warnings: list[str] = []
    sizes = {g: len(sets[g]) for g in groups}
    ratio = max(sizes.values()) / max(1, min(sizes.values()))
    if ratio > 1.0 + balance_tolerance:
        warnings.append(
            f"node-count ratio {ratio:.3f} exceeds tolerance {1.0 + balance_tolerance:.3f};"
            " best-effort split retained"
        )
    balance = {
        "node_counts": sizes,
        "node_ratio": ratio,
        "time_intervals": {
            g: [subs[g].start_time, subs[g].end_time] for g in groups
        },
        "community_sizes": {int(c): len(members[c]) for c in sorted(members)},
    }
    return TransferSplit(
        train=subs["train"],
        val=subs.get("val"),
        test=subs["test"],
        node_sets=sets,
        node_maps=maps,
        group_of_community=group_of_community,
        dropped_events=dropped,
        balance=balance,
        warnings=tuple(warnings),
    )
