"""Emoji co-occurrence graphs and Louvain community detection."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

from .corpus import Gender, UserAggregate
from .stats import MessageCounts, pmi

DEFAULT_K = 5
DEFAULT_RESOLUTION = 0.2
_EPS = 1e-12


@dataclass
class CooccurrenceGraph:
    """Undirected weighted graph; ``edges`` keys are ordered pairs ``(a, b)`` with ``a < b``."""

    nodes: list
    edges: dict = field(default_factory=dict)
    k: int = DEFAULT_K

    def neighbors(self) -> dict:
        adj: dict = {n: {} for n in self.nodes}
        for (a, b), w in self.edges.items():
            adj[a][b] = w
            adj[b][a] = w
        return adj


def build_cooccurrence_graph(users: Iterable[UserAggregate] | MessageCounts,
                             gender: Gender | None = None, k: int = DEFAULT_K) -> CooccurrenceGraph:
    """Connect each emoji to its ``k`` partners with the largest positive PMI.

    Selections are unioned into undirected edges weighted by PMI. Ties go to
    the smaller partner sequence. Emojis with no positive-PMI partner stay
    as isolated nodes.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = users if isinstance(users, MessageCounts) else MessageCounts.from_users(users, gender)
    nodes = sorted(counts.single)
    if len(nodes) < 2:
        raise ValueError("need at least two distinct emojis")
    partners: dict = {n: set() for n in nodes}
    for a, b in counts.pair:
        partners[a].add(b)
        partners[b].add(a)
    edges = {}
    for n in nodes:
        scored = []
        for p in partners[n]:
            w = pmi(counts, n, p)
            if w > 0 and math.isfinite(w):
                scored.append((-w, p))
        scored.sort()
        for neg_w, p in scored[:k]:
            key = (n, p) if n < p else (p, n)
            edges[key] = -neg_w
    return CooccurrenceGraph(nodes, edges, k)


@dataclass
class CommunityAssignment:
    communities: dict
    modularity: float
    resolution: float
    sweep_modularity: list = field(default_factory=list)

    @property
    def n_communities(self) -> int:
        return len(set(self.communities.values()))

    def groups(self) -> list[list]:
        out: dict[int, list] = {}
        for node, c in self.communities.items():
            out.setdefault(c, []).append(node)
        return [sorted(out[c]) for c in sorted(out)]


def modularity(adj: Mapping[Hashable, Mapping[Hashable, float]], communities: Mapping[Hashable, int],
               resolution: float = 1.0) -> float:
    """Q = (1/2m) sum_ij [A_ij - gamma k_i k_j / 2m] delta(c_i, c_j).

    ``adj`` is symmetric; a self-loop entry ``adj[i][i]`` is the matrix
    diagonal ``A_ii`` as stored.
    """
    degree = {i: sum(nb.values()) for i, nb in adj.items()}
    two_m = sum(degree.values())
    if two_m <= 0:
        return 0.0
    internal = 0.0
    for i, nb in adj.items():
        ci = communities[i]
        for j, w in nb.items():
            if communities[j] == ci:
                internal += w
    tot: dict = {}
    for i, d in degree.items():
        tot[communities[i]] = tot.get(communities[i], 0.0) + d
    return internal / two_m - resolution * sum(t * t for t in tot.values()) / (two_m * two_m)


def _one_level(adj: list[dict[int, float]], resolution: float, rng: random.Random,
               init: list[int] | None = None):
    """Local moving phase on an index graph. Returns (membership, moved?)."""
    n = len(adj)
    degree = [sum(nb.values()) for nb in adj]
    two_m = sum(degree)
    comm = list(range(n)) if init is None else list(init)
    tot = [0.0] * n
    size = [0] * n
    for i, c in enumerate(comm):
        tot[c] += degree[i]
        size[c] += 1
    empty = [c for c in range(n) if size[c] == 0]
    order = list(range(n))
    rng.shuffle(order)
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in order:
            ci = comm[i]
            ki = degree[i]
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + w
            tot[ci] -= ki
            size[ci] -= 1
            best_c = ci
            best_gain = links.get(ci, 0.0) - resolution * tot[ci] * ki / two_m
            for c in sorted(links):
                gain = links[c] - resolution * tot[c] * ki / two_m
                if gain > best_gain + _EPS:
                    best_c, best_gain = c, gain
            if size[ci] and empty and 0.0 > best_gain + _EPS:
                # isolating the node beats every neighbouring community
                best_c = empty.pop()
            tot[best_c] += ki
            size[best_c] += 1
            if best_c != ci:
                if size[ci] == 0:
                    empty.append(ci)
                comm[i] = best_c
                improved = moved_any = True
    return comm, moved_any


def _aggregate(adj: list[dict[int, float]], comm: list[int]):
    labels = {c: k for k, c in enumerate(sorted(set(comm)))}
    new = [dict() for _ in labels]
    for i, nb in enumerate(adj):
        ci = labels[comm[i]]
        for j, w in nb.items():
            cj = labels[comm[j]]
            new[ci][cj] = new[ci].get(cj, 0.0) + w
    return new, [labels[c] for c in comm]


DEFAULT_RESTARTS = 8


def _run(adj, adj_map, nodes, resolution: float, rng: random.Random):
    """One Louvain pass with refinement; returns (membership, modularity after each level)."""
    membership = list(range(len(nodes)))  # original node -> current super-node
    sweeps = [modularity(adj_map, dict(zip(nodes, membership)), resolution)]

    def record():
        q = modularity(adj_map, dict(zip(nodes, membership)), resolution)
        if q < sweeps[-1] - 1e-9:
            raise AssertionError(f"modularity decreased: {sweeps[-1]} -> {q}")
        sweeps.append(q)

    while True:
        level_adj, membership = _aggregate(adj, membership)
        while True:
            comm, moved = _one_level(level_adj, resolution, rng)
            if not moved:
                break
            level_adj, relabel = _aggregate(level_adj, comm)
            membership = [relabel[m] for m in membership]
            record()
        # refinement: single-node moves on the original graph from the coarse partition
        comm, moved = _one_level(adj, resolution, rng, init=membership)
        if not moved:
            break
        membership = comm
        record()
    return membership, sweeps


def louvain(graph: CooccurrenceGraph | Mapping, resolution: float = 1.0, seed: int = 0,
            restarts: int = DEFAULT_RESTARTS) -> CommunityAssignment:
    """Louvain modularity optimization with resolution ``gamma``.

    Accepts a :class:`CooccurrenceGraph` or a symmetric adjacency mapping.
    Each of ``restarts`` runs visits nodes in an order shuffled by a stream
    seeded with ``seed``; the partition with the highest modularity is kept
    (earliest run on ties), so the result is deterministic for a given graph
    and seed. Within a run, modularity is recorded after every level and
    never decreases.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if isinstance(graph, CooccurrenceGraph):
        adj_map = graph.neighbors()
    else:
        adj_map = {n: dict(nb) for n, nb in graph.items()}
    nodes = sorted(adj_map)
    if not nodes:
        raise ValueError("graph has no nodes")
    for nb in adj_map.values():
        if any(w <= 0 for w in nb.values()):
            raise ValueError("edge weights must be positive")
    index = {n: i for i, n in enumerate(nodes)}
    adj = [{index[j]: w for j, w in adj_map[n].items()} for n in nodes]

    if sum(sum(nb.values()) for nb in adj) <= 0:
        return CommunityAssignment({n: i for i, n in enumerate(nodes)}, 0.0, resolution, [0.0])
    rng = random.Random(seed)
    best = None
    for _ in range(restarts):
        membership, sweeps = _run(adj, adj_map, nodes, resolution, rng)
        if best is None or sweeps[-1] > best[1][-1] + _EPS:
            best = (membership, sweeps)
    membership, sweeps = best

    # contiguous ids in order of first appearance over sorted nodes
    ids: dict[int, int] = {}
    communities = {}
    for n, m in zip(nodes, membership):
        communities[n] = ids.setdefault(m, len(ids))
    return CommunityAssignment(communities, sweeps[-1], resolution, sweeps)
