"""Decomposable graphs over the responses.

Vertices are 0-based.  Adjacency is held as one integer bitmask per
vertex, which keeps chordality checks and move enumeration cheap for the
small vertex counts this model uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betaln


class GraphError(ValueError):
    """Raised for non-decomposable input where a decomposable graph is required."""


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _pair_index(a: int, b: int, m: int) -> int:
    """Row-major index of pair (a, b), a < b, among the m(m-1)/2 pairs."""
    return a * (2 * m - a - 1) // 2 + (b - a - 1)


@lru_cache(maxsize=64)
def _pair_table(m: int) -> tuple:
    return tuple((a, b) for a in range(m) for b in range(a + 1, m))


class DecomposableGraph:
    """Undirected graph on ``m`` vertices, decomposable unless built with ``validate=False``."""

    __slots__ = ("m", "adj", "_key")

    def __init__(self, m: int, edges=(), *, validate: bool = True):
        self.m = int(m)
        adj = [0] * self.m
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b or not (0 <= a < self.m and 0 <= b < self.m):
                raise GraphError(f"invalid edge ({a}, {b}) for m={self.m}")
            adj[a] |= 1 << b
            adj[b] |= 1 << a
        self.adj = tuple(adj)
        self._key = None
        if validate and not is_decomposable(self):
            raise GraphError("graph is not decomposable")

    @classmethod
    def _from_adj(cls, adj) -> "DecomposableGraph":
        g = object.__new__(cls)
        g.m = len(adj)
        g.adj = tuple(adj)
        g._key = None
        return g

    @classmethod
    def from_adjacency(cls, A, validate: bool = True) -> "DecomposableGraph":
        A = np.asarray(A)
        a, b = np.nonzero(np.triu(A != 0, k=1))
        return cls(A.shape[0], zip(a.tolist(), b.tolist()), validate=validate)

    @classmethod
    def complete(cls, m: int) -> "DecomposableGraph":
        full = (1 << m) - 1
        return cls._from_adj([full ^ (1 << v) for v in range(m)])

    @classmethod
    def empty(cls, m: int) -> "DecomposableGraph":
        return cls._from_adj([0] * m)

    @property
    def key(self) -> int:
        """Bitmask over the pair list; a compact hashable identity."""
        if self._key is None:
            key = 0
            for a in range(self.m):
                for b in _bits(self.adj[a] >> (a + 1) << (a + 1)):
                    key |= 1 << _pair_index(a, b, self.m)
            self._key = key
        return self._key

    def __eq__(self, other):
        return isinstance(other, DecomposableGraph) and self.adj == other.adj

    def __hash__(self):
        return hash(self.adj)

    def __repr__(self):
        return f"DecomposableGraph(m={self.m}, edges={self.edges()})"

    def has_edge(self, a: int, b: int) -> bool:
        return bool(self.adj[a] >> b & 1)

    def edges(self) -> list:
        return [(a, b) for a in range(self.m) for b in _bits(self.adj[a]) if b > a]

    @property
    def n_edges(self) -> int:
        return sum(bin(x).count("1") for x in self.adj) // 2

    def neighbors(self, v: int) -> list:
        return list(_bits(self.adj[v]))

    def toggled(self, a: int, b: int) -> "DecomposableGraph":
        """Copy with edge (a, b) flipped; no decomposability check."""
        adj = list(self.adj)
        adj[a] ^= 1 << b
        adj[b] ^= 1 << a
        return DecomposableGraph._from_adj(adj)

    def to_matrix(self) -> np.ndarray:
        A = np.zeros((self.m, self.m), dtype=np.int8)
        for a, b in self.edges():
            A[a, b] = A[b, a] = 1
        return A

    def edge_vector(self) -> np.ndarray:
        """0/1 indicators over the m(m-1)/2 pairs in row-major upper-triangle order."""
        key = self.key
        npairs = self.m * (self.m - 1) // 2
        return np.array([key >> i & 1 for i in range(npairs)], dtype=np.int8)

    @classmethod
    def from_edge_vector(cls, vec, m: int, validate: bool = True) -> "DecomposableGraph":
        pairs = _pair_table(m)
        return cls(m, [pairs[i] for i in np.flatnonzero(np.asarray(vec))], validate=validate)


def _as_adj(graph) -> tuple:
    if isinstance(graph, DecomposableGraph):
        return graph.adj
    if isinstance(graph, tuple) and all(isinstance(x, int) for x in graph):
        return graph
    return DecomposableGraph.from_adjacency(graph, validate=False).adj


def mcs_order(graph) -> tuple[list, list]:
    """Maximum-cardinality search.

    Returns the visit order and, for each visited vertex, the bitmask of
    its neighbours visited before it.  Ties go to the lowest index.
    """
    adj = _as_adj(graph)
    m = len(adj)
    weight = [0] * m
    done = 0
    order, earlier = [], []
    for _ in range(m):
        best, best_w = -1, -1
        for v in range(m):
            if not done >> v & 1 and weight[v] > best_w:
                best, best_w = v, weight[v]
        order.append(best)
        earlier.append(adj[best] & done)
        done |= 1 << best
        for u in _bits(adj[best] & ~done):
            weight[u] += 1
    return order, earlier


def _is_clique(mask: int, adj) -> bool:
    for v in _bits(mask):
        if (mask & ~(1 << v)) & ~adj[v]:
            return False
    return True


def is_decomposable(graph) -> bool:
    """True iff the graph is chordal.

    An MCS order is a perfect elimination order (read backwards) exactly
    when the graph is chordal; each vertex's earlier neighbours must then
    form a clique.
    """
    adj = _as_adj(graph)
    _, earlier = mcs_order(adj)
    return all(_is_clique(mask, adj) for mask in earlier)


@dataclass(frozen=True)
class JunctionTree:
    """Cliques in running-intersection order with separators and tree parents.

    ``separators[0]`` is empty and ``parents[0]`` is ``None``.  A clique with
    an empty separator starts a new connected component and is attached to
    the previous clique so the result is a single tree.
    """

    cliques: tuple
    separators: tuple
    parents: tuple

    def edges(self) -> list:
        return [(k, p) for k, p in enumerate(self.parents) if p is not None]


def build_junction_tree(graph) -> JunctionTree:
    """Junction tree from the MCS clique sequence."""
    adj = _as_adj(graph)
    order, earlier = mcs_order(adj)
    if not all(_is_clique(mask, adj) for mask in earlier):
        raise GraphError("graph is not decomposable")
    cliques: list[int] = []
    seps: list[int] = []
    prev = -1
    for v, mask in zip(order, earlier):
        size = bin(mask).count("1")
        if size <= prev or not cliques:
            cliques.append(mask | 1 << v)
            seps.append(mask)
        else:
            cliques[-1] |= 1 << v
        prev = size
    parents = [None]
    for k in range(1, len(cliques)):
        sep = seps[k]
        host = next((i for i in range(k) if sep & ~cliques[i] == 0), None)
        if host is None:
            raise GraphError("running intersection violated")
        parents.append(host if sep else k - 1)

    def as_tuple(mask):
        return tuple(sorted(_bits(mask)))

    return JunctionTree(
        tuple(as_tuple(c) for c in cliques),
        tuple(as_tuple(s) for s in seps),
        tuple(parents),
    )


def perfect_parents(graph) -> tuple[list, list]:
    """Vertex order and parent sets for the clique-local reparametrisation.

    Each vertex's parents are its neighbours that precede it in an MCS
    order; for a decomposable graph every ``{v} | parents(v)`` is complete.
    """
    order, earlier = mcs_order(graph)
    return order, [tuple(sorted(_bits(mask))) for mask in earlier]


def _separates(adj, a: int, b: int, blocked: int) -> bool:
    """True iff every path from a to b passes through ``blocked``."""
    seen = blocked | 1 << a
    frontier = 1 << a
    target = 1 << b
    while frontier:
        nxt = 0
        for v in _bits(frontier):
            nxt |= adj[v]
        nxt &= ~seen
        if nxt & target:
            return False
        seen |= nxt
        frontier = nxt
    return True


def legal_toggles(graph) -> tuple:
    """All single-edge flips that keep the graph decomposable.

    Deleting edge (a, b) is legal iff the common neighbourhood of a and b
    is complete; adding (a, b) is legal iff the common neighbourhood
    separates a from b.
    """
    return _legal_toggles_cached(graph.adj)


@lru_cache(maxsize=200_000)
def _legal_toggles_cached(adj: tuple) -> tuple:
    m = len(adj)
    out = []
    for a in range(m):
        for b in range(a + 1, m):
            common = adj[a] & adj[b]
            if adj[a] >> b & 1:
                if _is_clique(common, adj):
                    out.append((a, b))
            elif _separates(adj, a, b, common):
                out.append((a, b))
    return tuple(out)


def propose_edge_move(graph: DecomposableGraph, rng):
    """Uniform proposal over legal single-edge flips.

    Returns ``(candidate, (a, b), log_proposal_ratio)`` where the ratio is
    log q(reverse) - log q(forward); ``None`` when no move exists (m < 2).
    """
    moves = legal_toggles(graph)
    if not moves:
        return None
    a, b = moves[int(rng.integers(len(moves)))]
    cand = graph.toggled(a, b)
    back = legal_toggles(cand)
    return cand, (a, b), math.log(len(moves)) - math.log(len(back))


def log_edge_set_prior(graph, a_eta: float, b_eta: float) -> float:
    """Edge indicators exchangeable Bernoulli(eta) with eta ~ Beta(a_eta, b_eta) integrated out."""
    if not (a_eta > 0 and b_eta > 0):
        raise ValueError("a_eta and b_eta must be positive")
    m = graph.m
    npairs = m * (m - 1) // 2
    k = graph.n_edges
    return float(betaln(a_eta + k, b_eta + npairs - k) - betaln(a_eta, b_eta))


def enumerate_decomposable(m: int) -> list:
    """Every decomposable labelled graph on ``m`` vertices (small m only)."""
    pairs = _pair_table(m)
    out = []
    for key in range(1 << len(pairs)):
        g = DecomposableGraph(m, [pairs[i] for i in range(len(pairs)) if key >> i & 1], validate=False)
        if is_decomposable(g):
            out.append(g)
    return out
