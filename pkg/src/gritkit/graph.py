"""Graph container (CSR), named graphs, seeded samplers and edge-list/JSON I/O."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from gritkit.rng import SplitMix64


class GraphError(ValueError):
    """Raised for malformed graph input (self-loops, bad tokens, unknown names)."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple graph stored as CSR with strictly sorted neighbor lists.

    ``edge_attrs`` maps ordered pairs ``(i, j)`` to feature rows; for undirected
    graphs both orientations are stored.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    directed: bool = False
    node_attrs: np.ndarray | None = None
    edge_attrs: Mapping[tuple[int, int], np.ndarray] | None = field(default=None)

    def __post_init__(self) -> None:
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        if indptr.shape != (self.n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise GraphError("inconsistent CSR arrays")
        for i in range(self.n):
            row = indices[indptr[i] : indptr[i + 1]]
            if len(row) and (row.min() < 0 or row.max() >= self.n):
                raise GraphError(f"neighbor id out of range in row {i}")
            if np.any(row == i):
                raise GraphError(f"self-loop at node {i}")
            if np.any(np.diff(row) <= 0):
                raise GraphError(f"neighbor list of node {i} is not strictly sorted")
        indptr.flags.writeable = False
        indices.flags.writeable = False
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        if self.node_attrs is not None:
            attrs = np.array(self.node_attrs, dtype=np.float64, ndmin=2)
            if attrs.shape[0] != self.n:
                raise GraphError("node_attrs must have one row per node")
            attrs.flags.writeable = False
            object.__setattr__(self, "node_attrs", attrs)
        if not self.directed:
            a = self.adjacency()
            if not np.array_equal(a, a.T):
                raise GraphError("undirected graph with asymmetric adjacency")

    # -- structure -----------------------------------------------------------

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        nnz = len(self.indices)
        return nnz if self.directed else nnz // 2

    def edges(self) -> Iterator[tuple[int, int]]:
        """Edges in CSR order; undirected graphs yield each edge once with u < v."""
        for u in range(self.n):
            for v in self.neighbors(u):
                v = int(v)
                if self.directed or u < v:
                    yield u, v

    def adjacency(self, dtype=np.int64) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=dtype)
        rows = np.repeat(np.arange(self.n), self.degrees())
        a[rows, self.indices] = 1
        return a

    def isolated_nodes(self) -> list[int]:
        """Nodes without neighbors; random-walk code gives them all-zero rows."""
        return [int(i) for i in np.flatnonzero(self.degrees() == 0)]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        k = np.searchsorted(row, v)
        return bool(k < len(row) and row[k] == v)

    def edge_attr_dim(self) -> int:
        if not self.edge_attrs:
            return 0
        return len(next(iter(self.edge_attrs.values())))

    def permuted(self, perm: Iterable[int]) -> "Graph":
        """Relabel so that old node ``i`` becomes ``perm[i]``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.n)):
            raise GraphError("perm is not a permutation of range(n)")
        node_attrs = None
        if self.node_attrs is not None:
            node_attrs = np.empty_like(self.node_attrs)
            node_attrs[perm] = self.node_attrs
        edge_attrs = None
        if self.edge_attrs is not None:
            edge_attrs = {(perm[i], perm[j]): v for (i, j), v in self.edge_attrs.items()}
        pairs = [(perm[u], perm[int(v)]) for u in range(self.n) for v in self.neighbors(u)]
        return from_pairs(self.n, pairs, directed=self.directed,
                          node_attrs=node_attrs, edge_attrs=edge_attrs)

    def is_bipartite(self) -> bool:
        return two_coloring(self) is not None

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "edges": [list(e) for e in self.edges()],
                           "directed": self.directed})

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.n}, edges={self.num_edges}, {kind})"


def from_pairs(n: int, pairs: Iterable[tuple[int, int]], directed: bool = False,
               node_attrs=None, edge_attrs=None) -> Graph:
    """Canonical CSR from (u, v) pairs: duplicates collapse, symmetric closure if undirected."""
    adj: list[set[int]] = [set() for _ in range(n)]
    for u, v in pairs:
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        adj[u].add(v)
        if not directed:
            adj[v].add(u)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(s) for s in adj])
    indices = np.array([v for s in adj for v in sorted(s)], dtype=np.int64)
    if edge_attrs is not None:
        edge_attrs = {k: np.asarray(v, dtype=np.float64) for k, v in edge_attrs.items()}
        if not directed:
            for (u, v), val in list(edge_attrs.items()):
                edge_attrs.setdefault((v, u), val)
    return Graph(n, indptr, indices, directed, node_attrs, edge_attrs)


def from_edge_list(text: str, directed: bool = False, n: int | None = None) -> Graph:
    """Parse ``u v`` lines; ``#`` starts a comment. ``n`` defaults to max id + 1."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 2 or not all(t.isdigit() for t in tokens):
            raise GraphError(f"line {lineno}: expected two nonnegative integers, got {raw!r}")
        u, v = int(tokens[0]), int(tokens[1])
        if u == v:
            raise GraphError(f"line {lineno}: self-loop {u} {v}")
        pairs.append((u, v))
    max_id = max((max(p) for p in pairs), default=-1)
    if n is None:
        n = max_id + 1
    elif max_id >= n:
        raise GraphError(f"node id {max_id} out of range for n={n}")
    return from_pairs(n, pairs, directed=directed)


def from_json(text: str) -> Graph:
    obj = json.loads(text)
    try:
        n = int(obj["n"])
        pairs = [(int(u), int(v)) for u, v in obj["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"bad JSON graph: {exc}") from None
    return from_pairs(n, pairs, directed=bool(obj.get("directed", False)))


def two_coloring(g: Graph) -> list[int] | None:
    """BFS 2-coloring of the underlying undirected graph, or None if an odd cycle exists."""
    color = [-1] * g.n
    for s in range(g.n):
        if color[s] >= 0:
            continue
        color[s] = 0
        queue = [s]
        for u in queue:
            for v in g.neighbors(u):
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(int(v))
                elif color[v] == color[u]:
                    return None
    return color


# -- named graphs -----------------------------------------------------------------

def _lcf(n: int, shifts: list[int], repeats: int) -> Graph:
    pairs = [(i, (i + 1) % n) for i in range(n)]
    seq = shifts * repeats
    pairs += [(i, (i + seq[i]) % n) for i in range(n)]
    return from_pairs(n, pairs)


def path_graph(n: int) -> Graph:
    return from_pairs(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("a simple cycle needs at least 3 nodes")
    return from_pairs(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return from_pairs(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def dodecahedron() -> Graph:
    # LCF [10,7,4,-4,-7,10,-4,7,-7,4]^2
    return _lcf(20, [10, 7, 4, -4, -7, 10, -4, 7, -7, 4], 2)


def desargues() -> Graph:
    # LCF [5,-5,9,-9]^5
    return _lcf(20, [5, -5, 9, -9], 5)


def two_triangles() -> Graph:
    return from_pairs(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])


_SIZED = {"path": path_graph, "cycle": cycle_graph, "complete": complete_graph}
_FIXED = {
    "dodecahedron": dodecahedron,
    "desargues": desargues,
    "two_triangles": two_triangles,
    "c6": lambda: cycle_graph(6),
}


def named_graph(name: str, n: int | None = None) -> Graph:
    """Look up a named graph.

    Accepts ``dodecahedron``, ``desargues``, ``two_triangles``, ``c6`` and the
    sized families ``path``, ``cycle``, ``complete`` either with an explicit ``n``
    or with the size fused into the name (``path3``, ``cycle:6``).
    """
    key = name.strip().lower().replace("-", "_")
    if key in _FIXED:
        return _FIXED[key]()
    m = re.fullmatch(r"(path|cycle|complete)(?:[:_(]?(\d+)\)?)?", key)
    if m is None:
        raise GraphError(f"unknown graph name {name!r}")
    family, size = m.group(1), m.group(2)
    if size is not None:
        n = int(size)
    if n is None or n < 1:
        raise GraphError(f"{family} needs a positive size")
    return _SIZED[family](n)


NAMED_CORPUS = ("path3", "path5", "cycle4", "cycle5", "c6", "complete3", "complete5",
                "two_triangles", "dodecahedron", "desargues")


# -- samplers -----------------------------------------------------------------------

def sample_sbm(sizes: list[int], p_in: float, p_out: float, seed: int) -> Graph:
    """Stochastic block model; pairs are visited as (i, j), i < j, in row order."""
    if not sizes or any(s <= 0 for s in sizes):
        raise GraphError("every block must contain at least one node")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise GraphError("probabilities must lie in [0, 1]")
    rng = SplitMix64(seed)
    block = [b for b, s in enumerate(sizes) for _ in range(s)]
    n = len(block)
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_in if block[i] == block[j] else p_out
            if rng.random() < p:
                pairs.append((i, j))
    return from_pairs(n, pairs)


def sample_molecular_like(n_nodes: int, seed: int, max_degree: int = 4) -> Graph:
    """Connected sparse graph: random spanning tree plus a few chords.

    The tree attaches node ``i`` to a uniformly chosen earlier node that still
    has spare valence; chords join random non-adjacent pairs with spare valence.
    The chord budget keeps ``|E| <= ceil(1.15 * n)``.
    """
    if n_nodes < 3:
        raise GraphError("need at least 3 nodes")
    rng = SplitMix64(seed)
    deg = [0] * n_nodes
    edges: set[tuple[int, int]] = set()
    for i in range(1, n_nodes):
        open_nodes = [j for j in range(i) if deg[j] < max_degree]
        j = open_nodes[rng.randbelow(len(open_nodes))]
        edges.add((j, i))
        deg[i] += 1
        deg[j] += 1
    budget = math.ceil(1.15 * n_nodes) - (n_nodes - 1)
    budget = min(budget, n_nodes * (n_nodes - 1) // 2 - (n_nodes - 1))
    n_chords = rng.randint(0, budget)
    attempts = 0
    while n_chords > 0 and attempts < 100 * n_nodes:
        attempts += 1
        u, v = rng.randbelow(n_nodes), rng.randbelow(n_nodes)
        if u == v:
            continue
        u, v = min(u, v), max(u, v)
        if (u, v) in edges or deg[u] >= max_degree or deg[v] >= max_degree:
            continue
        edges.add((u, v))
        deg[u] += 1
        deg[v] += 1
        n_chords -= 1
    return from_pairs(n_nodes, sorted(edges))


def molecular_corpus(count: int, seed: int, min_nodes: int = 20, max_nodes: int = 25) -> list[Graph]:
    """``count`` molecular-like graphs with node counts drawn from [min_nodes, max_nodes]."""
    rng = SplitMix64(seed)
    out = []
    for _ in range(count):
        n = rng.randint(min_nodes, max_nodes)
        out.append(sample_molecular_like(n, rng.next_u64()))
    return out


def sample_connected(n_nodes: int, p_extra: float, seed: int) -> Graph:
    """Random spanning tree (uniform earlier parent) plus each remaining pair with probability ``p_extra``."""
    if n_nodes < 1:
        raise GraphError("need at least one node")
    if not 0.0 <= p_extra <= 1.0:
        raise GraphError("p_extra must lie in [0, 1]")
    rng = SplitMix64(seed)
    edges = {(rng.randbelow(i), i) for i in range(1, n_nodes)}
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if (i, j) not in edges and rng.random() < p_extra:
                edges.add((i, j))
    return from_pairs(n_nodes, sorted(edges))
