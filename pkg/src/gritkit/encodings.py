"""Random-walk encodings (RRWP, RWSE), shortest-path distances and k-hop targets.

Exact mode keeps every walk probability as a ``Fraction``. It is computed on
integers: with ``c = lcm(degrees)`` the scaled operator ``c * M`` is integral,
so ``M**k = (c * M)**k / c**k`` needs only big-integer sparse products.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

from gritkit.graph import Graph

NumericMode = Literal["float64", "exact_rational"]


@dataclass(frozen=True, eq=False)
class RrwpTensor:
    """Stack ``[I, M, ..., M^(K-1)]`` laid out as ``values[i, j, k]``.

    ``values`` is float64 in float mode and an object array of ``Fraction`` in
    exact mode.
    """

    n: int
    K: int
    values: np.ndarray
    numeric_mode: NumericMode = "float64"

    @property
    def exact(self) -> bool:
        return self.numeric_mode == "exact_rational"

    def slice(self, k: int) -> np.ndarray:
        return self.values[:, :, k]

    def pair(self, i: int, j: int) -> np.ndarray:
        return self.values[i, j, :]

    def to_float(self) -> "RrwpTensor":
        if not self.exact:
            return self
        return RrwpTensor(self.n, self.K, self.values.astype(np.float64), "float64")


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """All-pairs hop distances; unreachable pairs hold ``sentinel`` (= n)."""

    n: int
    dist: np.ndarray

    @property
    def sentinel(self) -> int:
        return self.n

    def reachable(self) -> np.ndarray:
        return self.dist != self.sentinel


def transition_matrix(g: Graph, exact: bool = False) -> np.ndarray:
    """``M = D^-1 A``; rows of isolated nodes are all zero."""
    deg = g.degrees()
    if exact:
        m = np.full((g.n, g.n), Fraction(0), dtype=object)
        for i in range(g.n):
            for j in g.neighbors(i):
                m[i, j] = Fraction(1, int(deg[i]))
        return m
    m = np.zeros((g.n, g.n))
    for i in range(g.n):
        if deg[i]:
            m[i, g.neighbors(i)] = 1.0 / deg[i]
    return m


def _propagate(g: Graph, dense: np.ndarray, row_weight: np.ndarray) -> np.ndarray:
    """One sparse-times-dense product: ``out[i] = w[i] * sum_{j in N(i)} dense[j]``.

    Costs ``O(|E| * n)``; works for float and object (big-int) arrays alike.
    """
    out = np.zeros_like(dense)
    for i in range(g.n):
        nbrs = g.neighbors(i)
        if len(nbrs):
            out[i] = dense[nbrs].sum(axis=0) * row_weight[i]
    return out


def rrwp(g: Graph, K: int, mode: NumericMode = "float64") -> RrwpTensor:
    """Relative random-walk probabilities, K slices starting from the identity."""
    if K < 1:
        raise ValueError("K must be at least 1")
    n = g.n
    deg = [int(d) for d in g.degrees()]
    if mode == "float64":
        weight = np.array([1.0 / d if d else 0.0 for d in deg])
        cur = np.eye(n)
        out = np.empty((n, n, K))
        out[:, :, 0] = cur
        for k in range(1, K):
            cur = _propagate(g, cur, weight)
            out[:, :, k] = cur
        return RrwpTensor(n, K, out, mode)
    if mode != "exact_rational":
        raise ValueError(f"unknown numeric mode {mode!r}")
    scale = math.lcm(*[d for d in deg if d]) if any(deg) else 1
    weight = np.array([scale // d if d else 0 for d in deg], dtype=object)
    cur = np.array([[int(i == j) for j in range(n)] for i in range(n)], dtype=object)
    out = np.empty((n, n, K), dtype=object)
    out[:, :, 0] = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    denom = 1
    for k in range(1, K):
        cur = _propagate(g, cur, weight)
        denom *= scale
        out[:, :, k] = [[Fraction(int(x), denom) for x in row] for row in cur]
    return RrwpTensor(n, K, out, mode)


def rwse(p: RrwpTensor) -> np.ndarray:
    """Diagonal of the RRWP stack as an n x K node feature matrix."""
    idx = np.arange(p.n)
    return p.values[idx, idx, :].copy()


def spd(g: Graph) -> SpdMatrix:
    """BFS from every node over the CSR arrays."""
    n = g.n
    dist = np.full((n, n), n, dtype=np.int64)
    for s in range(n):
        dist[s, s] = 0
        frontier = [s]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in g.neighbors(u):
                    if dist[s, v] == n:
                        dist[s, v] = d
                        nxt.append(int(v))
            frontier = nxt
    return SpdMatrix(n, dist)


def spd_truncated(g: Graph, K: int, far_value: int | None = None) -> np.ndarray:
    """Distances up to ``K - 1`` hops; anything farther (or unreachable) becomes ``far_value``.

    ``far_value`` defaults to ``K``; pass ``g.n`` for the variant that maps
    farther pairs to the node count.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    far = K if far_value is None else far_value
    d = spd(g).dist
    return np.where(d <= K - 1, d, far)


def khop_target(g: Graph, k: int, exact: bool = False) -> np.ndarray:
    """Binarize ``A^k`` and normalize each nonzero row to sum to one."""
    if k < 1:
        raise ValueError("k must be at least 1")
    a = g.adjacency().astype(bool)
    reach = a.copy()
    for _ in range(k - 1):
        reach = (reach.astype(np.int64) @ a.astype(np.int64)) > 0
    counts = reach.sum(axis=1)
    if exact:
        out = np.full((g.n, g.n), Fraction(0), dtype=object)
        for i, j in zip(*np.nonzero(reach)):
            out[i, j] = Fraction(1, int(counts[i]))
        return out
    out = np.zeros((g.n, g.n))
    nz = counts > 0
    out[nz] = reach[nz] / counts[nz, None]
    return out


def first_nonzero_step(p: RrwpTensor) -> np.ndarray:
    """``min{k : P[i, j, k] != 0}`` per pair, or ``-1`` when every slice is zero."""
    nz = p.values != 0
    has = nz.any(axis=2)
    return np.where(has, nz.argmax(axis=2), -1)


# -- matrix dumps -------------------------------------------------------------------

def format_entry(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return format(float(x), ".17g")


def matrix_to_csv(mat: np.ndarray) -> str:
    """Row-major CSV with a header row ``c0,c1,...``; floats at 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"c{j}" for j in range(mat.shape[1])])
    for row in mat:
        w.writerow([format_entry(x) for x in row])
    return buf.getvalue()


def matrix_to_json(mat: np.ndarray) -> str:
    rows = [[format_entry(x) if isinstance(x, Fraction) else float(x) for x in row] for row in mat]
    return json.dumps({"shape": list(mat.shape), "data": rows})
