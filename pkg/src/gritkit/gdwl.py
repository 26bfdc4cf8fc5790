"""Generalized-distance Weisfeiler-Leman (GD-WL) color refinement.

The update hashes the multiset ``{(d(v, u), color(u)) : u}``. Here the hash is
injective: each node signature is the sorted tuple of ``(distance-key, color)``
pairs, and distinct signatures are numbered in lexicographic order. Distances
enter as canonical strings (integers, or comma-joined reduced fractions for
RRWP vectors), so nothing is ever merged by accident.

Color ids are only meaningful inside one graph, so the graph-level signature
is the full round-by-round trace of signature multisets. Two traces agree iff
a joint refinement of both graphs with a shared palette produces identical
color histograms at every round.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from gritkit.encodings import format_entry, rrwp, spd
from gritkit.graph import Graph

DistanceKind = Literal["spd", "rrwp", "rrwp_full"]


@dataclass(frozen=True, eq=False)
class DistanceOracle:
    kind: DistanceKind
    n: int
    K: int | None
    keys: tuple[tuple[str, ...], ...]   # keys[v][u]: canonical distance string

    def __post_init__(self) -> None:
        if self.kind == "rrwp_full" and self.K != self.n:
            raise ValueError("rrwp_full requires K = n")


def distance_oracle(g: Graph, kind: str, K: int | None = None) -> DistanceOracle:
    kind = kind.replace("-", "_")
    if kind == "spd":
        d = spd(g).dist
        keys = tuple(tuple(str(int(x)) for x in row) for row in d)
        return DistanceOracle("spd", g.n, None, keys)
    if kind in ("rrwp", "rrwp_full"):
        if kind == "rrwp_full":
            K = g.n
        if K is None:
            raise ValueError("rrwp distance needs K")
        p = rrwp(g, K, "exact_rational").values
        keys = tuple(
            tuple(",".join(format_entry(x) for x in p[v, u]) for u in range(g.n))
            for v in range(g.n)
        )
        return DistanceOracle(kind, g.n, K, keys)
    raise ValueError(f"unknown distance kind {kind!r}")


@dataclass(frozen=True)
class ColorPartition:
    colors: tuple[int, ...]
    round: int

    @property
    def num_classes(self) -> int:
        return len(set(self.colors))

    def classes(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for v, c in enumerate(self.colors):
            out.setdefault(c, []).append(v)
        return [out[c] for c in sorted(out)]


@dataclass(frozen=True)
class Refinement:
    partition: ColorPartition
    history: tuple[ColorPartition, ...]
    trace: tuple[tuple[str, ...], ...]


def _dense_ids(labels: Sequence) -> tuple[int, ...]:
    order = {lab: i for i, lab in enumerate(sorted(set(labels)))}
    return tuple(order[lab] for lab in labels)


def refine(g: Graph, d: DistanceOracle, max_rounds: int | None = None,
           initial_colors: Sequence | None = None) -> Refinement:
    """Run GD-WL until the class count stops growing or ``max_rounds`` is hit."""
    if d.n != g.n:
        raise ValueError(f"distance oracle is for {d.n} nodes, graph has {g.n}")
    n = g.n
    max_rounds = n if max_rounds is None else max_rounds
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if initial_colors is None:
        colors = (0,) * n
    else:
        if len(initial_colors) != n:
            raise ValueError("initial_colors needs one entry per node")
        colors = _dense_ids([repr(c) for c in initial_colors])
    history = [ColorPartition(colors, 0)]
    trace = []
    for t in range(1, max_rounds + 1):
        sigs = [
            "|".join(sorted(f"{d.keys[v][u]}:{colors[u]}" for u in range(n)))
            for v in range(n)
        ]
        new = _dense_ids(sigs)
        trace.append(tuple(sorted(sigs)))
        stable = len(set(new)) == len(set(colors))
        colors = new
        history.append(ColorPartition(colors, t))
        if stable:
            break
    return Refinement(history[-1], tuple(history), tuple(trace))


def gdwl_refine(g: Graph, d: DistanceOracle, max_rounds: int | None = None,
                initial_colors: Sequence | None = None) -> ColorPartition:
    return refine(g, d, max_rounds, initial_colors).partition


def graph_color_signature(g: Graph, d: DistanceOracle, max_rounds: int | None = None):
    """Canonical, hash-free graph color: the tuple of per-round sorted node signatures."""
    return refine(g, d, max_rounds).trace


def compare(g1: Graph, g2: Graph, kind: str, K: int | None = None) -> dict:
    """Verdict record used by the CLI."""
    if g1.n != g2.n:
        return {"distinguishable": True, "rounds_g1": 0, "rounds_g2": 0,
                "classes_g1": None, "classes_g2": None, "reason": "node counts differ"}
    r1 = refine(g1, distance_oracle(g1, kind, K))
    r2 = refine(g2, distance_oracle(g2, kind, K))
    return {
        "distinguishable": r1.trace != r2.trace,
        "rounds_g1": r1.partition.round,
        "rounds_g2": r2.partition.round,
        "classes_g1": r1.partition.num_classes,
        "classes_g2": r2.partition.num_classes,
    }


def distinguishable(g1: Graph, g2: Graph, kind: str, K: int | None = None) -> bool:
    return compare(g1, g2, kind, K)["distinguishable"]


def refines(a: ColorPartition, b: ColorPartition) -> bool:
    """True iff every class of ``a`` sits inside a single class of ``b``."""
    if len(a.colors) != len(b.colors):
        raise ValueError("partitions over different node counts")
    image: dict[int, int] = {}
    for ca, cb in zip(a.colors, b.colors):
        if image.setdefault(ca, cb) != cb:
            return False
    return True


def partition_from_labels(labels: Sequence, round: int = 0) -> ColorPartition:
    return ColorPartition(_dense_ids([repr(x) for x in labels]), round)


def discrete_partition(n: int) -> ColorPartition:
    return ColorPartition(tuple(range(n)), 0)


def uniform_partition(n: int) -> ColorPartition:
    return ColorPartition((0,) * n, 0)


def color_histogram(p: ColorPartition) -> list[int]:
    return sorted(np.bincount(p.colors).tolist()) if p.colors else []
