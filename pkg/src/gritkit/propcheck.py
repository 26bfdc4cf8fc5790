"""Exact evaluation of the constructions showing what an elementwise MLP on RRWP can express.

The constructions are compositions of simple continuous maps applied to each
pair vector ``P[i, j, :]``; they are evaluated directly (no MLP is trained):

* threshold ramp ``f1``: 0 for x <= 0, x / L on (0, L), 1 for x >= L
* running max ``f2``: ``f2(x)_t = max_{t' <= t} x_t'``
* count ``f3``: ``K - sum_{t=0}^{K-1} x_t`` -> truncated shortest-path distance

plus linear combinations of slices (propagation matrices) and the
threshold-then-combine map giving ``theta0 * I + theta1 * A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Literal, Sequence

import numpy as np

from gritkit.encodings import RrwpTensor, rrwp, spd_truncated, transition_matrix
from gritkit.graph import Graph, from_pairs
from gritkit.grit_layer import EPS_NORM

Preset = Literal["custom", "mean_agg", "sum_adjacency", "ppr", "heat"]


@dataclass(frozen=True)
class PropagationCoeffs:
    thetas: tuple
    preset: Preset = "custom"

    @property
    def K(self) -> int:
        return len(self.thetas)

    @property
    def exact(self) -> bool:
        return all(isinstance(t, (int, Fraction)) for t in self.thetas)

    @classmethod
    def custom(cls, thetas: Sequence) -> "PropagationCoeffs":
        if not thetas:
            raise ValueError("need at least one coefficient")
        return cls(tuple(thetas), "custom")

    @classmethod
    def mean_agg(cls, K: int = 2) -> "PropagationCoeffs":
        if K < 2:
            raise ValueError("mean aggregation needs K >= 2")
        return cls(tuple(Fraction(int(k == 1)) for k in range(K)), "mean_agg")

    @classmethod
    def ppr(cls, alpha: float, K: int) -> "PropagationCoeffs":
        """Truncated personalized PageRank, ``theta_k = alpha * (1 - alpha)**k``."""
        if not 0.0 < alpha < 1.0:
            raise ValueError("ppr needs alpha in (0, 1)")
        return cls(tuple(alpha * (1.0 - alpha) ** k for k in range(K)), "ppr")

    @classmethod
    def heat(cls, tau: float, K: int) -> "PropagationCoeffs":
        """Truncated heat kernel, ``theta_k = exp(-tau) * tau**k / k!``."""
        if tau <= 0.0:
            raise ValueError("heat kernel needs tau > 0")
        return cls(tuple(math.exp(-tau) * tau ** k / math.factorial(k) for k in range(K)), "heat")


# -- (a) shortest-path distance --------------------------------------------------------

def min_nonzero_entry(p: RrwpTensor) -> Fraction:
    """Smallest strictly positive entry of an exact RRWP tensor."""
    if not p.exact:
        raise ValueError("min_nonzero_entry needs an exact_rational tensor")
    positive = [x for x in p.values.reshape(-1) if x > 0]
    if not positive:
        raise ValueError("tensor has no positive entries")
    return min(positive)


def _check_L(p: RrwpTensor, L) -> None:
    if not L > 0:
        raise ValueError("L must be positive")
    vals = p.values.reshape(-1)
    if np.any((vals > 0) & (vals < L)):
        raise ValueError("L exceeds the smallest positive entry")


def threshold_ramp(x: np.ndarray, L) -> np.ndarray:
    """``f1``: 0 at or below 0, linear on (0, L), 1 from L upward."""
    out = np.where(x >= L, 1, np.where(x <= 0, 0, x / L))
    return out.astype(object) if x.dtype == object else out.astype(np.float64)


def running_max(x: np.ndarray) -> np.ndarray:
    """``f2`` along the last axis."""
    return np.maximum.accumulate(x, axis=-1)


def spd_from_rrwp_constructive(p: RrwpTensor, L, variant: Literal["corrected", "as_printed"]
                               = "corrected") -> np.ndarray:
    """Truncated SPD from RRWP via ``f3 . f2 . f1``.

    ``corrected`` counts from t = 0: ``K - sum_{t=0}^{K-1}``. ``as_printed``
    evaluates ``n - sum_{t=1}^{K-1}``, which matches only when K = n and then
    still reports 1 instead of 0 on the diagonal.
    """
    _check_L(p, L)
    steps = running_max(threshold_ramp(p.values, L))
    if variant == "corrected":
        out = p.K - steps.sum(axis=2)
    elif variant == "as_printed":
        out = p.n - steps[:, :, 1:].sum(axis=2)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return np.array([[int(v) if v == int(v) else float(v) for v in row] for row in out], dtype=object)


# -- (b) propagation matrices -------------------------------------------------------------

def propagation_from_rrwp(p: RrwpTensor, c: PropagationCoeffs) -> np.ndarray:
    """``sum_k theta_k P[:, :, k]`` (exact when both inputs are exact)."""
    if c.K != p.K:
        raise ValueError(f"{c.K} coefficients for a K={p.K} tensor")
    if p.exact and c.exact:
        out = np.full((p.n, p.n), Fraction(0), dtype=object)
        for k, theta in enumerate(c.thetas):
            out = out + p.values[:, :, k] * Fraction(theta)
        return out
    vals = p.to_float().values
    return sum(float(theta) * vals[:, :, k] for k, theta in enumerate(c.thetas))


def propagation_bruteforce(g: Graph, c: PropagationCoeffs) -> np.ndarray:
    """Independent oracle: dense matrix powers of ``D^-1 A``."""
    if c.exact:
        m = transition_matrix(g, exact=True)
        power = np.array([[Fraction(int(i == j)) for j in range(g.n)] for i in range(g.n)], dtype=object)
        out = np.full((g.n, g.n), Fraction(0), dtype=object)
        for theta in c.thetas:
            out = out + power * Fraction(theta)
            power = power.dot(m)
        return out
    m = transition_matrix(g)
    return sum(theta * np.linalg.matrix_power(m, k) for k, theta in enumerate(c.thetas))


# -- (c) theta0 I + theta1 A ----------------------------------------------------------------

def adjacency_from_rrwp(p: RrwpTensor, L, theta0=0, theta1=1) -> np.ndarray:
    """Threshold slice 1 at ``L`` to recover A, then combine with the identity slice."""
    if p.K < 2:
        raise ValueError("need K >= 2 to read the adjacency")
    _check_L(p, L)
    a = threshold_ramp(p.values[:, :, 1], L)
    return theta0 * p.values[:, :, 0] + theta1 * a


def graph_from_dense(a: np.ndarray) -> Graph:
    n = a.shape[0]
    return from_pairs(n, [(i, j) for i in range(n) for j in range(n) if a[i, j] != 0], directed=True)


# -- LayerNorm vs BatchNorm on degree-scaled rows ---------------------------------------------

def ln_pre_affine(x: np.ndarray) -> np.ndarray:
    """Per-row standardization with population std and no epsilon."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(axis=1, keepdims=True)
    if np.any(sd == 0):
        raise ValueError("constant row: layer-norm scale is undefined")
    return (x - x.mean(axis=1, keepdims=True)) / sd


def ln_pre_affine_exact(x) -> np.ndarray:
    """Exact LN as signed squares ``sign(c) * c**2 / var`` (the square root never enters)."""
    rows = []
    for row in x:
        row = [Fraction(v) for v in row]
        mu = sum(row) / len(row)
        var = sum((v - mu) ** 2 for v in row) / len(row)
        if var == 0:
            raise ValueError("constant row: layer-norm scale is undefined")
        rows.append([(1 if v > mu else -1 if v < mu else 0) * (v - mu) ** 2 / var for v in row])
    return np.array(rows, dtype=object)


def bn_pre_affine(x: np.ndarray, eps: float = EPS_NORM) -> np.ndarray:
    """Per-channel standardization over nodes (biased variance plus epsilon)."""
    x = np.asarray(x, dtype=np.float64)
    return (x - x.mean(axis=0)) / np.sqrt(x.var(axis=0) + eps)


@dataclass(frozen=True)
class NormFixture:
    x_mean: np.ndarray
    degrees: np.ndarray


# three nodes; with two nodes BN maps every channel to roughly (-1, 1) and hides the degrees
DEFAULT_FIXTURE = NormFixture(np.array([[1.0, 2.0], [3.0, 4.0], [6.0, 5.0]]), np.array([1, 10, 2]))


def layernorm_degree_witness(x_mean, degrees, scale_fn: Callable | None = None,
                             exact: bool = False) -> dict:
    """Compare LN / BN of ``diag(s) @ X_mean`` against LN / BN of ``X_mean``.

    ``s`` is the degree vector, or ``scale_fn(degree)`` when given; all ``s``
    must be positive. LN differences should vanish, BN differences need not.
    """
    x_mean = np.asarray(x_mean)
    degrees = np.asarray(degrees)
    s = [scale_fn(d) for d in degrees] if scale_fn is not None else list(degrees)
    if any(v <= 0 for v in s):
        raise ValueError("scales must be positive")
    if exact:
        xm = np.array([[Fraction(v) for v in row] for row in x_mean], dtype=object)
        xs = np.array([[Fraction(si) * v for v in row] for si, row in zip(s, xm)], dtype=object)
        ln_diff = max(abs(a - b) for a, b in zip(ln_pre_affine_exact(xs).reshape(-1),
                                                 ln_pre_affine_exact(xm).reshape(-1)))
        x_sum = xs.astype(np.float64)
    else:
        x_sum = np.asarray(s, dtype=np.float64)[:, None] * x_mean.astype(np.float64)
        ln_diff = float(np.abs(ln_pre_affine(x_sum) - ln_pre_affine(x_mean)).max())
    bn_diff = float(np.abs(bn_pre_affine(x_sum) - bn_pre_affine(x_mean)).max())
    return {"ln_max_abs_diff": ln_diff, "bn_max_abs_diff": bn_diff}


# -- JSON check reports ---------------------------------------------------------------------

def _report(check: str, graph: str, K, err, ok: bool, **extra) -> dict:
    out = {"check": check, "graph": graph, "K": K, "max_abs_error": err, "pass": bool(ok)}
    out.update(extra)
    return out


def check_spd(g: Graph, K: int, name: str = "graph") -> dict:
    p = rrwp(g, K, "exact_rational")
    L = min_nonzero_entry(p)
    got = spd_from_rrwp_constructive(p, L)
    want = spd_truncated(g, K)
    err = int(max(abs(int(a) - int(b)) for a, b in zip(got.reshape(-1), want.reshape(-1))))
    return _report("a", name, K, err, err == 0, L=str(L))


def check_propagation(g: Graph, coeffs: PropagationCoeffs, name: str = "graph",
                      tol: float = 1e-12) -> dict:
    mode = "exact_rational" if coeffs.exact else "float64"
    got = propagation_from_rrwp(rrwp(g, coeffs.K, mode), coeffs)
    want = propagation_bruteforce(g, coeffs)
    err = float(max((abs(a - b) for a, b in zip(got.reshape(-1), want.reshape(-1))), default=0))
    ok = err == 0 if coeffs.exact else err <= tol
    return _report("b", name, coeffs.K, err, ok, preset=coeffs.preset)


def check_adjacency(g: Graph, K: int = 2, theta0=0, theta1=1, name: str = "graph") -> dict:
    p = rrwp(g, K, "exact_rational")
    got = adjacency_from_rrwp(p, min_nonzero_entry(p), theta0, theta1)
    want = theta0 * np.eye(g.n, dtype=np.int64) + theta1 * g.adjacency()
    err = float(max(abs(a - b) for a, b in zip(got.reshape(-1), want.reshape(-1))))
    roundtrip = True
    if theta0 == 0 and theta1 == 1:
        back = graph_from_dense(got)
        roundtrip = (np.array_equal(back.indptr, g.indptr)
                     and np.array_equal(back.indices, g.indices))
    return _report("c", name, K, err, err == 0 and roundtrip, csr_roundtrip=roundtrip)


def check_layernorm(fixture: NormFixture = DEFAULT_FIXTURE, ln_tol: float = 1e-12,
                    bn_margin: float = 1e-3, name: str = "default") -> dict:
    w = layernorm_degree_witness(fixture.x_mean, fixture.degrees)
    ok = w["ln_max_abs_diff"] <= ln_tol and w["bn_max_abs_diff"] >= bn_margin
    return _report("layernorm", name, None, w["ln_max_abs_diff"], ok,
                   bn_max_abs_diff=w["bn_max_abs_diff"], bn_counterexample=w["bn_max_abs_diff"] >= bn_margin)
