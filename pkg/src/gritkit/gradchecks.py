"""Finite-difference gradient checks for every tensor op and for a whole GRIT block."""

from __future__ import annotations

from typing import Callable

import numpy as np

from gritkit import tensor as T
from gritkit.encodings import rrwp
from gritkit.graph import Graph, sample_connected
from gritkit.grit_layer import (
    GraphState,
    GritLayerParams,
    attention_head,
    encode_state,
    grit_block,
    init_encoder,
    init_head,
    init_state,
)
from gritkit.rng import SplitMix64
from gritkit.tensor import GradcheckReport, Tensor, gradcheck

OPS_TOL = 1e-6
BLOCK_TOL = 1e-4


def _rand(rng: SplitMix64, shape, lo=-1.0, hi=1.0, away=0.0) -> Tensor:
    """Uniform entries; with ``away > 0`` magnitudes stay at least ``away`` from zero."""
    size = int(np.prod(shape))
    vals = []
    for _ in range(size):
        v = rng.uniform(lo, hi)
        if away and abs(v) < away:
            v = away if v >= 0 else -away
        vals.append(v)
    return Tensor(np.array(vals).reshape(shape), requires_grad=True)


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    # random projection so every output entry matters
    return T.sum_(out * Tensor(w.reshape(out.shape)))


def op_cases(seed: int = 0) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    rng = SplitMix64(seed)

    def proj(shape):
        return np.array([rng.uniform(-1, 1) for _ in range(int(np.prod(shape)))]).reshape(shape)

    cases = {}

    def unary(name, build, x):
        out_shape = build(x).shape
        w = proj(out_shape)
        cases[name] = (lambda: _weighted(build(x), w), [x])

    def binary(name, build, a, b):
        w = proj(build(a, b).shape)
        cases[name] = (lambda: _weighted(build(a, b), w), [a, b])

    binary("add", T.add, _rand(rng, (4, 3)), _rand(rng, (3,)))
    binary("sub", T.sub, _rand(rng, (4, 3)), _rand(rng, (1, 3)))
    binary("mul", T.mul, _rand(rng, (4, 3)), _rand(rng, (4, 3)))
    binary("div", lambda a, b: a / b, _rand(rng, (4, 3)), _rand(rng, (4, 3), 0.5, 2.0))
    binary("matmul", T.matmul, _rand(rng, (4, 3)), _rand(rng, (3, 5)))
    binary("matmul_batched", T.matmul, _rand(rng, (2, 3, 4)), _rand(rng, (2, 4, 2)))
    unary("neg", lambda x: -x, _rand(rng, (3, 3)))
    unary("pow_scalar", lambda x: T.pow_scalar(x, -0.5), _rand(rng, (3, 4), 0.5, 2.0))
    unary("exp", T.exp, _rand(rng, (3, 4)))
    unary("log", T.log, _rand(rng, (3, 4), 0.5, 2.0))
    unary("relu", T.relu, _rand(rng, (4, 4), away=0.1))
    unary("signed_sqrt", T.signed_sqrt, _rand(rng, (4, 4), away=0.1))
    scale = np.array([0.5, 1.5, -2.0, 3.0])
    unary("scale_rows", lambda x: T.scale_rows(x, scale), _rand(rng, (4, 3)))
    unary("transpose", T.transpose, _rand(rng, (2, 3, 4)))
    unary("reshape", lambda x: T.reshape(x, (6, 2)), _rand(rng, (3, 4)))
    idx = np.array([2, 0, 2, 1, 2])
    unary("gather_rows", lambda x: T.gather_rows(x, idx), _rand(rng, (3, 4)))
    binary("concat", lambda a, b: T.concat([a, b], axis=1), _rand(rng, (3, 2)), _rand(rng, (3, 4)))
    unary("sum_axis0", lambda x: T.sum_(x, axis=0), _rand(rng, (4, 3)))
    unary("mean_axis1", lambda x: T.mean(x, axis=1, keepdims=True), _rand(rng, (4, 3)))
    unary("softmax_rows", T.softmax_rows, _rand(rng, (4, 5), -2.0, 2.0))
    target = np.array([[rng.uniform(0, 1) for _ in range(4)] for _ in range(3)])
    x_l1 = Tensor(target + np.array([[0.3 if (i + j) % 2 else -0.3 for j in range(4)] for i in range(3)]),
                  requires_grad=True)
    cases["l1_loss"] = (lambda: T.l1_loss(x_l1, target), [x_l1])
    return cases


def check_ops(seed: int = 0, tol: float = OPS_TOL) -> dict[str, GradcheckReport]:
    return {name: gradcheck(f, inputs, tol=tol) for name, (f, inputs) in op_cases(seed).items()}


def block_fixture(seed: int = 0, n: int = 5, d: int = 8, n_heads: int = 2, K: int = 4):
    """A connected random graph, its encoded state and a freshly initialized block."""
    g: Graph = sample_connected(n, 0.3, seed)
    state = init_state(g, rrwp(g, K))
    enc = init_encoder(K, K, d, seed + 1)
    for t in enc.values():
        t.requires_grad = False
    state = encode_state(state, enc)
    params = GritLayerParams.init(d, n_heads, seed + 2)
    return g, state, params


def check_block(seed: int = 0, tol: float = BLOCK_TOL) -> GradcheckReport:
    """Gradcheck of a weighted sum of both block outputs w.r.t. every parameter."""
    _, state, params = block_fixture(seed)
    rng = SplitMix64(seed + 3)
    n, d = state.X.shape
    wx = np.array([rng.uniform(-1, 1) for _ in range(n * d)]).reshape(n, d)
    we = np.array([rng.uniform(-1, 1) for _ in range(n * n * d)]).reshape(n, n, d)
    x0 = Tensor(state.X.data.copy())
    e0 = Tensor(state.E.data.copy())

    def loss() -> Tensor:
        out = grit_block(params, GraphState(x0, e0, state.degrees), mode="train")
        return T.sum_(out.X * Tensor(wx)) + T.sum_(out.E * Tensor(we))

    return gradcheck(loss, params.parameters(), tol=tol)


def check_head(seed: int = 0, tol: float = BLOCK_TOL) -> GradcheckReport:
    """Single attention head; gradients also flow into the node and pair inputs."""
    rng = SplitMix64(seed)
    n, d, dh = 5, 4, 3
    hp = init_head(rng, d, d, dh)
    x = _rand(rng, (n, d))
    e = _rand(rng, (n, n, d))
    wx = np.array([rng.uniform(-1, 1) for _ in range(n * dh)]).reshape(n, dh)

    def loss() -> Tensor:
        x_hat, _, _ = attention_head(hp, x, e)
        return T.sum_(x_hat * Tensor(wx))

    return gradcheck(loss, [x, e, *hp.values()], tol=tol)
