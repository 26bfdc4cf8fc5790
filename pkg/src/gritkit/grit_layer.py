"""GRIT attention block over node and node-pair representations.

Weights are stored input-major (``y = x @ W + b``), i.e. the transpose of the
usual ``W x`` notation. Per head, with head width ``d_head``:

    e_hat[i, j] = relu(signed_sqrt((x_i W_Q + x_j W_K) * (e_ij W_Ew)) + e_ij W_Eb)
    alpha[i, :] = softmax_j(e_hat[i, j] W_A)
    x_hat[i]    = sum_j alpha[i, j] * (x_j W_V + e_hat[i, j] W_Ev)

Heads are merged with per-head output maps ``W_O^h`` and ``W_Eo^h``; degrees
are injected as ``x * theta1 + log(1 + d) * x * theta2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from gritkit.encodings import RrwpTensor
from gritkit.graph import Graph
from gritkit.rng import SplitMix64
from gritkit.tensor import (
    Tensor,
    gather_rows,
    matmul,
    mean,
    pow_scalar,
    relu,
    reshape,
    scale_rows,
    signed_sqrt,
    softmax_rows,
    sum_,
    transpose,
)

EPS_NORM = 1e-5
BN_MOMENTUM = 0.1

Params = dict[str, Tensor]


@dataclass
class GraphState:
    X: Tensor                 # (n, d) node representations
    E: Tensor                 # (n, n, d) pair representations
    degrees: np.ndarray
    attention: list[Tensor] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]


def init_state(g: Graph, p: RrwpTensor) -> GraphState:
    """``x_i = [node attrs || P_ii]``, ``e_ij = [edge attrs or 0 || P_ij]``.

    Attribute blocks are omitted when the graph carries none.
    """
    if p.n != g.n:
        raise ValueError(f"RRWP computed for {p.n} nodes, graph has {g.n}")
    vals = np.asarray(p.to_float().values, dtype=np.float64)
    diag = vals[np.arange(g.n), np.arange(g.n), :]
    x = diag if g.node_attrs is None else np.concatenate([g.node_attrs, diag], axis=1)
    de = g.edge_attr_dim()
    if de:
        attrs = np.zeros((g.n, g.n, de))
        for (i, j), v in g.edge_attrs.items():
            attrs[i, j] = v
        e = np.concatenate([attrs, vals], axis=2)
    else:
        e = vals.copy()
    return GraphState(Tensor(x), Tensor(e), g.degrees().astype(np.int64))


# -- initialization -----------------------------------------------------------------

def glorot(rng: SplitMix64, fan_in: int, fan_out: int, name: str) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    vals = [rng.uniform(-limit, limit) for _ in range(fan_in * fan_out)]
    return Tensor(np.array(vals).reshape(fan_in, fan_out), requires_grad=True, name=name)


def zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape, name: str) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, name=name)


def init_head(rng: SplitMix64, d_node: int, d_pair: int, d_head: int, prefix: str = "") -> Params:
    p: Params = {}
    for w, fan_in in (("Q", d_node), ("K", d_node), ("Ew", d_pair), ("Eb", d_pair),
                      ("V", d_node), ("Ev", d_head)):
        p[f"{prefix}W_{w}"] = glorot(rng, fan_in, d_head, f"{prefix}W_{w}")
        p[f"{prefix}b_{w}"] = zeros((d_head,), f"{prefix}b_{w}")
    p[f"{prefix}W_A"] = glorot(rng, d_head, 1, f"{prefix}W_A")
    p[f"{prefix}b_A"] = zeros((1,), f"{prefix}b_A")
    return p


def head_view(params: Params, h: int) -> Params:
    prefix = f"head{h}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


@dataclass
class GritLayerParams:
    """All learnable weights of one block plus batch-norm running statistics."""

    d: int
    n_heads: int
    tensors: Params
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def d_head(self) -> int:
        return self.d // self.n_heads

    def head(self, h: int) -> Params:
        return head_view(self.tensors, h)

    def parameters(self) -> list[Tensor]:
        return [self.tensors[k] for k in sorted(self.tensors)]

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def to_json(self) -> str:
        return params_to_json(self.tensors)

    @classmethod
    def init(cls, d: int, n_heads: int, seed: int, ffn_mult: int = 2) -> "GritLayerParams":
        if d % n_heads:
            raise ValueError("d must be divisible by the number of heads")
        dh = d // n_heads
        rng = SplitMix64(seed)
        t: Params = {}
        for h in range(n_heads):
            t.update(init_head(rng, d, d, dh, prefix=f"head{h}."))
            t[f"W_O.{h}"] = glorot(rng, dh, d, f"W_O.{h}")
            t[f"W_Eo.{h}"] = glorot(rng, dh, d, f"W_Eo.{h}")
        t["b_O"] = zeros((d,), "b_O")
        t["b_Eo"] = zeros((d,), "b_Eo")
        t["deg.theta1"] = ones((d,), "deg.theta1")
        t["deg.theta2"] = zeros((d,), "deg.theta2")
        t["ffn.W1"] = glorot(rng, d, ffn_mult * d, "ffn.W1")
        t["ffn.b1"] = zeros((ffn_mult * d,), "ffn.b1")
        t["ffn.W2"] = glorot(rng, ffn_mult * d, d, "ffn.W2")
        t["ffn.b2"] = zeros((d,), "ffn.b2")
        buffers = {}
        for norm in ("bn_attn", "bn_ffn", "bn_edge"):
            t[f"{norm}.gamma"] = ones((d,), f"{norm}.gamma")
            t[f"{norm}.beta"] = zeros((d,), f"{norm}.beta")
            buffers[f"{norm}.running_mean"] = np.zeros(d)
            buffers[f"{norm}.running_var"] = np.ones(d)
        return cls(d, n_heads, t, buffers)


def init_encoder(d_node_in: int, d_pair_in: int, d: int, seed: int) -> Params:
    """Linear maps lifting raw ``[attrs || RRWP]`` features to width ``d``."""
    rng = SplitMix64(seed)
    return {
        "enc.W_x": glorot(rng, d_node_in, d, "enc.W_x"),
        "enc.b_x": zeros((d,), "enc.b_x"),
        "enc.W_e": glorot(rng, d_pair_in, d, "enc.W_e"),
        "enc.b_e": zeros((d,), "enc.b_e"),
    }


def encode_state(state: GraphState, enc: Params) -> GraphState:
    n = state.n
    x = state.X @ enc["enc.W_x"] + enc["enc.b_x"]
    e2 = reshape(state.E, (n * n, state.E.shape[2])) @ enc["enc.W_e"] + enc["enc.b_e"]
    return GraphState(x, reshape(e2, (n, n, e2.shape[1])), state.degrees)


# -- checkpoint format ----------------------------------------------------------------

def params_to_json(params: Params) -> str:
    obj = {k: {"shape": list(params[k].shape), "data": params[k].data.reshape(-1).tolist()}
           for k in sorted(params)}
    return json.dumps(obj, indent=1)


def params_from_json(text: str) -> Params:
    obj = json.loads(text)
    return {k: Tensor(np.array(v["data"], dtype=np.float64).reshape(v["shape"]),
                      requires_grad=True, name=k)
            for k, v in obj.items()}


# -- block components -----------------------------------------------------------------

def _pair_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.repeat(np.arange(n), n), np.tile(np.arange(n), n)


def attention_logits(hp: Params, X: Tensor, E: Tensor) -> tuple[Tensor, Tensor]:
    """Pair update ``e_hat`` as an (n*n, d_head) matrix and the (n, n) logits."""
    n = X.shape[0]
    if E.ndim != 3 or E.shape[:2] != (n, n):
        raise ValueError(f"pair tensor of shape {E.shape} does not match {n} nodes")
    e2 = reshape(E, (n * n, E.shape[2]))
    q = X @ hp["W_Q"] + hp["b_Q"]
    k = X @ hp["W_K"] + hp["b_K"]
    ii, jj = _pair_index(n)
    qk = gather_rows(q, ii) + gather_rows(k, jj)
    ew = e2 @ hp["W_Ew"] + hp["b_Ew"]
    eb = e2 @ hp["W_Eb"] + hp["b_Eb"]
    e_hat = relu(signed_sqrt(qk * ew) + eb)
    logits = reshape(e_hat @ hp["W_A"] + hp["b_A"], (n, n))
    return e_hat, logits


def attention_head(hp: Params, X: Tensor, E: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """One head: returns ``(x_hat (n, d_head), e_hat (n, n, d_head), alpha (n, n))``."""
    n = X.shape[0]
    e_hat, logits = attention_logits(hp, X, E)
    alpha = softmax_rows(logits)
    dh = e_hat.shape[1]
    v = X @ hp["W_V"] + hp["b_V"]
    ev = reshape(e_hat @ hp["W_Ev"] + hp["b_Ev"], (n, n, dh))
    pair_term = reshape(matmul(reshape(alpha, (n, 1, n)), ev), (n, dh))
    x_hat = alpha @ v + pair_term
    return x_hat, reshape(e_hat, (n, n, dh)), alpha


def multi_head_combine(heads: list[tuple[Tensor, Tensor]], params: Params) -> tuple[Tensor, Tensor]:
    """``x_out = sum_h x_hat^h W_O^h``, ``e_out = sum_h e_hat^h W_Eo^h`` (plus shared biases)."""
    if not heads:
        raise ValueError("need at least one head")
    n = heads[0][0].shape[0]
    x_out = None
    e_out = None
    for h, (x_hat, e_hat) in enumerate(heads):
        xo = x_hat @ params[f"W_O.{h}"]
        eo = reshape(e_hat, (n * n, e_hat.shape[2])) @ params[f"W_Eo.{h}"]
        x_out = xo if x_out is None else x_out + xo
        e_out = eo if e_out is None else e_out + eo
    if "b_O" in params:
        x_out = x_out + params["b_O"]
    if "b_Eo" in params:
        e_out = e_out + params["b_Eo"]
    return x_out, reshape(e_out, (n, n, e_out.shape[1]))


def degree_scale(x_out: Tensor, degrees, theta1, theta2) -> Tensor:
    """``x * theta1 + log(1 + d) * x * theta2`` with the natural log."""
    scale = np.log1p(np.asarray(degrees, dtype=np.float64))
    return x_out * theta1 + scale_rows(x_out, scale) * theta2


def batch_norm_nodes(X: Tensor, gamma, beta, mode: Literal["train", "eval"] = "train",
                     running: tuple[np.ndarray, np.ndarray] | None = None,
                     eps: float = EPS_NORM, momentum: float = BN_MOMENTUM) -> Tensor:
    """Normalize each channel over the rows of ``X`` (one graph's nodes or pairs).

    In train mode ``running`` (mean, var) arrays are updated in place; eval mode
    normalizes with them instead of batch statistics.
    """
    if mode == "train":
        if X.shape[0] < 2:
            raise ValueError("batch norm in train mode needs at least 2 rows")
        mu = mean(X, axis=0)
        xc = X - mu
        var = mean(xc * xc, axis=0)
        xn = xc * pow_scalar(var + eps, -0.5)
        if running is not None:
            rm, rv = running
            rm *= 1 - momentum
            rm += momentum * mu.data
            rv *= 1 - momentum
            rv += momentum * var.data * X.shape[0] / (X.shape[0] - 1)
    elif mode == "eval":
        if running is None:
            raise ValueError("eval mode needs running statistics")
        rm, rv = running
        xn = (X - rm) * (1.0 / np.sqrt(rv + eps))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return xn * gamma + beta


def layer_norm_nodes(X: Tensor, gamma=None, beta=None, eps: float = EPS_NORM) -> Tensor:
    """Normalize each row of ``X`` over its features (stats per node)."""
    xt = transpose(X)
    mu = mean(xt, axis=0)
    xc = xt - mu
    var = mean(xc * xc, axis=0)
    xn = transpose(xc * pow_scalar(var + eps, -0.5))
    if gamma is not None:
        xn = xn * gamma
    if beta is not None:
        xn = xn + beta
    return xn


def _bn(params: GritLayerParams, name: str, X: Tensor, mode: str) -> Tensor:
    running = None
    if f"{name}.running_mean" in params.buffers:
        running = (params.buffers[f"{name}.running_mean"], params.buffers[f"{name}.running_var"])
    return batch_norm_nodes(X, params.tensors[f"{name}.gamma"], params.tensors[f"{name}.beta"],
                            mode, running)


def ffn(X: Tensor, t: Params) -> Tensor:
    return relu(X @ t["ffn.W1"] + t["ffn.b1"]) @ t["ffn.W2"] + t["ffn.b2"]


def grit_block(params: GritLayerParams, state: GraphState, mode: str = "train") -> GraphState:
    """Attention -> head merge -> degree scaler -> residual + BN -> FFN -> residual + BN.

    Pairs: ``E <- BN(E + E_out)``, no FFN. Attention maps are kept on the output state.
    """
    n, d = state.X.shape
    if d != params.d or state.E.shape != (n, n, d):
        raise ValueError(f"state widths {state.X.shape}/{state.E.shape} do not match d={params.d}")
    t = params.tensors
    heads, alphas = [], []
    for h in range(params.n_heads):
        x_hat, e_hat, alpha = attention_head(params.head(h), state.X, state.E)
        heads.append((x_hat, e_hat))
        alphas.append(alpha)
    x_out, e_out = multi_head_combine(heads, t)
    x_out = degree_scale(x_out, state.degrees, t["deg.theta1"], t["deg.theta2"])
    x = _bn(params, "bn_attn", state.X + x_out, mode)
    x = _bn(params, "bn_ffn", x + ffn(x, t), mode)
    e = reshape(state.E, (n * n, d)) + reshape(e_out, (n * n, d))
    e = reshape(_bn(params, "bn_edge", e, mode), (n, n, d))
    return GraphState(x, e, state.degrees, alphas)


def pool(X: Tensor, kind: Literal["sum", "mean"] = "sum") -> Tensor:
    if X.shape[0] < 1:
        raise ValueError("cannot pool an empty graph")
    if kind == "sum":
        return sum_(X, axis=0)
    if kind == "mean":
        return mean(X, axis=0)
    raise ValueError(f"unknown pooling {kind!r}")
