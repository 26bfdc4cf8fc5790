import numpy as np
import pytest

from gritkit import tensor as T
from gritkit.gradchecks import OPS_TOL, check_head, check_ops
from gritkit.tensor import (
    AdamState,
    OpCounter,
    ShapeError,
    Tape,
    Tensor,
    adam_step,
    gradcheck,
    no_grad,
)


def grad_of(build, *xs):
    for x in xs:
        x.zero_grad()
    with Tape() as tape:
        loss = build()
        tape.backward(loss)
    return [x.grad for x in xs]


def test_sum_of_scaled_input():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (g,) = grad_of(lambda: T.sum_(x * 2.0), x)
    assert g.tolist() == [2, 2, 2]


def test_sum_of_squares():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    (g,) = grad_of(lambda: T.sum_(x * x), x)
    assert g.tolist() == [2, -4, 6]


def test_reused_node_accumulates():
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    (g,) = grad_of(lambda: T.sum_(x + x + x), x)
    assert g.tolist() == [[3, 3]]


def test_backward_needs_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
        with pytest.raises(ShapeError):
            tape.backward(y)


def test_loss_from_other_tape_rejected():
    x = Tensor([1.0], requires_grad=True)
    with Tape():
        y = T.sum_(x * 3.0)
    with Tape() as other:
        with pytest.raises(ValueError):
            other.backward(y)


def test_no_grad_skips_recording():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape, no_grad():
        y = x * 2.0
    assert not y.requires_grad and tape.nodes == []


def test_restricted_broadcasting():
    m = Tensor(np.ones((3, 2)))
    assert (m + Tensor([1.0, 2.0])).shape == (3, 2)
    assert (m + Tensor([[1.0, 2.0]])).shape == (3, 2)
    assert (m * 2.0).shape == (3, 2)
    with pytest.raises(ShapeError):
        m + Tensor(np.ones((3, 1)))
    with pytest.raises(ShapeError):
        m @ Tensor(np.ones((3, 2)))


def test_row_broadcast_gradient_sums_over_rows():
    m = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    b = Tensor([1.0, 1.0], requires_grad=True)
    gm, gb = grad_of(lambda: T.sum_(m + b), m, b)
    assert gb.tolist() == [3, 3] and gm.shape == (3, 2)


def test_signed_sqrt_values_and_clamped_grad():
    x = Tensor([-4.0, 0.0, 9.0], requires_grad=True)
    assert T.signed_sqrt(x).data.tolist() == [-2, 0, 3]
    (g,) = grad_of(lambda: T.sum_(T.signed_sqrt(x)), x)
    assert np.isfinite(g).all()
    assert g[1] == pytest.approx(0.5 / np.sqrt(T.EPS_RHO))


def test_softmax_rows():
    x = Tensor([[1000.0, 1000.0], [0.0, np.log(3.0)]])
    y = T.softmax_rows(x).data
    assert np.allclose(y, [[0.5, 0.5], [0.25, 0.75]])
    with pytest.raises(ShapeError):
        T.softmax_rows(Tensor(np.zeros((2, 0))))


def test_gather_rows_scatter_adds():
    x = Tensor(np.ones((3, 2)), requires_grad=True)
    (g,) = grad_of(lambda: T.sum_(T.gather_rows(x, [0, 0, 2])), x)
    assert g.tolist() == [[2, 2], [0, 0], [1, 1]]


def test_every_op_passes_gradcheck():
    reports = check_ops()
    failing = {k: r.max_rel_error for k, r in reports.items() if not r.passed}
    assert not failing
    assert all(r.tol == OPS_TOL for r in reports.values())


def test_attention_head_gradcheck():
    assert check_head().passed


def test_gradcheck_flags_wrong_gradient():
    x = Tensor([0.3, -0.7], requires_grad=True)

    def broken():
        # forward x**2, backward pretends d/dx = x
        return T.sum_(T._make(x.data ** 2, (x,), lambda g: (g * x.data,)))

    assert not gradcheck(broken, [x], tol=1e-4).passed


def test_relu_gradcheck_exact_away_from_kink():
    x = Tensor([0.5, -0.5, 1.5], requires_grad=True)
    assert gradcheck(lambda: T.sum_(T.relu(x)), [x], tol=1e-6).passed


def test_matmul_flops_scale_quadratically():
    def flops(n):
        a = Tensor(np.ones((n, 8)))
        with OpCounter() as c:
            T.softmax_rows(a @ a.T)
        return c.flops

    assert flops(32) / flops(16) == pytest.approx(4.0, rel=0.01)


# -- Adam ---------------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    p = {"w": Tensor([1.0, -2.0], requires_grad=True)}
    adam_step(p, {"w": np.zeros(2)}, AdamState(), lr=0.1)
    assert p["w"].data.tolist() == [1.0, -2.0]


def test_adam_first_step():
    p = {"w": Tensor([0.0], requires_grad=True)}
    adam_step(p, {"w": np.array([1.0])}, AdamState(), lr=0.01)
    # bias-corrected m = v = 1 at t = 1
    assert p["w"].data[0] == pytest.approx(-0.01 / (1 + 1e-8), abs=1e-15)


def test_adam_moves_against_constant_gradient():
    p = {"w": Tensor([0.0, 0.0], requires_grad=True)}
    state = AdamState()
    for _ in range(50):
        adam_step(p, {"w": np.array([3.0, -0.2])}, state, lr=0.01)
    assert p["w"].data[0] < 0 < p["w"].data[1]
    assert state.t == 50


def test_adam_missing_grad_and_shape_mismatch():
    p = {"w": Tensor([1.0], requires_grad=True)}
    adam_step(p, {}, AdamState())
    assert p["w"].data[0] == 1.0
    with pytest.raises(ShapeError):
        adam_step(p, {"w": np.zeros(2)}, AdamState())


def test_adam_minimizes_quadratic():
    w = Tensor([5.0, -3.0], requires_grad=True)
    state = AdamState()
    for _ in range(500):
        (g,) = grad_of(lambda: T.sum_(w * w), w)
        adam_step({"w": w}, {"w": g}, state, lr=0.05)
    assert np.abs(w.data).max() < 1e-2
