from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from g2pfree import nn
from g2pfree.errors import AllMaskedRow, AllPad, NonFiniteValue, ShapeMismatch, TargetOutOfRange

from oracles import matmul_triple_loop, softmax_rows

rng = np.random.default_rng


# -- matmul -----------------------------------------------------------------

def test_matmul_examples():
    x = rng(0).normal(size=(3, 4)).astype(np.float32)
    assert nn.matmul(np.eye(3, dtype=np.float32), x).tobytes() == x.tobytes()
    a = np.array([[1, 2], [3, 4]], np.float32)
    b = np.array([[0], [1]], np.float32)
    assert nn.matmul(a, b).tolist() == [[2.0], [4.0]]
    with pytest.raises(ShapeMismatch):
        nn.matmul(a, np.ones((3, 1), np.float32))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matmul_matches_triple_loop(seed):
    gen = rng(seed)
    a = gen.normal(size=(4, 5)).astype(np.float32)
    b = gen.normal(size=(5, 3)).astype(np.float32)
    got = nn.matmul(a, b)
    assert got.dtype == np.float32
    want = matmul_triple_loop(a.tolist(), b.tolist()).astype(np.float32)
    # float32(exact) vs float32(float64 sum): at most one ulp apart
    assert np.all(np.abs(got - want) <= np.spacing(np.abs(want)))


def test_matmul_keeps_float64():
    a = rng(1).normal(size=(2, 2))
    assert nn.matmul(a, a).dtype == np.float64


# -- softmax ----------------------------------------------------------------

def test_softmax_examples():
    assert nn.softmax_lastdim(np.array([0.0, 0.0], np.float32)).tolist() == [0.5, 0.5]
    out = nn.softmax_lastdim(np.array([1000.0, 0.0], np.float32))
    assert out[0] == 1.0 and 0.0 <= out[1] < 1e-300 + 1e-30
    with pytest.raises(NonFiniteValue):
        nn.softmax_lastdim(np.array([np.nan, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_softmax_matches_oracle(seed, width):
    x = (rng(seed).normal(size=(3, width)) * 5).astype(np.float32)
    got = nn.softmax_lastdim(x)
    np.testing.assert_allclose(got, softmax_rows(x), atol=1e-6)
    np.testing.assert_allclose(got.astype(np.float64).sum(axis=-1), 1.0, atol=1e-6)


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=10), st.integers(-1000, 1000))
def test_softmax_shift_invariant_bitwise(row, c):
    x = np.array(row, np.float32)
    assert nn.softmax_lastdim(x + np.float32(c)).tobytes() == nn.softmax_lastdim(x).tobytes()


# -- rmsnorm ----------------------------------------------------------------

def test_rmsnorm_examples():
    ones = np.ones(2, np.float32)
    out, _ = nn.rmsnorm(np.array([1.0, -1.0], np.float32), ones)
    np.testing.assert_allclose(out, [1.0, -1.0], atol=1e-6)
    out, _ = nn.rmsnorm(np.zeros(2, np.float32), ones)
    assert out.tolist() == [0.0, 0.0]
    with pytest.raises(ShapeMismatch):
        nn.rmsnorm(np.zeros((2, 3)), np.ones(2))


def test_rmsnorm_matches_oracle():
    x = rng(2).normal(size=(4, 6)).astype(np.float32)
    g = rng(3).normal(size=6).astype(np.float32)
    got, _ = nn.rmsnorm(x, g)
    x64 = x.astype(np.float64)
    want = [[xi / math.sqrt(sum(v * v for v in row) / 6 + 1e-6) * gi for xi, gi in zip(row, g.astype(float))] for row in x64]
    np.testing.assert_allclose(got, want, atol=1e-6)


# -- attention --------------------------------------------------------------

def test_attention_single_key_returns_values():
    gen = rng(4)
    q = gen.normal(size=(2, 3, 4))
    k = gen.normal(size=(2, 1, 4))
    v = gen.normal(size=(2, 1, 4))
    out, _ = nn.attention(q, k, v, np.ones((3, 1), bool))
    np.testing.assert_allclose(out, np.broadcast_to(v, (2, 3, 4)), rtol=0, atol=1e-15)


def test_causal_mask_rows():
    m = nn.causal_mask(4)
    for i in range(4):
        assert m[i].tolist() == [j <= i for j in range(4)]


def test_attention_respects_causal_mask():
    gen = rng(5)
    q, k, v = (gen.normal(size=(1, 4, 3)) for _ in range(3))
    out, _ = nn.attention(q, k, v, nn.causal_mask(4))
    v2 = v.copy()
    v2[:, 3] += 100.0  # future key only visible to the last query
    out2, _ = nn.attention(q, k, v2, nn.causal_mask(4))
    np.testing.assert_array_equal(out[:, :3], out2[:, :3])
    assert not np.allclose(out[:, 3], out2[:, 3])


def test_attention_matches_composed_oracle():
    gen = rng(6)
    q = gen.normal(size=(2, 3, 8)).astype(np.float32)
    k = gen.normal(size=(2, 4, 8)).astype(np.float32)
    v = gen.normal(size=(2, 4, 8)).astype(np.float32)
    mask = np.array([[1, 1, 0, 1], [1, 0, 0, 0], [1, 1, 1, 1]], bool)
    got, _ = nn.attention(q, k, v, mask)
    scores = np.stack([matmul_triple_loop(q[h].tolist(), k[h].T.tolist()) for h in range(2)]) / math.sqrt(8)
    scores = np.where(mask, scores, -np.inf)
    probs = np.stack([softmax_rows(scores[h]) for h in range(2)])
    want = np.stack([matmul_triple_loop(probs[h].tolist(), v[h].tolist()) for h in range(2)])
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_attention_output_is_convex_combination():
    gen = rng(7)
    q, k, v = (gen.normal(size=(3, 5, 4)) for _ in range(3))
    out, _ = nn.attention(q, k, v, np.ones((5, 5), bool))
    assert np.all(out <= v.max(axis=1, keepdims=True) + 1e-12)
    assert np.all(out >= v.min(axis=1, keepdims=True) - 1e-12)


def test_attention_errors():
    q = np.zeros((1, 2, 4))
    with pytest.raises(AllMaskedRow):
        nn.attention(q, q, q, np.array([[1, 0], [0, 0]], bool))
    with pytest.raises(ShapeMismatch):
        nn.attention(q, np.zeros((1, 2, 3)), np.zeros((1, 2, 3)), np.ones((2, 2), bool))
    with pytest.raises(ShapeMismatch):
        nn.attention(q, q, q, np.ones((2, 3), bool))


# -- cross-entropy ----------------------------------------------------------

def test_cross_entropy_examples():
    logits = np.zeros((3, 5))
    logits[np.arange(3), [1, 2, 3]] = 20.0
    loss, _ = nn.cross_entropy(logits, [1, 2, 3], pad_id=0)
    assert loss < 1e-6
    loss, _ = nn.cross_entropy(np.zeros((4, 7)), [1, 2, 3, 4], pad_id=0)
    assert loss == pytest.approx(math.log(7), abs=1e-12)


def test_cross_entropy_ignores_pad():
    logits = rng(8).normal(size=(4, 6))
    loss, grad = nn.cross_entropy(logits, [3, 0, 5, 0], pad_id=0)
    loss2, grad2 = nn.cross_entropy(logits[[0, 2]], [3, 5], pad_id=0)
    assert loss == pytest.approx(loss2, abs=1e-15)
    assert np.all(grad[[1, 3]] == 0.0)
    np.testing.assert_allclose(grad[[0, 2]], grad2, atol=1e-15)


def test_cross_entropy_gradient_closed_form():
    logits = rng(9).normal(size=(3, 4))
    targets = [1, 0, 2]
    _, grad = nn.cross_entropy(logits, targets, pad_id=0)
    p = softmax_rows(logits)
    onehot = np.eye(4)[targets]
    want = (p - onehot) / 2
    want[1] = 0.0
    np.testing.assert_allclose(grad, want, atol=1e-15)


def test_cross_entropy_finite_differences():
    logits = rng(10).normal(size=(5, 6))
    targets = np.array([1, 4, 0, 5, 2])

    def fn(p):
        loss, grad = nn.cross_entropy(p["z"], targets, 0)
        return loss, {"z": grad}

    err = nn.grad_check(fn, {"z": logits}, eps=1e-5)
    assert err <= 1e-4


def test_cross_entropy_errors():
    with pytest.raises(TargetOutOfRange):
        nn.cross_entropy(np.zeros((2, 3)), [1, 3], pad_id=0)
    with pytest.raises(AllPad):
        nn.cross_entropy(np.zeros((2, 3)), [0, 0], pad_id=0)
    with pytest.raises(ShapeMismatch):
        nn.cross_entropy(np.zeros((2, 3)), [1], pad_id=0)


# -- backward passes via the harness ----------------------------------------

def _scalarize(seed, shape):
    return rng(seed).normal(size=shape)


def test_linear_backward():
    x0, w0 = _scalarize(11, (2, 3, 4)), _scalarize(12, (4, 5))
    r = _scalarize(13, (2, 3, 5))

    def fn(p):
        y = nn.linear(p["x"], p["w"])
        dx, dw = nn.linear_backward(r, p["x"], p["w"])
        return float((y * r).sum()), {"x": dx, "w": dw}

    assert nn.grad_check(fn, {"x": x0, "w": w0}, eps=1e-5) <= 1e-4


def test_rmsnorm_backward():
    r = _scalarize(14, (3, 6))

    def fn(p):
        y, cache = nn.rmsnorm(p["x"], p["g"])
        dx, dg = nn.rmsnorm_backward(r, cache)
        return float((y * r).sum()), {"x": dx, "g": dg}

    assert nn.grad_check(fn, {"x": _scalarize(15, (3, 6)), "g": _scalarize(16, 6)}, eps=1e-5) <= 1e-4


def test_attention_backward():
    r = _scalarize(17, (2, 3, 4))
    mask = np.array([[1, 0, 1, 1], [1, 1, 0, 0], [0, 0, 0, 1]], bool)

    def fn(p):
        y, cache = nn.attention(p["q"], p["k"], p["v"], mask)
        dq, dk, dv = nn.attention_backward(r, cache)
        return float((y * r).sum()), {"q": dq, "k": dk, "v": dv}

    params = {"q": _scalarize(18, (2, 3, 4)), "k": _scalarize(19, (2, 4, 4)), "v": _scalarize(20, (2, 4, 4))}
    assert nn.grad_check(fn, params, eps=1e-5) <= 1e-4


def test_relu_backward():
    x0 = _scalarize(21, 10)
    x0[np.abs(x0) < 0.05] = 0.5  # stay away from the kink
    r = _scalarize(22, 10)

    def fn(p):
        return float((nn.relu(p["x"]) * r).sum()), {"x": nn.relu_backward(r, p["x"])}

    assert nn.grad_check(fn, {"x": x0}, eps=1e-5) <= 1e-4


# -- harness self-checks ----------------------------------------------------

def test_grad_check_linear_and_quadratic():
    lin = nn.grad_check(lambda p: (3.0 * float(p["t"][0]), {"t": np.array([3.0])}), {"t": np.array([0.7])})
    assert lin <= 1e-9
    quad = nn.grad_check(lambda p: (float(p["t"][0]) ** 2, {"t": 2 * p["t"]}), {"t": np.array([2.0])})
    assert quad <= 1e-9


def test_grad_check_detects_wrong_gradient():
    err = nn.grad_check(lambda p: (float(p["t"][0]) ** 2, {"t": 3 * p["t"]}), {"t": np.array([2.0])})
    assert err > 0.3


def test_grad_check_nonfinite():
    with pytest.raises(NonFiniteValue):
        nn.grad_check(lambda p: (float("nan"), {"t": p["t"]}), {"t": np.array([1.0])})


# -- optimizer --------------------------------------------------------------

def _param(value, grad):
    p = nn.Parameter("w", np.array(value, dtype=np.float64))
    p.grad[...] = grad
    return {"w": p}


def test_adam_zero_gradient():
    params = _param([1.0, -2.0], [0.0, 0.0])
    state = nn.adam_step(params, nn.AdamState(), lr=0.1)
    assert params["w"].value.tolist() == [1.0, -2.0]
    assert state.step == 1


def test_adam_closed_form_two_steps():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    g1, g2 = np.array([0.5, -3.0]), np.array([0.25, 1.0])
    params = _param([1.0, 1.0], g1)
    state = nn.adam_step(params, nn.AdamState(), lr)
    # first step: m_hat = g, v_hat = g^2, so update = -lr * g / (|g| + eps)
    want1 = 1.0 - lr * g1 / (np.abs(g1) + eps)
    np.testing.assert_allclose(params["w"].value, want1, rtol=0, atol=1e-15)
    params["w"].grad[...] = g2
    nn.adam_step(params, state, lr)
    m = (1 - b1) * (b1 * g1 + g2)
    v = (1 - b2) * (b2 * g1**2 + g2**2)
    want2 = want1 - lr * (m / (1 - b1**2)) / (np.sqrt(v / (1 - b2**2)) + eps)
    np.testing.assert_allclose(params["w"].value, want2, rtol=0, atol=1e-15)
    assert state.step == 2


def test_adam_shape_mismatch():
    params = _param([1.0], [0.0])
    state = nn.AdamState(m={"w": np.zeros(2)}, v={"w": np.zeros(2)})
    with pytest.raises(ShapeMismatch):
        nn.adam_step(params, state, 0.1)


def test_clip_grad_norm():
    a = nn.Parameter("a", np.zeros(2))
    b = nn.Parameter("b", np.zeros(1))
    a.grad[...] = [3.0, 0.0]
    b.grad[...] = [4.0]
    params = {"a": a, "b": b}
    assert nn.clip_grad_norm(params, 1.0) == 5.0
    assert nn.global_grad_norm(params) == pytest.approx(1.0, abs=1e-15)
    assert nn.clip_grad_norm(params, 10.0) == pytest.approx(1.0)
    np.testing.assert_allclose(a.grad, [0.6, 0.0])


def test_parameter_validation():
    with pytest.raises(ValueError):
        nn.Parameter("Enc.Q", np.zeros(1))
    with pytest.raises(ShapeMismatch):
        nn.Parameter("w", np.zeros(2), np.zeros(3))
