"""Minimal deterministic tensor kernel for a small encoder-decoder.

Tensors are plain numpy arrays. Every op accepts float32 or float64 inputs,
accumulates in float64 and rounds the result back to the input dtype, so a
float32 model keeps float32 storage while a float64 clone of the same model
runs end-to-end in float64 (that is what :func:`grad_check` relies on).

Forward ops that need a backward pass return ``(out, cache)``; the matching
``*_backward`` function takes the upstream gradient and that cache.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import AllMaskedRow, AllPad, NonFiniteValue, ShapeMismatch, TargetOutOfRange

RMS_EPS = 1e-6
MASK_VALUE = -1e9

_NAME_RE = re.compile(r"^[a-z0-9_./]+$")


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _dtype(*arrays) -> np.dtype:
    dt = np.result_type(*arrays)
    return dt if dt in (np.float32, np.float64) else np.dtype(np.float64)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    return x


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError(f"bad parameter name {self.name!r}")
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise ShapeMismatch(f"{self.name}: grad {self.grad.shape} vs value {self.value.shape}")

    def zero_grad(self):
        self.grad[...] = 0


# -- dense algebra ----------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` with float64 accumulation, rounded to the inputs' dtype.

    Leading dimensions broadcast as in ``np.matmul``.
    """
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(_f64(a), _f64(b))
    return check_finite(out, "matmul output").astype(_dtype(a, b), copy=False)


def linear(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x @ w`` for ``x`` of shape ``(..., n)``, as a single 2-D product."""
    lead = x.shape[:-1]
    return matmul(x.reshape(-1, x.shape[-1]), w).reshape(*lead, w.shape[1])


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients of ``y = x @ w`` for ``x`` of shape ``(..., n)``."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dx = matmul(dy2, w.T).reshape(x.shape)
    dw = matmul(x2.T, dy2)
    return dx, dw


def softmax_lastdim(x: np.ndarray) -> np.ndarray:
    if x.shape[-1] < 1:
        raise ShapeMismatch("softmax over an empty axis")
    check_finite(x, "softmax input")
    z = _f64(x)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(_dtype(x), copy=False)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


# -- normalization ----------------------------------------------------------

def rmsnorm(x: np.ndarray, gain: np.ndarray):
    """``x / sqrt(mean(x**2) + 1e-6) * gain`` over the last axis."""
    if gain.shape != (x.shape[-1],):
        raise ShapeMismatch(f"rmsnorm gain {gain.shape} vs input {x.shape}")
    x64 = _f64(x)
    inv = 1.0 / np.sqrt(np.mean(x64 * x64, axis=-1, keepdims=True) + RMS_EPS)
    out = (x64 * inv * _f64(gain)).astype(_dtype(x, gain), copy=False)
    return out, (x, gain, inv)


def rmsnorm_backward(dy: np.ndarray, cache):
    x, gain, inv = cache
    x64, g64, dy64 = _f64(x), _f64(gain), _f64(dy)
    d = x.shape[-1]
    xhat = x64 * inv
    dgain = (dy64 * xhat).reshape(-1, d).sum(axis=0)
    dxhat = dy64 * g64
    dx = inv * (dxhat - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
    dt = _dtype(x, gain)
    return dx.astype(dt, copy=False), dgain.astype(dt, copy=False)


# -- attention --------------------------------------------------------------

def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray):
    """Scaled dot-product attention.

    ``q``: ``(..., h, Lq, dh)``, ``k``/``v``: ``(..., h, Lk, dh)``.
    ``mask`` is boolean, True where a query may attend to a key, and
    broadcasts against ``(..., h, Lq, Lk)``. Returns ``(out, cache)``.
    """
    if q.shape[-1] != k.shape[-1] or k.shape != v.shape or q.shape[:-2] != k.shape[:-2]:
        raise ShapeMismatch(f"attention shapes q={q.shape} k={k.shape} v={v.shape}")
    mask = np.asarray(mask, dtype=bool)
    lq, lk = q.shape[-2], k.shape[-2]
    if mask.shape[-2:] != (lq, lk):
        raise ShapeMismatch(f"mask {mask.shape} does not match ({lq}, {lk})")
    if not np.all(mask.any(axis=-1)):
        raise AllMaskedRow("a query row has no visible keys")
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = np.matmul(_f64(q), np.swapaxes(_f64(k), -1, -2)) * scale
    scores = np.where(mask, scores, scores + MASK_VALUE)
    probs = softmax_lastdim(scores)
    out = np.matmul(probs, _f64(v))
    dt = _dtype(q, k, v)
    out = check_finite(out, "attention output").astype(dt, copy=False)
    return out, (q, k, v, probs.astype(dt, copy=False), scale)


def attention_backward(dout: np.ndarray, cache):
    q, k, v, probs, scale = cache
    p = _f64(probs)
    do = _f64(dout)
    dv = np.matmul(np.swapaxes(p, -1, -2), do)
    dp = np.matmul(do, np.swapaxes(_f64(v), -1, -2))
    ds = p * (dp - np.sum(dp * p, axis=-1, keepdims=True))
    dq = np.matmul(ds, _f64(k)) * scale
    dk = np.matmul(np.swapaxes(ds, -1, -2), _f64(q)) * scale
    dt = _dtype(q, k, v)
    return dq.astype(dt, copy=False), dk.astype(dt, copy=False), dv.astype(dt, copy=False)


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))


# -- loss -------------------------------------------------------------------

def cross_entropy(logits: np.ndarray, targets, pad_id: int):
    """Mean token cross-entropy over non-pad targets.

    Returns ``(loss, dlogits)``; pad rows get zero loss and zero gradient.
    """
    targets = np.asarray(targets, dtype=np.int64)
    vocab = logits.shape[-1]
    flat = logits.reshape(-1, vocab)
    flat_t = targets.reshape(-1)
    if flat_t.shape[0] != flat.shape[0]:
        raise ShapeMismatch(f"{flat.shape[0]} logit rows vs {flat_t.shape[0]} targets")
    if flat_t.size and (flat_t.min() < 0 or flat_t.max() >= vocab):
        raise TargetOutOfRange(f"target ids must lie in [0, {vocab})")
    keep = flat_t != pad_id
    n = int(keep.sum())
    if n == 0:
        raise AllPad("every target position is padding")
    check_finite(flat, "logits")
    z = _f64(flat)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    rows = np.arange(flat.shape[0])
    nll = lse - z[rows, flat_t]
    loss = float(np.sum(nll[keep]) / n)
    grad = np.exp(z - lse[:, None])
    grad[rows, flat_t] -= 1.0
    grad[~keep] = 0.0
    grad /= n
    return loss, grad.reshape(logits.shape).astype(_dtype(logits), copy=False)


# -- optimisation -----------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Mapping[str, Parameter], state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    Moments are kept in float64 regardless of the parameter dtype.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        if p.grad.shape != p.value.shape:
            raise ShapeMismatch(f"{name}: grad {p.grad.shape} vs value {p.value.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.value.shape, dtype=np.float64)
            state.v[name] = np.zeros(p.value.shape, dtype=np.float64)
        elif m.shape != p.value.shape:
            raise ShapeMismatch(f"{name}: optimizer state {m.shape} vs value {p.value.shape}")
        v = state.v[name]
        g = _f64(p.grad)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += state.eps
        update = m / c1
        update /= denom
        update *= lr
        p.value[...] = _f64(p.value) - update
    return state


def global_grad_norm(params: Mapping[str, Parameter]) -> float:
    total = 0.0
    for p in params.values():
        g = _f64(p.grad).ravel()
        total += float(np.dot(g, g))
    return math.sqrt(total)


def clip_grad_norm(params: Mapping[str, Parameter], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    norm = global_grad_norm(params)
    if not math.isfinite(norm):
        raise NonFiniteValue("gradient norm is not finite")
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            p.grad[...] = _f64(p.grad) * scale
    return norm


# -- gradient checking ------------------------------------------------------

def grad_check(
    fn: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-3,
    loss_fn: Callable[[dict[str, np.ndarray]], float] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn(params)`` must return ``(loss, grads)`` with one gradient array per
    parameter name. Parameters are cloned to float64 first. Relative error
    per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``. ``loss_fn``, if
    given, is a cheaper loss-only twin of ``fn`` used for the perturbed
    evaluations.
    """
    theta = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    if loss_fn is None:
        loss_fn = lambda p: fn(p)[0]  # noqa: E731
    loss, grads = fn(theta)
    if not math.isfinite(loss):
        raise NonFiniteValue("loss is not finite")
    worst = 0.0
    for name, value in theta.items():
        analytic = _f64(grads[name])
        if analytic.shape != value.shape:
            raise ShapeMismatch(f"{name}: analytic grad {analytic.shape} vs value {value.shape}")
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = loss_fn(theta)
            flat[i] = orig - eps
            minus = loss_fn(theta)
            flat[i] = orig
            if not (math.isfinite(plus) and math.isfinite(minus)):
                raise NonFiniteValue(f"{name}[{i}]: perturbed loss is not finite")
            numeric = (plus - minus) / (2.0 * eps)
            a = analytic.flat[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
