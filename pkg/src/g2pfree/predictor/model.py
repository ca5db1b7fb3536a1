"""Pre-norm encoder-decoder transformer mapping byte tokens to unit tokens.

The forward and backward passes are plain functions over a ``values`` dict
(parameter name -> array) so the same code serves training, inference and
the float64 gradient check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import nn
from ..errors import ConfigError, ShapeMismatch, SourceTooLong, TargetTooLong
from ..rng import MASK64, SplitMix64, fnv1a_64
from .tokenizer import BOS_ID, EOS_ID, OFFSET, PAD_ID, TEXT_VOCAB


@dataclass(frozen=True)
class ModelConfig:
    unit_vocab: int = 503
    d_model: int = 128
    n_heads: int = 4
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    d_ff: int | None = None
    max_src_len: int = 512
    max_tgt_len: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} must be a positive multiple of n_heads={self.n_heads}")
        if self.n_layers_enc < 1 or self.n_layers_dec < 1:
            raise ConfigError("encoder and decoder need at least one layer each")
        if self.unit_vocab < 4:
            raise ConfigError(f"unit_vocab must be >= 4, got {self.unit_vocab}")
        if self.d_ff < 1 or self.max_src_len < 1 or self.max_tgt_len < 1:
            raise ConfigError("d_ff and length limits must be positive")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError(f"seed must be a u64, got {self.seed}")

    @classmethod
    def for_codebook(cls, k: int, **kwargs) -> "ModelConfig":
        return cls(unit_vocab=k + OFFSET, **kwargs)

    @property
    def k(self) -> int:
        return self.unit_vocab - OFFSET

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name and shape implied by ``cfg``, in canonical order."""
    d, ff = cfg.d_model, cfg.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "enc.embed": (TEXT_VOCAB, d),
        "enc.pos": (cfg.max_src_len, d),
    }
    for i in range(cfg.n_layers_enc):
        p = f"enc.{i}"
        shapes[f"{p}.attn_norm"] = (d,)
        for w in "qkvo":
            shapes[f"{p}.attn.{w}"] = (d, d)
        shapes[f"{p}.ffn_norm"] = (d,)
        shapes[f"{p}.ffn.wi"] = (d, ff)
        shapes[f"{p}.ffn.wo"] = (ff, d)
    shapes["enc.final_norm"] = (d,)
    shapes["dec.embed"] = (cfg.unit_vocab, d)
    shapes["dec.pos"] = (cfg.max_tgt_len, d)
    for i in range(cfg.n_layers_dec):
        p = f"dec.{i}"
        shapes[f"{p}.self_norm"] = (d,)
        for w in "qkvo":
            shapes[f"{p}.self.{w}"] = (d, d)
        shapes[f"{p}.cross_norm"] = (d,)
        for w in "qkvo":
            shapes[f"{p}.cross.{w}"] = (d, d)
        shapes[f"{p}.ffn_norm"] = (d,)
        shapes[f"{p}.ffn.wi"] = (d, ff)
        shapes[f"{p}.ffn.wo"] = (ff, d)
    shapes["dec.final_norm"] = (d,)
    shapes["out.proj"] = (d, cfg.unit_vocab)
    return shapes


def init_parameters(cfg: ModelConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """Glorot-uniform matrices and unit norm gains.

    Each matrix draws from its own SplitMix64 stream seeded with
    ``cfg.seed + fnv1a_64(name)`` (mod 2**64), so values do not depend on
    parameter order.
    """
    values = {}
    for name, shape in parameter_shapes(cfg).items():
        if len(shape) == 1:
            values[name] = np.ones(shape, dtype=dtype)
            continue
        bound = math.sqrt(6.0 / (shape[0] + shape[1]))
        rng = SplitMix64((cfg.seed + fnv1a_64(name)) & MASK64)
        u = rng.uniform_array(shape[0] * shape[1]).reshape(shape)
        values[name] = ((2.0 * u - 1.0) * bound).astype(dtype)
    return values


# -- building blocks --------------------------------------------------------

def _split_heads(x, n_heads):
    b, length, d = x.shape
    return x.reshape(b, length, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, length, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, length, h * dh)


def _mha(values, prefix, xq, xkv, mask, n_heads):
    q = _split_heads(nn.linear(xq, values[f"{prefix}.q"]), n_heads)
    k = _split_heads(nn.linear(xkv, values[f"{prefix}.k"]), n_heads)
    v = _split_heads(nn.linear(xkv, values[f"{prefix}.v"]), n_heads)
    o, att = nn.attention(q, k, v, mask)
    merged = _merge_heads(o)
    return nn.linear(merged, values[f"{prefix}.o"]), (xq, xkv, merged, att)


def _mha_backward(values, prefix, dout, cache, n_heads, grads):
    xq, xkv, merged, att = cache
    dmerged, grads[f"{prefix}.o"] = nn.linear_backward(dout, merged, values[f"{prefix}.o"])
    dq, dk, dv = nn.attention_backward(_split_heads(dmerged, n_heads), att)
    dxq, grads[f"{prefix}.q"] = nn.linear_backward(_merge_heads(dq), xq, values[f"{prefix}.q"])
    dxk, grads[f"{prefix}.k"] = nn.linear_backward(_merge_heads(dk), xkv, values[f"{prefix}.k"])
    dxv, grads[f"{prefix}.v"] = nn.linear_backward(_merge_heads(dv), xkv, values[f"{prefix}.v"])
    return dxq, dxk + dxv


def _ffn(values, prefix, x):
    pre = nn.linear(x, values[f"{prefix}.wi"])
    act = nn.relu(pre)
    return nn.linear(act, values[f"{prefix}.wo"]), (x, pre, act)


def _ffn_backward(values, prefix, dout, cache, grads):
    x, pre, act = cache
    dact, grads[f"{prefix}.wo"] = nn.linear_backward(dout, act, values[f"{prefix}.wo"])
    dx, grads[f"{prefix}.wi"] = nn.linear_backward(nn.relu_backward(dact, pre), x, values[f"{prefix}.wi"])
    return dx


def _embed(table, pos, ids):
    return table[ids] + pos[: ids.shape[1]][None]


def _embed_backward(dx, ids, table_shape, pos_shape, dtype):
    dtable = np.zeros(table_shape, dtype=np.float64)
    np.add.at(dtable, ids.reshape(-1), dx.reshape(-1, dx.shape[-1]).astype(np.float64))
    dpos = np.zeros(pos_shape, dtype=np.float64)
    dpos[: ids.shape[1]] = dx.astype(np.float64).sum(axis=0)
    return dtable.astype(dtype), dpos.astype(dtype)


def _masks(src, tgt_in):
    b, ls = src.shape
    lt = tgt_in.shape[1]
    src_keep = (src != PAD_ID)[:, None, None, :]
    enc_mask = np.broadcast_to(src_keep, (b, 1, ls, ls))
    cross_mask = np.broadcast_to(src_keep, (b, 1, lt, ls))
    dec_mask = nn.causal_mask(lt)[None, None] & (tgt_in != PAD_ID)[:, None, None, :]
    return enc_mask, dec_mask, cross_mask


# -- forward / backward -----------------------------------------------------

def encode(values: Mapping[str, np.ndarray], cfg: ModelConfig, src: np.ndarray):
    """Encoder stack. ``src`` is ``(batch, Ls)`` int; returns ``(memory, tape)``."""
    enc_mask = np.broadcast_to((src != PAD_ID)[:, None, None, :], (src.shape[0], 1, src.shape[1], src.shape[1]))
    h = _embed(values["enc.embed"], values["enc.pos"], src)
    layers = []
    for i in range(cfg.n_layers_enc):
        p = f"enc.{i}"
        n1, c_n1 = nn.rmsnorm(h, values[f"{p}.attn_norm"])
        a, c_a = _mha(values, f"{p}.attn", n1, n1, enc_mask, cfg.n_heads)
        h = h + a
        n2, c_n2 = nn.rmsnorm(h, values[f"{p}.ffn_norm"])
        f, c_f = _ffn(values, f"{p}.ffn", n2)
        h = h + f
        layers.append((c_n1, c_a, c_n2, c_f))
    memory, c_final = nn.rmsnorm(h, values["enc.final_norm"])
    return memory, (src, layers, c_final)


def decode(values, cfg: ModelConfig, memory, src, tgt_in):
    """Decoder stack plus output projection; returns ``(logits, tape)``."""
    _, dec_mask, cross_mask = _masks(src, tgt_in)
    y = _embed(values["dec.embed"], values["dec.pos"], tgt_in)
    layers = []
    for i in range(cfg.n_layers_dec):
        p = f"dec.{i}"
        n1, c_n1 = nn.rmsnorm(y, values[f"{p}.self_norm"])
        a, c_a = _mha(values, f"{p}.self", n1, n1, dec_mask, cfg.n_heads)
        y = y + a
        n2, c_n2 = nn.rmsnorm(y, values[f"{p}.cross_norm"])
        c, c_c = _mha(values, f"{p}.cross", n2, memory, cross_mask, cfg.n_heads)
        y = y + c
        n3, c_n3 = nn.rmsnorm(y, values[f"{p}.ffn_norm"])
        f, c_f = _ffn(values, f"{p}.ffn", n3)
        y = y + f
        layers.append((c_n1, c_a, c_n2, c_c, c_n3, c_f))
    out, c_final = nn.rmsnorm(y, values["dec.final_norm"])
    logits = nn.linear(out, values["out.proj"])
    return logits, (tgt_in, layers, c_final, out)


def forward(values, cfg: ModelConfig, src: np.ndarray, tgt_in: np.ndarray):
    """Batched forward. Returns ``(logits, tape)`` with logits ``(B, Lt, V)``."""
    if src.ndim != 2 or tgt_in.ndim != 2 or src.shape[0] != tgt_in.shape[0]:
        raise ShapeMismatch(f"src {src.shape} and tgt_in {tgt_in.shape} must be (batch, length)")
    if src.shape[1] > cfg.max_src_len:
        raise SourceTooLong(f"source length {src.shape[1]} exceeds {cfg.max_src_len}")
    if tgt_in.shape[1] > cfg.max_tgt_len:
        raise TargetTooLong(f"target length {tgt_in.shape[1]} exceeds {cfg.max_tgt_len}")
    memory, enc_tape = encode(values, cfg, src)
    logits, dec_tape = decode(values, cfg, memory, src, tgt_in)
    return nn.check_finite(logits, "logits"), (enc_tape, dec_tape)


def backward(values, cfg: ModelConfig, tape, dlogits) -> dict[str, np.ndarray]:
    """Gradients of every parameter given ``dL/dlogits``."""
    (src, enc_layers, enc_final), (tgt_in, dec_layers, dec_final, out) = tape
    grads: dict[str, np.ndarray] = {}
    dtype = dlogits.dtype

    dout, grads["out.proj"] = nn.linear_backward(dlogits, out, values["out.proj"])
    dy, grads["dec.final_norm"] = nn.rmsnorm_backward(dout, dec_final)
    dmemory = None
    for i in reversed(range(cfg.n_layers_dec)):
        p = f"dec.{i}"
        c_n1, c_a, c_n2, c_c, c_n3, c_f = dec_layers[i]
        dn3 = _ffn_backward(values, f"{p}.ffn", dy, c_f, grads)
        dx, grads[f"{p}.ffn_norm"] = nn.rmsnorm_backward(dn3, c_n3)
        dy = dy + dx
        dn2, dmem = _mha_backward(values, f"{p}.cross", dy, c_c, cfg.n_heads, grads)
        dmemory = dmem if dmemory is None else dmemory + dmem
        dx, grads[f"{p}.cross_norm"] = nn.rmsnorm_backward(dn2, c_n2)
        dy = dy + dx
        dq, dkv = _mha_backward(values, f"{p}.self", dy, c_a, cfg.n_heads, grads)
        dx, grads[f"{p}.self_norm"] = nn.rmsnorm_backward(dq + dkv, c_n1)
        dy = dy + dx
    grads["dec.embed"], grads["dec.pos"] = _embed_backward(
        dy, tgt_in, values["dec.embed"].shape, values["dec.pos"].shape, dtype
    )

    dh, grads["enc.final_norm"] = nn.rmsnorm_backward(dmemory, enc_final)
    for i in reversed(range(cfg.n_layers_enc)):
        p = f"enc.{i}"
        c_n1, c_a, c_n2, c_f = enc_layers[i]
        dn2 = _ffn_backward(values, f"{p}.ffn", dh, c_f, grads)
        dx, grads[f"{p}.ffn_norm"] = nn.rmsnorm_backward(dn2, c_n2)
        dh = dh + dx
        dq, dkv = _mha_backward(values, f"{p}.attn", dh, c_a, cfg.n_heads, grads)
        dx, grads[f"{p}.attn_norm"] = nn.rmsnorm_backward(dq + dkv, c_n1)
        dh = dh + dx
    grads["enc.embed"], grads["enc.pos"] = _embed_backward(
        dh, src, values["enc.embed"].shape, values["enc.pos"].shape, dtype
    )
    return grads


def pad_batch(seqs: Sequence[Sequence[int]]) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def loss_and_grads(values, cfg: ModelConfig, src, tgt_in, tgt_out):
    logits, tape = forward(values, cfg, src, tgt_in)
    loss, dlogits = nn.cross_entropy(logits, tgt_out, PAD_ID)
    return loss, backward(values, cfg, tape, dlogits)


def loss_only(values, cfg: ModelConfig, src, tgt_in, tgt_out) -> float:
    logits, _ = forward(values, cfg, src, tgt_in)
    return nn.cross_entropy(logits, tgt_out, PAD_ID)[0]


class Seq2SeqModel:
    """Configuration plus named parameters (float32 by default)."""

    def __init__(self, config: ModelConfig, values: Mapping[str, np.ndarray] | None = None, dtype=np.float32):
        self.config = config
        shapes = parameter_shapes(config)
        if values is None:
            values = init_parameters(config, dtype)
        if set(values) != set(shapes):
            missing = sorted(set(shapes) - set(values))
            extra = sorted(set(values) - set(shapes))
            raise ShapeMismatch(f"parameter set mismatch: missing={missing} extra={extra}")
        self.params: dict[str, nn.Parameter] = {}
        for name, shape in shapes.items():
            value = np.array(values[name], dtype=dtype)
            if value.shape != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {value.shape}")
            self.params[name] = nn.Parameter(name, nn.check_finite(value, name))

    @property
    def values(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.params.items()}

    def compute_values(self) -> dict[str, np.ndarray]:
        """Float64 copies of the parameters; activations then stay float64."""
        return {name: p.value.astype(np.float64) for name, p in self.params.items()}

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def logits(self, src_ids: Sequence[int], tgt_in_ids: Sequence[int]) -> np.ndarray:
        """Logits ``(len(tgt_in_ids), unit_vocab)`` for one example."""
        src = np.asarray([src_ids], dtype=np.int64)
        tgt = np.asarray([tgt_in_ids], dtype=np.int64)
        return forward(self.compute_values(), self.config, src, tgt)[0][0]

    def greedy_decode(self, src_ids: Sequence[int], max_len: int | None = None) -> list[int]:
        """Greedy unit decoding, specials stripped, adjacent repeats removed.

        Generation stops at EOS or after ``max_len`` tokens (capped so the
        decoder input fits ``max_tgt_len``). Argmax ties go to the lowest id.
        """
        cfg = self.config
        limit = cfg.max_tgt_len - 1 if max_len is None else min(max_len, cfg.max_tgt_len - 1)
        if limit <= 0:
            return []
        values = self.compute_values()
        src = np.asarray([src_ids], dtype=np.int64)
        if src.shape[1] > cfg.max_src_len:
            raise SourceTooLong(f"source length {src.shape[1]} exceeds {cfg.max_src_len}")
        memory, _ = encode(values, cfg, src)
        generated: list[int] = []
        for _ in range(limit):
            tgt_in = np.asarray([[BOS_ID] + generated], dtype=np.int64)
            logits, _ = decode(values, cfg, memory, src, tgt_in)
            token = int(np.argmax(logits[0, -1]))
            if token == EOS_ID:
                break
            generated.append(token)
        units = [t - OFFSET for t in generated if t >= OFFSET]
        return [u for i, u in enumerate(units) if i == 0 or units[i - 1] != u]
