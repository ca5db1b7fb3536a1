"""Teacher-forced training loop for the text-to-unit model."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

from .. import nn
from ..errors import ConfigError, DataError, EmptyDataset
from ..rng import MASK64, SplitMix64
from ..units import dedup
from .model import Seq2SeqModel, backward, forward, pad_batch
from .tokenizer import PAD_ID, byte_tokenize, encode_units_target, teacher_forcing_pair

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    batch_size: int = 8
    max_steps: int = 2000
    shuffle_seed: int = 0
    log_every: int = 100
    clip_norm: float = 1.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_steps < 0:
            raise ConfigError(f"max_steps must be >= 0, got {self.max_steps}")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {self.log_every}")
        if not self.clip_norm > 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if not 0 <= self.shuffle_seed <= MASK64:
            raise ConfigError(f"shuffle_seed must be a u64, got {self.shuffle_seed}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Example:
    id: str
    src: tuple[int, ...]
    tgt_in: tuple[int, ...]
    tgt_out: tuple[int, ...]


def make_examples(pairs: Sequence[tuple[str, Sequence[int]]], model: Seq2SeqModel, ids: Sequence[str] | None = None):
    """Tokenize ``(text, units)`` pairs; targets are deduplicated first.

    Errors are re-raised with the offending utterance id attached.
    """
    cfg = model.config
    if ids is None:
        ids = [f"#{i}" for i in range(len(pairs))]
    examples = []
    for utt_id, (text, units) in zip(ids, pairs):
        try:
            src = byte_tokenize(text, cfg.max_src_len)
            target = encode_units_target(dedup(units), cfg.k, cfg.max_tgt_len)
        except DataError as exc:
            raise type(exc)(f"utterance {utt_id}: {exc}") from None
        tgt_in, tgt_out = teacher_forcing_pair(target)
        examples.append(Example(utt_id, tuple(src), tuple(tgt_in), tuple(tgt_out)))
    return examples


def collate(batch: Sequence[Example]):
    return (
        pad_batch([e.src for e in batch]),
        pad_batch([e.tgt_in for e in batch]),
        pad_batch([e.tgt_out for e in batch]),
    )


def batch_schedule(n: int, cfg: TrainConfig):
    """Yield index lists, reshuffling at every epoch boundary."""
    rng = SplitMix64(cfg.shuffle_seed)
    while True:
        order = rng.shuffle(list(range(n)))
        for start in range(0, n, cfg.batch_size):
            yield order[start:start + cfg.batch_size]


def train(
    model: Seq2SeqModel,
    dataset: Sequence[tuple[str, Sequence[int]]],
    cfg: TrainConfig,
    ids: Sequence[str] | None = None,
    on_step: Callable[[int, float, float], None] | None = None,
):
    """Run ``cfg.max_steps`` Adam steps; returns ``(model, losses)``.

    ``losses[i]`` is the mini-batch loss computed before update ``i``.
    ``on_step(step, loss, wall_ms)`` is called after each update.
    """
    if len(dataset) == 0:
        raise EmptyDataset("training set is empty")
    examples = make_examples(dataset, model, ids)
    state = nn.AdamState()
    schedule = batch_schedule(len(examples), cfg)
    losses: list[float] = []
    start = time.perf_counter()
    for step in range(cfg.max_steps):
        src, tgt_in, tgt_out = collate([examples[i] for i in next(schedule)])
        values = model.compute_values()
        logits, tape = forward(values, model.config, src, tgt_in)
        loss, dlogits = nn.cross_entropy(logits, tgt_out, PAD_ID)
        grads = backward(values, model.config, tape, dlogits)
        for name, p in model.params.items():
            p.grad[...] = grads[name]
        nn.clip_grad_norm(model.params, cfg.clip_norm)
        nn.adam_step(model.params, state, cfg.lr)
        losses.append(loss)
        wall_ms = (time.perf_counter() - start) * 1000.0
        if on_step is not None:
            on_step(step, loss, wall_ms)
        if step % cfg.log_every == 0 or step == cfg.max_steps - 1:
            log.info("step %d loss %.6f", step, loss)
    return model, losses


def corpus_loss(model: Seq2SeqModel, examples: Sequence[Example]) -> float:
    """Mean per-token teacher-forced loss over ``examples`` (one batch)."""
    src, tgt_in, tgt_out = collate(examples)
    logits, _ = forward(model.compute_values(), model.config, src, tgt_in)
    return nn.cross_entropy(logits, tgt_out, PAD_ID)[0]
