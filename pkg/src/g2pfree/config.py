"""Strict JSON pipeline configuration.

Example::

    {
      "kmeans": {"k": 100, "seed": 1},
      "model": {"d_model": 128, "seed": 2},
      "train": {"max_steps": 2000, "shuffle_seed": 3},
      "paths": {"workdir": "runs/toy", "manifests": {"features": "feats.jsonl", "text": "text.jsonl"}}
    }

Every section is optional; unknown keys anywhere are rejected. The unit
vocabulary of the model is derived from ``kmeans.k``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import PathLike
from .errors import ConfigError
from .predictor.model import ModelConfig
from .predictor.training import TrainConfig
from .quantizer import KmeansConfig

_MODEL_KEYS = {"d_model", "n_heads", "n_layers_enc", "n_layers_dec", "d_ff", "max_src_len", "max_tgt_len", "seed"}


@dataclass
class PipelineConfig:
    kmeans: KmeansConfig = field(default_factory=KmeansConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    workdir: Path = Path(".")
    manifests: dict[str, str] = field(default_factory=dict)

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with every seed replaced by ``seed``."""
        return PipelineConfig(
            kmeans=dataclasses.replace(self.kmeans, seed=seed),
            model=dataclasses.replace(self.model, seed=seed),
            train=dataclasses.replace(self.train, shuffle_seed=seed),
            workdir=self.workdir,
            manifests=dict(self.manifests),
        )

    def ensure_workdir(self) -> Path:
        try:
            self.workdir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create workdir {self.workdir}: {exc}") from None
        return self.workdir


def _section(raw: dict, name: str, allowed: set[str]) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return sec


def _build(cls, kwargs: dict, name: str):
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"'{name}': {exc}") from None


def parse_config(raw: dict, base_dir: Path | None = None) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {"kmeans", "model", "train", "paths"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    km = _build(KmeansConfig, _section(raw, "kmeans", {f.name for f in dataclasses.fields(KmeansConfig)}), "kmeans")
    model_kw = _section(raw, "model", _MODEL_KEYS)
    model = _build(ModelConfig, {**model_kw, "unit_vocab": km.k + 3}, "model")
    train = _build(TrainConfig, _section(raw, "train", {f.name for f in dataclasses.fields(TrainConfig)}), "train")
    paths = _section(raw, "paths", {"workdir", "manifests"})
    base = base_dir or Path(".")
    workdir = Path(paths.get("workdir", "."))
    if not workdir.is_absolute():
        workdir = base / workdir
    manifests = paths.get("manifests", {})
    if not isinstance(manifests, dict) or not all(isinstance(v, str) for v in manifests.values()):
        raise ConfigError("'paths.manifests' must map names to path strings")
    manifests = {k: str(v if Path(v).is_absolute() else base / v) for k, v in manifests.items()}
    return PipelineConfig(km, model, train, workdir, manifests)


def load_config(path: PathLike | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return parse_config(raw, Path(path).parent)
