from __future__ import annotations

import json
from pathlib import Path

import pytest

from g2pfree.config import PipelineConfig, load_config, parse_config
from g2pfree.errors import ConfigError


def test_defaults():
    cfg = load_config(None)
    assert cfg.kmeans.k == 500 and cfg.model.unit_vocab == 503 and cfg.train.lr == 3e-4


def test_parse_full_config(tmp_path):
    raw = {
        "kmeans": {"k": 100, "seed": 1},
        "model": {"d_model": 64, "n_heads": 2, "seed": 2},
        "train": {"max_steps": 10, "shuffle_seed": 3},
        "paths": {"workdir": "runs", "manifests": {"text": "t.jsonl", "features": "/abs/f.jsonl"}},
    }
    (tmp_path / "c.json").write_text(json.dumps(raw))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.model.unit_vocab == 103
    assert cfg.workdir == tmp_path / "runs"
    assert cfg.manifests == {"text": str(tmp_path / "t.jsonl"), "features": "/abs/f.jsonl"}


@pytest.mark.parametrize(
    "raw",
    [
        {"kmeans": {"kk": 3}},
        {"extra": {}},
        {"model": {"unit_vocab": 10}},
        {"train": {"lr": -1}},
        {"kmeans": []},
        {"paths": {"manifests": {"a": 3}}},
        {"paths": {"workdir": "x", "other": 1}},
        [],
    ],
)
def test_rejects_bad_configs(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{oops")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_with_seed_replaces_every_seed():
    cfg = PipelineConfig().with_seed(77)
    assert cfg.kmeans.seed == cfg.model.seed == cfg.train.shuffle_seed == 77


def test_workdir_creation(tmp_path):
    cfg = parse_config({"paths": {"workdir": "a/b"}}, tmp_path)
    assert cfg.ensure_workdir() == tmp_path / "a/b" and (tmp_path / "a/b").is_dir()
    (tmp_path / "file").write_text("")
    cfg = parse_config({"paths": {"workdir": "file/sub"}}, tmp_path)
    with pytest.raises(ConfigError):
        cfg.ensure_workdir()
    assert isinstance(cfg.workdir, Path)
