"""Command-line pipeline.

Oracle path:   quantize-train -> encode [--dedup | --durations] -> evaluate
Proposed path: predictor-train -> predict -> evaluate (against oracle units)

Exit status: 0 success, 1 usage/config error, 2 data error, 3 grad-check
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .config import PipelineConfig, load_config
from .corpus import (
    Utterance,
    read_feature_file,
    read_manifest,
    read_rle_file,
    read_units_file,
    write_rle_file,
    write_units_file,
)
from .errors import ConfigError, DataError, EmptyDataset, G2PFreeError, MissingPair
from .metrics import evaluate, write_report
from .predictor.checkpoint import load_checkpoint, save_checkpoint
from .predictor.model import ModelConfig, Seq2SeqModel, loss_and_grads, loss_only
from .predictor.tokenizer import byte_tokenize
from .predictor.training import train
from .quantizer import assign, kmeans_fit, read_codebook, write_codebook
from .units import dedup, rle_encode, rle_expand
from . import nn

log = logging.getLogger("g2pfree")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VALIDATION = 3

GRAD_CHECK_TOL = 1e-4
GRAD_CHECK_EPS = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _with_context(utt_id: str, exc: G2PFreeError) -> G2PFreeError:
    err = type(exc).__new__(type(exc))
    Exception.__init__(err, f"utterance {utt_id}: {exc}")
    err.__dict__.update(exc.__dict__)
    return err


def _output(args, default_name: str, cfg: PipelineConfig) -> Path:
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
    return cfg.ensure_workdir() / default_name


def _manifest(args, cfg: PipelineConfig, key: str) -> str:
    if args.manifest:
        return args.manifest
    if key in cfg.manifests:
        return cfg.manifests[key]
    raise ConfigError(f"no --manifest given and config has no paths.manifests.{key}")


def load_units_any(path) -> list[tuple[str, list[int]]]:
    """Read a plain or duration-bearing (``u:c``) units file as frame-level rows."""
    with open(path, encoding="utf-8") as fh:
        head = next((line for line in fh if line.strip()), "")
    if ":" in head.partition("\t")[2]:
        return [(utt_id, rle_expand(runs)) for utt_id, runs in read_rle_file(path)]
    return read_units_file(path)


# -- oracle path ------------------------------------------------------------

def cmd_quantize_train(args, cfg: PipelineConfig) -> int:
    utts = read_manifest(_manifest(args, cfg, "features"))
    frames = []
    for u in utts:
        if u.feature_path is None:
            continue
        try:
            frames.append(read_feature_file(u.feature_path).data)
        except G2PFreeError as exc:
            raise _with_context(u.id, exc) from None
    if not frames:
        raise EmptyDataset("manifest lists no feature files")
    dims = {f.shape[1] for f in frames}
    if len(dims) > 1:
        raise DataError(f"feature files disagree on dim: {sorted(dims)}")
    data = np.concatenate(frames, axis=0)
    codebook, stats = kmeans_fit(data, cfg.kmeans)
    out = _output(args, "codebook.kmcb", cfg)
    write_codebook(out, codebook)
    stats_path = out.with_name(out.name + ".stats.json")
    summary = {
        "k": codebook.k,
        "dim": codebook.dim,
        "n_frames": int(data.shape[0]),
        "seed": cfg.kmeans.seed,
        "trained_inertia": codebook.trained_inertia,
        **stats.to_json(),
    }
    stats_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"final inertia {codebook.trained_inertia:.6f} after {stats.iterations_run} iterations -> {out}")
    return EXIT_OK


def cmd_encode(args, cfg: PipelineConfig) -> int:
    codebook = read_codebook(args.codebook)
    utts = read_manifest(_manifest(args, cfg, "features"))
    rows = []
    for u in utts:
        if u.feature_path is None:
            raise DataError(f"utterance {u.id}: no feature_path")
        try:
            units = assign(codebook, read_feature_file(u.feature_path))
        except G2PFreeError as exc:
            raise _with_context(u.id, exc) from None
        rows.append((u.id, units))
    out = _output(args, "units.tsv", cfg)
    if args.durations:
        write_rle_file(out, [(i, rle_encode(units)) for i, units in rows])
    elif args.dedup:
        write_units_file(out, [(i, dedup(units)) for i, units in rows])
    else:
        write_units_file(out, rows)
    print(f"encoded {len(rows)} utterances -> {out}")
    return EXIT_OK


# -- proposed path ----------------------------------------------------------

def _text_utterances(args, cfg) -> list[Utterance]:
    return [u for u in read_manifest(_manifest(args, cfg, "text")) if u.text is not None]


def cmd_predictor_train(args, cfg: PipelineConfig) -> int:
    texts = _text_utterances(args, cfg)
    units = dict(load_units_any(args.units))
    text_ids = {u.id for u in texts}
    for u in texts:
        if u.id not in units:
            raise MissingPair(f"utterance {u.id}: text has no unit sequence in {args.units}")
    for utt_id in units:
        if utt_id not in text_ids:
            raise MissingPair(f"utterance {utt_id}: unit sequence has no text in the manifest")
    if not texts:
        raise EmptyDataset("no utterances with text")
    model = Seq2SeqModel(cfg.model)
    out = _output(args, "predictor.sq2s", cfg)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_step(step, loss, wall_ms):
            fh.write(json.dumps({"step": step, "loss": loss, "wall_ms": round(wall_ms, 3)}) + "\n")

        train(
            model,
            [(u.text, units[u.id]) for u in texts],
            cfg.train,
            ids=[u.id for u in texts],
            on_step=on_step,
        )
    save_checkpoint(model, out)
    print(f"trained {cfg.train.max_steps} steps on {len(texts)} pairs -> {out}")
    return EXIT_OK


def cmd_predict(args, cfg: PipelineConfig) -> int:
    model = load_checkpoint(args.checkpoint)
    texts = _text_utterances(args, cfg)
    rows = []
    for u in texts:
        try:
            units = model.greedy_decode(byte_tokenize(u.text, model.config.max_src_len))
        except G2PFreeError as exc:
            raise _with_context(u.id, exc) from None
        if not units:
            log.warning("utterance %s: prediction is empty", u.id)
        rows.append((u.id, units))
    out = _output(args, "predicted.tsv", cfg)
    write_units_file(out, rows, allow_empty=True)
    print(f"predicted {len(rows)} utterances -> {out}")
    return EXIT_OK


# -- evaluation -------------------------------------------------------------

def _side(units_path, manifest_path) -> list[Utterance]:
    if units_path:
        return [Utterance(i, units=u) for i, u in load_units_any(units_path)]
    return read_manifest(manifest_path)


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    refs = _side(args.ref_units, args.ref_manifest)
    hyps = _side(args.hyp_units, args.hyp_manifest)
    report = evaluate(refs, hyps, dedup_units=not args.no_dedup)
    out = _output(args, "report.json", cfg)
    write_report(report, out)
    corpus = report.corpus()
    parts = [f"{k}={corpus[k]:.6f}" for k in ("uer_micro", "cer_micro", "sdr_mean_db") if k in corpus]
    counts = report.counts()
    print(f"evaluated {counts['evaluated']}/{counts['total']} {' '.join(parts)} -> {out}")
    return EXIT_OK


# -- validation -------------------------------------------------------------

MICRO_CONFIG = dict(unit_vocab=8, d_model=8, n_heads=2, n_layers_enc=1, n_layers_dec=1, max_src_len=4, max_tgt_len=5)


def micro_grad_check(seed: int = 0, eps: float = GRAD_CHECK_EPS, loss_grads=None) -> float:
    """Finite-difference check of the full model on a fixed micro problem.

    Source length 4, target length 5. ``loss_grads`` (default: the model's
    own loss and backward pass) can be swapped to check that the harness
    catches a broken backward pass.
    """
    loss_grads = loss_grads or loss_and_grads
    cfg = ModelConfig(**MICRO_CONFIG, seed=seed)
    values = Seq2SeqModel(cfg, dtype=np.float64).values
    src = np.array([[3 + ord("h"), 3 + ord("i"), 3 + ord("!"), 1]])
    tgt_in = np.array([[2, 3, 5, 4, 7]])
    tgt_out = np.array([[3, 5, 4, 7, 1]])
    return nn.grad_check(
        lambda v: loss_grads(v, cfg, src, tgt_in, tgt_out),
        values,
        eps=eps,
        loss_fn=lambda v: loss_only(v, cfg, src, tgt_in, tgt_out),
    )


def cmd_grad_check(args, cfg: PipelineConfig) -> int:
    seed = args.seed_override if args.seed_override is not None else 0
    err = micro_grad_check(seed=seed, eps=args.eps)
    ok = err <= GRAD_CHECK_TOL
    print(f"grad-check max relative error {err:.3e} (tolerance {GRAD_CHECK_TOL:.0e}): {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VALIDATION


# -- entry point ------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="strict JSON pipeline config")
    p.add_argument("--seed-override", type=int, default=default, metavar="U64", help="replace every seed")
    p.add_argument("--out", default=default, metavar="PATH", help="output file")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="g2pfree", description=__doc__.splitlines()[0])
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("quantize-train", help="fit a k-means codebook on manifest features")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_quantize_train)

    p = sub.add_parser("encode", help="quantize features into unit sequences")
    p.add_argument("--codebook", required=True)
    p.add_argument("--manifest")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--dedup", action="store_true", help="drop adjacent repeats")
    mode.add_argument("--durations", action="store_true", help="write unit:count runs")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("predictor-train", help="train the text-to-unit predictor")
    p.add_argument("--manifest")
    p.add_argument("--units", required=True)
    p.add_argument("--log", help="JSON-lines loss log (default: <out>.log.jsonl)")
    p.set_defaults(func=cmd_predictor_train)

    p = sub.add_parser("predict", help="predict deduplicated units from text")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    ref = p.add_mutually_exclusive_group(required=True)
    ref.add_argument("--ref-units")
    ref.add_argument("--ref-manifest")
    hyp = p.add_mutually_exclusive_group(required=True)
    hyp.add_argument("--hyp-units")
    hyp.add_argument("--hyp-manifest")
    p.add_argument("--no-dedup", action="store_true", help="score raw unit sequences")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grad-check", help="finite-difference check of the micro model")
    p.add_argument("--eps", type=float, default=GRAD_CHECK_EPS)
    p.set_defaults(func=cmd_grad_check)

    for name, subparser in sub.choices.items():
        _add_common(subparser, suppress=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    log.debug("kernel backend: %s", _kernels.BACKEND_NAME)
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            if not 0 <= args.seed_override < 2**64:
                raise ConfigError(f"--seed-override must be a u64, got {args.seed_override}")
            cfg = cfg.with_seed(args.seed_override)
        return args.func(args, cfg)
    except G2PFreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
