"""Corpus evaluation: UER over unit sequences, CER over transcripts, SDR over waveforms.

Corpus-level UER and CER are micro-averaged (total edits over total
reference length); SDR is the arithmetic mean over evaluated pairs.
Reports are written as canonical JSON: sorted keys, two-space indent,
floats with exactly six decimals, absent metrics omitted rather than null.
"""

from __future__ import annotations

import json
import logging
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .corpus import PathLike, Utterance, Waveform, read_wav
from .errors import (
    DataError,
    EmptyReference,
    InvalidUtf8,
    LengthMismatch,
    NoOverlappingIds,
    SampleRateMismatch,
    SilentReference,
)
from .units import dedup, levenshtein

log = logging.getLogger(__name__)

SDR_CAP_DB = 140.0


def _chars(text: str | bytes) -> np.ndarray:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidUtf8(f"invalid UTF-8 at byte {exc.start}") from None
    try:
        text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise InvalidUtf8(f"unencodable character at index {exc.start}") from None
    text = unicodedata.normalize("NFC", text)
    return np.fromiter((ord(c) for c in text), dtype=np.int64, count=len(text))


def char_edits(hyp_text: str | bytes, ref_text: str | bytes) -> tuple[int, int]:
    """``(edit distance, reference length)`` over NFC code points."""
    hyp, ref = _chars(hyp_text), _chars(ref_text)
    if ref.size == 0:
        raise EmptyReference("reference transcript is empty")
    return _kernels.levenshtein(hyp, ref), int(ref.size)


def cer(hyp_text: str | bytes, ref_text: str | bytes) -> float:
    """Character error rate in percent over NFC-normalized code points."""
    edits, n = char_edits(hyp_text, ref_text)
    return 100.0 * edits / n


def _samples(w) -> tuple[np.ndarray, int | None]:
    if isinstance(w, Waveform):
        return w.samples, w.sample_rate
    return np.asarray(w, dtype=np.float64), None


def sdr(ref: Waveform | np.ndarray, est: Waveform | np.ndarray) -> float:
    """``10 log10(sum(ref**2) / sum((ref - est)**2))`` in dB.

    No alignment search is done; zero distortion returns the 140 dB cap.
    """
    r, r_sr = _samples(ref)
    e, e_sr = _samples(est)
    if r_sr is not None and e_sr is not None and r_sr != e_sr:
        raise SampleRateMismatch(f"sample rates differ: {r_sr} vs {e_sr}")
    if r.shape != e.shape:
        raise LengthMismatch(f"lengths differ: {r.size} vs {e.size}")
    signal = float(np.dot(r, r))
    if signal == 0.0:
        raise SilentReference("reference has zero energy")
    diff = r - e
    noise = float(np.dot(diff, diff))
    if noise == 0.0:
        return SDR_CAP_DB
    return min(10.0 * math.log10(signal / noise), SDR_CAP_DB)


# -- reports ----------------------------------------------------------------

@dataclass
class EvalReport:
    per_utterance: dict[str, dict] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    unmatched_hypotheses: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.per_utterance) + len(self.skipped)

    def corpus(self) -> dict:
        out: dict = {}
        rows = [self.per_utterance[k] for k in sorted(self.per_utterance)]
        units = [r for r in rows if "uer" in r]
        if units:
            edits = sum(r["unit_edits"] for r in units)
            n = sum(r["ref_len"] for r in units)
            out.update(uer_micro=100.0 * edits / n, unit_edits=edits, unit_ref_len=n)
        chars = [r for r in rows if "cer" in r]
        if chars:
            edits = sum(r["char_edits"] for r in chars)
            n = sum(r["ref_chars"] for r in chars)
            out.update(cer_micro=100.0 * edits / n, char_edits=edits, char_ref_len=n)
        # averaged at report precision so a re-read report reproduces the mean
        sdrs = [float(f"{r['sdr_db']:.6f}") for r in rows if "sdr_db" in r]
        if sdrs:
            out.update(sdr_mean_db=math.fsum(sdrs) / len(sdrs), sdr_pairs=len(sdrs))
        return out

    def counts(self) -> dict:
        reasons: dict[str, int] = {}
        for reason in self.skipped.values():
            reasons[reason] = reasons.get(reason, 0) + 1
        return {
            "total": self.total,
            "evaluated": len(self.per_utterance),
            "skipped": len(self.skipped),
            "skip_reasons": reasons,
        }

    def to_dict(self) -> dict:
        out = {
            "corpus": self.corpus(),
            "counts": self.counts(),
            "per_utterance": self.per_utterance,
        }
        if self.skipped:
            out["skipped"] = self.skipped
        if self.unmatched_hypotheses:
            out["unmatched_hypotheses"] = sorted(self.unmatched_hypotheses)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            per_utterance={k: dict(v) for k, v in d.get("per_utterance", {}).items()},
            skipped=dict(d.get("skipped", {})),
            unmatched_hypotheses=list(d.get("unmatched_hypotheses", [])),
        )


def _evaluate_one(ref: Utterance, hyp: Utterance, dedup_units: bool) -> tuple[dict, list[str]]:
    row: dict = {}
    notes: list[str] = []
    if ref.units is not None and hyp.units is not None:
        r = dedup(ref.units) if dedup_units else list(ref.units)
        h = dedup(hyp.units) if dedup_units else list(hyp.units)
        if not r:
            notes.append("empty_reference_units")
        else:
            edits = levenshtein(h, r)
            row.update(uer=100.0 * edits / len(r), unit_edits=edits, hyp_len=len(h), ref_len=len(r))
            if not h:
                notes.append("empty_hypothesis_units")
    if ref.text is not None and hyp.text is not None:
        try:
            edits, n = char_edits(hyp.text, ref.text)
        except EmptyReference:
            notes.append("empty_reference_text")
        except InvalidUtf8:
            notes.append("invalid_utf8")
        else:
            row.update(cer=100.0 * edits / n, char_edits=edits, hyp_chars=len(_chars(hyp.text)), ref_chars=n)
    if ref.audio_path is not None and hyp.audio_path is not None:
        try:
            row["sdr_db"] = sdr(read_wav(ref.audio_path), read_wav(hyp.audio_path))
        except LengthMismatch:
            notes.append("length_mismatch")
        except SampleRateMismatch:
            notes.append("sample_rate_mismatch")
        except SilentReference:
            notes.append("silent_reference")
        except (DataError, OSError) as exc:
            log.warning("utterance %s: audio unreadable: %s", ref.id, exc)
            notes.append("audio_read_error")
    return row, notes


def evaluate(
    refs: Sequence[Utterance],
    hyps: Sequence[Utterance],
    dedup_units: bool = True,
) -> EvalReport:
    """Score every reference utterance against the hypothesis with the same id.

    Metrics are computed wherever both sides carry the needed field. Missing
    hypotheses and utterances with nothing comparable are recorded as skips.
    """
    hyp_by_id = {h.id: h for h in hyps}
    ref_ids = {r.id for r in refs}
    if not ref_ids & set(hyp_by_id):
        raise NoOverlappingIds("reference and hypothesis sets share no utterance ids")
    report = EvalReport(unmatched_hypotheses=sorted(set(hyp_by_id) - ref_ids))
    for ref in sorted(refs, key=lambda u: u.id):
        hyp = hyp_by_id.get(ref.id)
        if hyp is None:
            report.skipped[ref.id] = "missing_hypothesis"
            continue
        row, notes = _evaluate_one(ref, hyp, dedup_units)
        if any(k in row for k in ("uer", "cer", "sdr_db")):
            if notes:
                row["notes"] = notes
            report.per_utterance[ref.id] = row
        else:
            report.skipped[ref.id] = notes[0] if notes else "no_comparable_fields"
    return report


# -- canonical JSON ---------------------------------------------------------

def _emit(value, indent: int) -> str:
    pad = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_emit(value[k], indent + 1)}" for k in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [pad + _emit(v, indent + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError("non-finite value in report")
        return f"{float(value):.6f}"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(value).__name__} in a report")


def dumps_report(report: EvalReport) -> str:
    return _emit(report.to_dict(), 0) + "\n"


def write_report(report: EvalReport, path: PathLike) -> None:
    Path(path).write_text(dumps_report(report), encoding="utf-8", newline="")


def read_report(path: PathLike) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_dict(json.load(fh))
