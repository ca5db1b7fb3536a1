"""File formats and ingestion: feature matrices, PCM16 WAV, unit TSVs, manifests.

Binary layouts (all little-endian)::

    feature file   "FEAT" u32 version=1, u32 n_frames, u32 dim, f32[n_frames*dim]

Text formats are UTF-8 with LF line endings. Units files hold one utterance
per line, ``id<TAB>u1 u2 ...``; the duration-bearing variant writes
``id<TAB>u1:c1 u2:c2 ...``.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimZero,
    DuplicateId,
    MalformedLine,
    MissingId,
    NegativeUnit,
    NonFiniteValue,
    TrailingBytes,
    TruncatedFile,
    UnknownVersion,
    UnsupportedFormat,
)

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"FEAT"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIII")

PathLike = str | os.PathLike


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Frames x dims float32 features for one utterance."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DimZero(f"feature matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DimZero(f"feature matrix has a zero dimension: {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue("feature matrix contains NaN or Inf")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return self.data.shape == other.data.shape and self.data.tobytes() == other.data.tobytes()


@dataclass(frozen=True, eq=False)
class Waveform:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise UnsupportedFormat(f"sample rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1 or samples.size == 0:
            raise TruncatedFile("waveform has no samples")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteValue("waveform contains NaN or Inf")
        object.__setattr__(self, "samples", samples)


@dataclass
class Utterance:
    id: str
    text: str | None = None
    feature_path: str | None = None
    audio_path: str | None = None
    units: list[int] | None = None

    def __post_init__(self):
        if not self.id or "\t" in self.id or "\n" in self.id or "\r" in self.id:
            raise ValueError(f"invalid utterance id {self.id!r}")
        if self.text is None and self.feature_path is None and self.audio_path is None and self.units is None:
            raise ValueError(f"utterance {self.id!r} carries no payload")

    def to_json(self) -> dict:
        out: dict = {"id": self.id}
        for key in ("text", "feature_path", "audio_path", "units"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


# -- feature files ----------------------------------------------------------

def read_feature_file(path: PathLike) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != FEATURE_MAGIC:
        raise BadMagic(f"{path}: expected magic {FEATURE_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < _FEATURE_HEADER.size:
        raise TruncatedFile(f"{path}: header is {len(raw)} bytes, need {_FEATURE_HEADER.size}")
    _, version, n_frames, dim = _FEATURE_HEADER.unpack_from(raw)
    if version != FEATURE_VERSION:
        raise UnknownVersion(f"{path}: feature file version {version}")
    if n_frames == 0 or dim == 0:
        raise DimZero(f"{path}: n_frames={n_frames}, dim={dim}")
    expected = _FEATURE_HEADER.size + 4 * n_frames * dim
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {n_frames}x{dim} needs {expected} bytes, file has {len(raw)}")
    if len(raw) > expected:
        raise TrailingBytes(f"{path}: {len(raw) - expected} bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", offset=_FEATURE_HEADER.size).reshape(n_frames, dim)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"{path}: non-finite feature value")
    return FeatureMatrix(data.astype(np.float32))


def write_feature_file(path: PathLike, m: FeatureMatrix | np.ndarray) -> None:
    if not isinstance(m, FeatureMatrix):
        m = FeatureMatrix(m)
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, m.n_frames, m.dim)
    Path(path).write_bytes(header + m.data.astype("<f4").tobytes())


# -- WAV --------------------------------------------------------------------

def read_wav(path: PathLike) -> Waveform:
    """Decode a RIFF/WAVE PCM16 mono file; samples are scaled by 1/32768."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnsupportedFormat(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    pcm = None
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise TruncatedFile(f"{path}: fmt chunk is {len(body)} bytes")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif chunk_id == b"data":
            if len(body) < size:
                raise TruncatedFile(f"{path}: data chunk declares {size} bytes, has {len(body)}")
            pcm = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise TruncatedFile(f"{path}: no fmt chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormat(f"{path}: audio format {audio_format} is not PCM")
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels, only mono is supported")
    if bits != 16:
        raise UnsupportedFormat(f"{path}: {bits}-bit samples, only 16-bit is supported")
    if pcm is None:
        raise TruncatedFile(f"{path}: no data chunk")
    if len(pcm) % 2:
        raise TruncatedFile(f"{path}: odd number of PCM bytes")
    samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(sample_rate, samples)


def write_wav(path: PathLike, wave: Waveform | np.ndarray, sample_rate: int | None = None) -> None:
    """Write PCM16 mono. Samples are rounded to the nearest step and clipped."""
    if isinstance(wave, Waveform):
        sample_rate = wave.sample_rate
        samples = wave.samples
    else:
        samples = np.asarray(wave, dtype=np.float64)
    if sample_rate is None:
        raise ValueError("sample_rate is required for raw sample arrays")
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2").tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, sample_rate, sample_rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(pcm)) + pcm
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# -- units files ------------------------------------------------------------

def _split_line(line: str, line_no: int, path: PathLike):
    if "\t" not in line:
        raise MalformedLine(line_no, "expected id<TAB>units", str(path))
    utt_id, _, body = line.partition("\t")
    if not utt_id:
        raise MissingId(line_no, "empty utterance id", str(path))
    return utt_id, body.split()


def _parse_unit(token: str, line_no: int, path: PathLike) -> int:
    try:
        value = int(token)
    except ValueError:
        raise MalformedLine(line_no, f"not an integer unit: {token!r}", str(path)) from None
    if value < 0:
        raise NegativeUnit(line_no, f"negative unit {value}", str(path))
    return value


def _read_lines(path: PathLike) -> Iterable[tuple[int, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.endswith("\r"):
                line = line[:-1]
            if line.strip():
                yield line_no, line


def read_units_file(path: PathLike) -> list[tuple[str, list[int]]]:
    """Read ``id<TAB>u1 u2 ...`` rows in file order.

    Rows with no units are accepted and logged as a warning.
    """
    rows = []
    seen = set()
    for line_no, line in _read_lines(path):
        utt_id, tokens = _split_line(line, line_no, path)
        if utt_id in seen:
            raise DuplicateId(f"{path}:{line_no}: duplicate id {utt_id!r}")
        seen.add(utt_id)
        units = [_parse_unit(t, line_no, path) for t in tokens]
        if not units:
            log.warning("%s:%d: utterance %r has an empty unit sequence", path, line_no, utt_id)
        rows.append((utt_id, units))
    return rows


def _check_id(utt_id: str):
    if not utt_id or "\t" in utt_id or "\n" in utt_id or "\r" in utt_id:
        raise ValueError(f"invalid utterance id {utt_id!r}")


def write_units_file(path: PathLike, rows: Sequence[tuple[str, Sequence[int]]], allow_empty: bool = False) -> None:
    """Write ``id<TAB>u1 u2 ...`` rows. Empty rows need ``allow_empty``."""
    lines = []
    for utt_id, units in rows:
        _check_id(utt_id)
        units = [int(u) for u in units]
        if not units and not allow_empty:
            raise ValueError(f"utterance {utt_id!r}: empty unit sequence cannot be written")
        if units and min(units) < 0:
            raise ValueError(f"utterance {utt_id!r}: negative unit")
        lines.append(f"{utt_id}\t{' '.join(map(str, units))}\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")


def read_rle_file(path: PathLike) -> list[tuple[str, list[tuple[int, int]]]]:
    """Read duration-bearing rows ``id<TAB>u1:c1 u2:c2 ...``."""
    rows = []
    seen = set()
    for line_no, line in _read_lines(path):
        utt_id, tokens = _split_line(line, line_no, path)
        if utt_id in seen:
            raise DuplicateId(f"{path}:{line_no}: duplicate id {utt_id!r}")
        seen.add(utt_id)
        runs = []
        for token in tokens:
            unit, sep, count = token.partition(":")
            if not sep:
                raise MalformedLine(line_no, f"expected unit:count, got {token!r}", str(path))
            u = _parse_unit(unit, line_no, path)
            c = _parse_unit(count, line_no, path)
            if c == 0:
                raise MalformedLine(line_no, f"zero run length in {token!r}", str(path))
            runs.append((u, c))
        rows.append((utt_id, runs))
    return rows


def write_rle_file(path: PathLike, rows: Sequence[tuple[str, Sequence[tuple[int, int]]]]) -> None:
    lines = []
    for utt_id, runs in rows:
        _check_id(utt_id)
        if not runs:
            raise ValueError(f"utterance {utt_id!r}: empty run list cannot be written")
        body = " ".join(f"{int(u)}:{int(c)}" for u, c in runs)
        lines.append(f"{utt_id}\t{body}\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")


# -- manifests --------------------------------------------------------------

_MANIFEST_KEYS = {"id", "text", "feature_path", "audio_path", "units"}


def _resolve(base: Path, value):
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def read_manifest(path: PathLike, resolve_paths: bool = True) -> list[Utterance]:
    """Parse a JSON-lines manifest, preserving order.

    Relative ``feature_path``/``audio_path`` entries are resolved against the
    manifest's directory unless ``resolve_paths`` is false.
    """
    base = Path(path).parent
    out = []
    seen: dict[str, int] = {}
    for line_no, line in _read_lines(path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON: {exc.msg}", str(path)) from None
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected a JSON object", str(path))
        if "id" not in obj:
            raise MissingId(line_no, "missing required field 'id'", str(path))
        unknown = set(obj) - _MANIFEST_KEYS
        if unknown:
            raise MalformedLine(line_no, f"unknown fields {sorted(unknown)}", str(path))
        utt_id = obj["id"]
        if not isinstance(utt_id, str) or not utt_id:
            raise MissingId(line_no, "'id' must be a non-empty string", str(path))
        if utt_id in seen:
            raise DuplicateId(f"{path}:{line_no}: id {utt_id!r} already defined on line {seen[utt_id]}")
        seen[utt_id] = line_no
        units = obj.get("units")
        if units is not None:
            if not isinstance(units, list) or not all(isinstance(u, int) and not isinstance(u, bool) for u in units):
                raise MalformedLine(line_no, "'units' must be a list of integers", str(path))
            if any(u < 0 for u in units):
                raise NegativeUnit(line_no, "negative unit", str(path))
        text = obj.get("text")
        if text is not None and not isinstance(text, str):
            raise MalformedLine(line_no, "'text' must be a string", str(path))
        fp, ap = obj.get("feature_path"), obj.get("audio_path")
        if resolve_paths:
            fp, ap = _resolve(base, fp), _resolve(base, ap)
        try:
            out.append(Utterance(utt_id, text=text, feature_path=fp, audio_path=ap, units=units))
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc), str(path)) from None
    return out


def write_manifest(path: PathLike, utterances: Sequence[Utterance]) -> None:
    lines = [json.dumps(u.to_json(), ensure_ascii=False, sort_keys=True) + "\n" for u in utterances]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")
