"""Byte-level text tokens and offset unit tokens.

Both vocabularies reserve ids 0-2 (pad, eos, bos). Text byte ``b`` maps to
``3 + b``; unit ``u`` maps to ``3 + u``.
"""

from __future__ import annotations

from typing import Sequence

from ..errors import InvalidUtf8, SourceTooLong, TargetTooLong, UnitOutOfRange

PAD_ID = 0
EOS_ID = 1
BOS_ID = 2
OFFSET = 3
TEXT_VOCAB = OFFSET + 256


def byte_tokenize(text: str | bytes, max_len: int | None = None) -> list[int]:
    """UTF-8 bytes shifted by 3, then EOS. ``"a" -> [100, 1]``."""
    if isinstance(text, bytes):
        try:
            text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidUtf8(f"invalid UTF-8 at byte {exc.start}") from None
        raw = text
    else:
        try:
            raw = text.encode("utf-8")
        except UnicodeEncodeError as exc:
            # lone surrogates cannot be encoded
            raise InvalidUtf8(f"unencodable character at index {exc.start}") from None
    ids = [OFFSET + b for b in raw]
    ids.append(EOS_ID)
    if max_len is not None and len(ids) > max_len:
        raise SourceTooLong(f"{len(ids)} source tokens exceed the limit of {max_len}")
    return ids


def byte_detokenize(ids: Sequence[int]) -> str:
    """Inverse of :func:`byte_tokenize`; specials are dropped."""
    raw = bytes(i - OFFSET for i in ids if i >= OFFSET)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"token ids do not form valid UTF-8 at byte {exc.start}") from None


def encode_units_target(units: Sequence[int], k: int, max_len: int | None = None) -> list[int]:
    """Unit ids shifted by 3, then EOS. ``[0, 499] -> [3, 502, 1]``."""
    out = []
    for u in units:
        u = int(u)
        if u < 0 or u >= k:
            raise UnitOutOfRange(f"unit {u} outside [0, {k})")
        out.append(OFFSET + u)
    out.append(EOS_ID)
    if max_len is not None and len(out) > max_len:
        raise TargetTooLong(f"{len(out)} target tokens exceed the limit of {max_len}")
    return out


def teacher_forcing_pair(target_ids: Sequence[int]) -> tuple[list[int], list[int]]:
    """Decoder input (BOS + target without its last token) and the target."""
    target_ids = list(target_ids)
    return [BOS_ID] + target_ids[:-1], target_ids


def decode_unit_tokens(ids: Sequence[int]) -> list[int]:
    """Strip specials and undo the offset; stops at the first EOS."""
    out = []
    for i in ids:
        if i == EOS_ID:
            break
        if i >= OFFSET:
            out.append(i - OFFSET)
    return out
