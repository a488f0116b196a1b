"""Shared text utilities: normalization, tokenization, canonical JSON."""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from typing import Any

__all__ = [
    "normalize_text",
    "tokenize",
    "canonical_json",
    "pretty_json",
    "sha256_hex",
]

# Any run of characters that are neither letters nor digits.
_NON_ALNUM = re.compile(r"[^0-9A-Za-z一-鿿]+")


def normalize_text(text: str) -> str:
    """Normalize text for embedding: NFKC, punctuation to spaces, collapse runs.

    Case is preserved; providers that want case folding do it themselves.
    """
    folded = unicodedata.normalize("NFKC", text)
    out: list[str] = []
    for ch in folded:
        if unicodedata.category(ch).startswith("P"):
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens: split on non-alphanumerics, digit runs kept.

    CJK ideographs count as word characters so Chinese titles do not
    collapse into a single token boundary.
    """
    folded = unicodedata.normalize("NFKC", text).lower()
    return [t for t in _NON_ALNUM.split(folded) if t]


def canonical_json(obj: Any) -> str:
    """Compact, key-sorted JSON used for hashing and equality checks."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def pretty_json(obj: Any) -> str:
    """Key-sorted, indented JSON with a trailing newline for files on disk."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()
