"""Text preprocessing, sentence splitting, and the 64-bit sentence hash.

The hash (FNV-1a over UTF-8 of the cleaned text) is the join key between the
knowledge base and externally produced embedding files, so its definition is
part of the interchange contract.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# tokens are alphanumeric runs, keeping internal hyphens/apostrophes so
# biomedical names like "il-6" or "tnf-alpha" survive
_TOKEN_RE = re.compile(r"[a-z0-9]+(?:['-][a-z0-9]+)*")

# sentence boundary: terminator, whitespace, then an uppercase opener
_SENTENCE_RE = re.compile(r"(?<=[.?!])\s+(?=[A-Z0-9])")
_ABBREVIATIONS = ("vs.", "et al.", "al.", "e.g.", "i.e.", "fig.", "figs.",
                  "dr.", "no.", "approx.", "ca.")


@lru_cache(maxsize=1)
def stop_words() -> frozenset:
    """The fixed shipped list of 179 English stop words."""
    text = resources.files("sonotree.data").joinpath("stopwords.txt").read_text()
    words = frozenset(w for w in text.splitlines() if w)
    return words


def preprocess_text(raw: str):
    """Lowercase, strip punctuation, drop stop words.

    Returns (tokens, cleaned_text) where cleaned_text joins the surviving
    tokens with single spaces.
    """
    tokens = [t for t in _TOKEN_RE.findall(raw.lower()) if t not in stop_words()]
    return tokens, " ".join(tokens)


def hash64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 bytes."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def sentence_hash(raw: str) -> int:
    """Identity key for a sentence: hash of its cleaned text."""
    _, cleaned = preprocess_text(raw)
    return hash64(cleaned)


def split_sentences(text: str) -> list:
    """Split on [.?!] + whitespace + capital, guarding common abbreviations."""
    text = " ".join(text.split())
    if not text:
        return []
    pieces = []
    start = 0
    for match in _SENTENCE_RE.finditer(text):
        head = text[start:match.start()]  # match starts at the whitespace
        lowered = head.lower()
        if any(lowered.endswith(abbr) for abbr in _ABBREVIATIONS):
            continue
        pieces.append(head.strip())
        start = match.end()
    tail = text[start:].strip()
    if tail:
        pieces.append(tail)
    return [p for p in pieces if p]
