"""Sentence segmentation, text normalization, and span containment machinery.

Segmentation is deliberately rule based and dependency free: a sentence ends
at terminal punctuation followed by whitespace and an uppercase or CJK
character, with a configurable abbreviation exception list.  Fullwidth
terminators close a sentence unconditionally.  Localization scoring builds on
the normalized character lengths and the two-way substring test implemented
here.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

ASCII_TERMINALS = ".!?"
FULLWIDTH_TERMINALS = "。！？"  # 。 ！ ？


@dataclass(frozen=True)
class SentenceSpan:
    """One sentence: normalized text plus character offsets into the source.

    ``source[start:end]`` reproduces the raw sentence before normalization;
    ``text`` is its normalized form and ``length`` the normalized character
    count used by localization scoring.
    """

    text: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid span offsets ({self.start}, {self.end})")
        if not self.text:
            raise ValueError("span text must be non-empty after normalization")

    @property
    def length(self) -> int:
        return len(self.text)


def normalize(text: str) -> str:
    """Collapse whitespace runs to single spaces, trim, and apply NFC.

    Idempotent: ``normalize(normalize(s)) == normalize(s)``.
    """
    return " ".join(unicodedata.normalize("NFC", text).split())


def _parse_abbreviations(raw: str) -> frozenset[str]:
    tokens = set()
    for line in raw.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            tokens.add(line)
    return frozenset(tokens)


@lru_cache(maxsize=None)
def default_abbreviations() -> frozenset[str]:
    raw = resources.files("haludiag").joinpath("data/abbreviations.txt").read_text("utf-8")
    return _parse_abbreviations(raw)


def load_abbreviations(path: str | Path) -> frozenset[str]:
    """Load an abbreviation exception list (one token per line, UTF-8)."""
    return _parse_abbreviations(Path(path).read_text("utf-8"))


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return (
        0x3040 <= cp <= 0x30FF  # hiragana, katakana
        or 0x3400 <= cp <= 0x4DBF
        or 0x4E00 <= cp <= 0x9FFF
        or 0xAC00 <= cp <= 0xD7AF  # hangul
        or 0xF900 <= cp <= 0xFAFF
    )


_TOKEN_CHARS = ".'’-"


def _preceding_token(text: str, period_index: int) -> str:
    """The word ending at ``text[period_index]`` inclusive, lowercased."""
    k = period_index
    while k > 0 and (text[k - 1].isalnum() or text[k - 1] in _TOKEN_CHARS):
        k -= 1
    return text[k : period_index + 1].lower()


def _is_abbreviation(text: str, period_index: int, abbreviations: frozenset[str]) -> bool:
    token = _preceding_token(text, period_index)
    if token in abbreviations:
        return True
    # Single initials ("J. Smith") never end a sentence.
    return len(token) == 2 and token[0].isalpha()


def split_sentences(
    text: str, abbreviations: frozenset[str] | None = None
) -> list[SentenceSpan]:
    """Segment ``text`` into ordered, non-overlapping sentence spans.

    Deterministic; slicing the source at each span's offsets reproduces the
    raw sentence, and the inter-span gaps are pure whitespace, so the input
    can always be reconstructed.  Whitespace-only input yields no spans.
    """
    if not text:
        return []
    abbrevs = default_abbreviations() if abbreviations is None else abbreviations

    boundaries: list[int] = []
    n = len(text)
    for i, ch in enumerate(text):
        if ch in FULLWIDTH_TERMINALS:
            boundaries.append(i + 1)
            continue
        if ch not in ASCII_TERMINALS:
            continue
        j = i + 1
        while j < n and text[j].isspace():
            j += 1
        if j == i + 1 or j >= n:  # no whitespace gap, or end of text
            continue
        if not (text[j].isupper() or _is_cjk(text[j])):
            continue
        if ch == "." and _is_abbreviation(text, i, abbrevs):
            continue
        boundaries.append(i + 1)

    spans: list[SentenceSpan] = []
    prev = 0
    for bound in boundaries + [n]:
        segment = text[prev:bound]
        lead = len(segment) - len(segment.lstrip())
        trail = len(segment) - len(segment.rstrip())
        start, end = prev + lead, bound - trail
        if end > start:
            norm = normalize(text[start:end])
            if norm:
                spans.append(SentenceSpan(text=norm, start=start, end=end))
        prev = bound
    return spans


def containment_hit(a: str, b: str) -> bool:
    """Two-way substring test on normalized text (case sensitive).

    Empty-after-normalization input never hits.  Symmetric and reflexive for
    non-empty input.
    """
    na, nb = normalize(a), normalize(b)
    if not na or not nb:
        return False
    return na in nb or nb in na


def verbatim_fraction(spans: Sequence[str] | Iterable[str], source: str) -> float:
    """Fraction of spans that are exact raw substrings of ``source``.

    An empty span list scores 1.0: nothing to invalidate.
    """
    spans = list(spans)
    if not spans:
        return 1.0
    hits = sum(1 for s in spans if s in source)
    return hits / len(spans)
