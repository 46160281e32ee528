"""Corpus intake: heuristic paragraph filters and the recursive splitter.

Paragraph quality is approximated with cheap, offline proxies (length,
alphabetic ratio, printable ratio, top character-trigram repetition) instead
of a language-model perplexity filter, so the whole stage runs without any
model downloads.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from ..textspan import split_sentences

_BLANK_LINE_RE = re.compile(r"\n\s*\n")


@dataclass(frozen=True)
class FilterRules:
    min_chars: int = 200
    min_alpha_ratio: float = 0.5
    max_repeat_ratio: float = 0.2
    min_printable_ratio: float = 0.97


def _top_trigram_ratio(text: str) -> float:
    compact = "".join(text.split())
    if len(compact) < 3:
        return 0.0
    counts = Counter(compact[i : i + 3] for i in range(len(compact) - 2))
    return counts.most_common(1)[0][1] / (len(compact) - 2)


class CorpusFilter:
    """Streaming paragraph filter with per-rule drop counters."""

    def __init__(self, rules: FilterRules | None = None):
        self.rules = rules or FilterRules()
        self.drops: Counter[str] = Counter()
        self.kept = 0

    def check(self, paragraph: str) -> str | None:
        """Drop reason for a paragraph, or None if it survives."""
        text = paragraph.strip()
        if len(text) < self.rules.min_chars:
            return "short"
        non_ws = [ch for ch in text if not ch.isspace()]
        if not non_ws:
            return "short"
        if sum(ch.isalpha() for ch in non_ws) / len(non_ws) < self.rules.min_alpha_ratio:
            return "low_alpha"
        printable = sum(ch.isprintable() or ch.isspace() for ch in text)
        if printable / len(text) < self.rules.min_printable_ratio:
            return "unprintable"
        if _top_trigram_ratio(text) > self.rules.max_repeat_ratio:
            return "repetitive"
        return None

    def __call__(self, paragraphs: Iterable[str]) -> Iterator[str]:
        for paragraph in paragraphs:
            reason = self.check(paragraph)
            if reason is None:
                self.kept += 1
                yield paragraph
            else:
                self.drops[reason] += 1


def read_corpus(path: str | Path) -> Iterator[str]:
    """Yield paragraphs from a UTF-8 text file (blank-line separated) or a
    JSONL file with a ``text`` field per line."""
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with path.open(encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                text = obj.get("text", "")
                if text.strip():
                    yield text
        return
    raw = path.read_text(encoding="utf-8")
    for block in _BLANK_LINE_RE.split(raw):
        if block.strip():
            yield block.strip()


def recursive_split(text: str, max_chars: int) -> list[str]:
    """Split ``text`` into chunks of at most ``max_chars`` characters.

    Separators are tried strongest first (blank line, sentence boundary,
    whitespace), recursing only into parts that are still too long, and
    adjacent small parts are re-merged greedily.  Concatenating the chunks
    reproduces the text modulo separator whitespace; no chunk is empty.
    """
    if max_chars < 200:
        raise ValueError("max_chars must be >= 200")
    text = text.strip()
    if not text:
        return []
    return _split_level(text, max_chars, level=0)


def _split_level(text: str, max_chars: int, level: int) -> list[str]:
    if len(text) <= max_chars:
        return [text]
    if level == 0:
        parts = [p.strip() for p in _BLANK_LINE_RE.split(text) if p.strip()]
        return _merge(parts, "\n\n", max_chars, level)
    if level == 1:
        spans = split_sentences(text)
        parts = [text[s.start : s.end] for s in spans] or [text]
        return _merge(parts, " ", max_chars, level)
    if level == 2:
        parts = text.split()
        return _merge(parts, " ", max_chars, level)
    # Last resort: hard cut an unbreakable token.
    return [text[i : i + max_chars] for i in range(0, len(text), max_chars)]


def _merge(parts: list[str], sep: str, max_chars: int, level: int) -> list[str]:
    chunks: list[str] = []
    buf = ""
    for part in parts:
        if len(part) > max_chars:
            if buf:
                chunks.append(buf)
                buf = ""
            chunks.extend(_split_level(part, max_chars, level + 1))
            continue
        candidate = f"{buf}{sep}{part}" if buf else part
        if len(candidate) <= max_chars:
            buf = candidate
        else:
            chunks.append(buf)
            buf = part
    if buf:
        chunks.append(buf)
    return chunks
