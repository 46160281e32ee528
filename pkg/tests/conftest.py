"""Shared fixtures and independent oracles.

The localization oracle below is a standalone transcription of the
containment/length-ratio scoring rules (set-deduplicated predictions, best
match per prediction, normalized by the ground-truth count).  It deliberately
imports nothing from the package under test.
"""

from __future__ import annotations

import json
import random
import unicodedata
from pathlib import Path

import pytest

from haludiag.llm import MockBackend


def oracle_normalize(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).split())


def oracle_pair_score(p: str, g: str) -> float:
    p, g = oracle_normalize(p), oracle_normalize(g)
    if not p or not g:
        return 0.0
    if p not in g and g not in p:
        return 0.0
    return min(len(p) / len(g), len(g) / len(p))


def oracle_loc_raw(preds: list[str], gts: list[str]) -> float:
    """Brute-force localization reward before clamping (predictions taken
    as a set, per the set-valued formula)."""
    seen: set[str] = set()
    unique: list[str] = []
    for p in preds:
        n = oracle_normalize(p)
        if n not in seen:
            seen.add(n)
            unique.append(p)
    total = 0.0
    for p in unique:
        total += max((oracle_pair_score(p, g) for g in gts), default=0.0)
    return total / len(gts)


class CountingMockBackend(MockBackend):
    """Mock backend that counts chat calls."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.calls = 0

    def chat(self, messages):
        self.calls += 1
        return super().chat(messages)


def make_corpus_paragraphs(n: int) -> list[str]:
    """Synthetic prose paragraphs that pass the corpus filters."""
    towns = ["Marbury", "Eastvale", "Korinth", "Dunmore", "Ashford", "Brindle"]
    subjects = ["library", "observatory", "granary", "foundry", "seminary", "printworks"]
    out = []
    for i in range(n):
        town = towns[i % len(towns)]
        subject = subjects[(i * 3 + 1) % len(subjects)]
        out.append(
            f"The town of {town} built its first {subject} in 18{i % 100:02d} with "
            f"{300 + i} volumes donated by local families. A second wing opened two "
            f"decades later and housed the historical archive of district {i % 9}. "
            f"Curator Edith Calloway catalogued every item and trained {4 + i % 3} "
            f"assistants over the years. The archive preserved {40 + i} early maps "
            f"of the river valley and its mills."
        )
    return out


@pytest.fixture
def corpus_file(tmp_path: Path) -> Path:
    path = tmp_path / "corpus.txt"
    path.write_text("\n\n".join(make_corpus_paragraphs(12)), encoding="utf-8")
    return path


def write_benchmark(path: Path, n: int = 6, halu_every: int = 2) -> list[dict]:
    """Balanced detection fixture: Halu items have an unsupported answer."""
    rows = []
    for i in range(n):
        halu = i % halu_every == 0
        answer = (
            f"The pink tulip number {i} wilted early."
            if halu
            else f"The red rose number {i} bloomed in the garden."
        )
        rows.append(
            {
                "id": f"item-{i}",
                "passage": f"The red rose number {i} bloomed in the garden. It was a lovely sight.",
                "question": "What happened?",
                "answer": answer,
                "label": "FAIL" if halu else "PASS",
                "gt_sentences": [answer] if halu else [],
            }
        )
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return rows


def random_report_dict(rng: random.Random) -> dict:
    """Random structurally valid report payload for round-trip fuzzing."""

    def rand_text() -> str:
        alphabet = 'abc XYZ 0123 {}[]"\\\n\t`#疑問点ééé'
        return "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 30)))

    return {
        "conclusion": rng.choice(["Pass", "Fail"]),
        "diagnosis": rand_text(),
        "hallucinations": [rand_text() for _ in range(rng.randrange(0, 4))],
        "corrected_answer": rand_text(),
    }
