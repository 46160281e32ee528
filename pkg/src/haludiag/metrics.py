"""Aggregated evaluation metrics.

Detection is scored as binary classification with macro-averaged precision,
recall, and F1 over the two classes (positive = Halu).  Diagnosis runs are
scored on four axes: detection accuracy on hallucinated samples, hit rate
(identical to the clamped localization reward), span validity (fraction of
predicted spans that are verbatim substrings of the original answer), and a
mitigation score from a pluggable consistency scorer.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import requests

from .report import DiagnosisReport
from .reward import Label, reward_loc
from .textspan import verbatim_fraction


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with Halu as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class DetectionReport:
    halu_precision: float
    halu_recall: float
    halu_f1: float
    nonhalu_precision: float
    nonhalu_recall: float
    nonhalu_f1: float
    macro_p: float
    macro_r: float
    macro_f1: float
    accuracy: float
    n: int

    def to_dict(self) -> dict:
        return {
            "halu": {
                "precision": self.halu_precision,
                "recall": self.halu_recall,
                "f1": self.halu_f1,
            },
            "nonhalu": {
                "precision": self.nonhalu_precision,
                "recall": self.nonhalu_recall,
                "f1": self.nonhalu_f1,
            },
            "macro_p": self.macro_p,
            "macro_r": self.macro_r,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "n": self.n,
        }


@dataclass(frozen=True)
class DiagnosisReportCard:
    """Diagnosis-benchmark aggregates: Det-Acc, HR, SV, Mit plus the
    uncorrected-answer mitigation baseline."""

    det_acc: float
    hit_rate: float
    span_validity: float
    mitigation: float
    original_mitigation: float
    n: int

    def to_dict(self) -> dict:
        return {
            "det_acc": self.det_acc,
            "hit_rate": self.hit_rate,
            "span_validity": self.span_validity,
            "mitigation": self.mitigation,
            "original_mitigation": self.original_mitigation,
            "n": self.n,
        }


def accumulate(preds: Sequence[Label], gts: Sequence[Label]) -> ConfusionCounts:
    """Exact confusion counts; a length mismatch signals a corrupted run."""
    if len(preds) != len(gts):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(gts)} labels")
    tp = fp = tn = fn = 0
    for pred, gt in zip(preds, gts):
        if gt is Label.HALU:
            if pred is Label.HALU:
                tp += 1
            else:
                fn += 1
        else:
            if pred is Label.HALU:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # 0/0 ratios resolve to 0 so degenerate fixtures stay defined.
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def detection_metrics(counts: ConfusionCounts) -> DetectionReport:
    """Per-class and macro-averaged classification metrics from counts."""
    if counts.n == 0:
        raise ValueError("cannot compute metrics over zero samples")
    hp, hr, hf = _prf(counts.tp, counts.fp, counts.fn)
    np_, nr, nf = _prf(counts.tn, counts.fn, counts.fp)
    return DetectionReport(
        halu_precision=hp,
        halu_recall=hr,
        halu_f1=hf,
        nonhalu_precision=np_,
        nonhalu_recall=nr,
        nonhalu_f1=nf,
        macro_p=(hp + np_) / 2,
        macro_r=(hr + nr) / 2,
        macro_f1=(hf + nf) / 2,
        accuracy=(counts.tp + counts.tn) / counts.n,
        n=counts.n,
    )


def hit_rate(pred_sentences: Sequence[str], gt_sentences: Sequence[str]) -> float:
    """Clamped localization reward, reused verbatim as the HR metric."""
    return reward_loc(pred_sentences, gt_sentences)[1]


def span_validity(report: DiagnosisReport, original_answer: str) -> float:
    """Fraction of predicted spans copied verbatim (raw match) from the answer."""
    return verbatim_fraction(report.hallucinations, original_answer)


class ScorerError(Exception):
    """Consistency scorer failed; carries the sample id when known."""

    def __init__(self, message: str, sample_id: str | None = None):
        super().__init__(message)
        self.sample_id = sample_id


class ConsistencyScorer(Protocol):
    def __call__(self, context: str, claim: str) -> float: ...


_WORD_RE = re.compile(r"[0-9A-Za-zÀ-ɏ一-鿿]+")

STOPWORDS = frozenset(
    """a an and are as at be been but by for from had has have he her his i in is
    it its of on or our she so that the their them they this to was we were will
    with you your""".split()
)


def content_words(text: str) -> list[str]:
    """Lowercased word tokens with stopwords removed (all tokens if only
    stopwords remain)."""
    tokens = [t.lower() for t in _WORD_RE.findall(text)]
    filtered = [t for t in tokens if t not in STOPWORDS]
    return filtered or tokens


class LexicalOverlapScorer:
    """Offline fallback scorer: content-word recall of the claim against the
    context.  1.0 when every claim content word appears in the context, 0.0
    for an empty claim."""

    def __call__(self, context: str, claim: str) -> float:
        claim_words = set(content_words(claim))
        if not claim_words:
            return 0.0
        context_words = set(content_words(context))
        return len(claim_words & context_words) / len(claim_words)


class HttpConsistencyScorer:
    """Adapter for an external consistency-model service.

    POSTs ``{"context": ..., "claim": ...}`` and expects ``{"score": x}`` with
    x in [0, 1].  Transport or protocol failures raise ScorerError.
    """

    def __init__(
        self,
        url: str,
        timeout_s: float = 30.0,
        post: Callable[..., requests.Response] | None = None,
    ):
        self.url = url
        self.timeout_s = timeout_s
        self._post = post or requests.post

    def __call__(self, context: str, claim: str) -> float:
        try:
            response = self._post(
                self.url, json={"context": context, "claim": claim}, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise ScorerError(f"consistency scorer transport failure: {exc}") from exc
        if response.status_code != 200:
            raise ScorerError(f"consistency scorer returned HTTP {response.status_code}")
        try:
            score = float(response.json()["score"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ScorerError(f"consistency scorer protocol violation: {exc}") from exc
        if not 0.0 <= score <= 1.0:
            raise ScorerError(f"consistency score {score} outside [0, 1]")
        return score


def mitigation_score(corrected_answer: str, context: str, scorer: ConsistencyScorer) -> float:
    """Score a corrected answer's consistency with the source context."""
    return scorer(context, corrected_answer)


def format_detection_table(report: DetectionReport) -> str:
    """Aligned plain-text table of the detection metrics."""
    rows = [
        ("class", "precision", "recall", "f1"),
        ("Halu", f"{report.halu_precision:.4f}", f"{report.halu_recall:.4f}", f"{report.halu_f1:.4f}"),
        (
            "NonHalu",
            f"{report.nonhalu_precision:.4f}",
            f"{report.nonhalu_recall:.4f}",
            f"{report.nonhalu_f1:.4f}",
        ),
        ("macro", f"{report.macro_p:.4f}", f"{report.macro_r:.4f}", f"{report.macro_f1:.4f}"),
    ]
    widths = [max(len(row[col]) for row in rows) for col in range(4)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.append(f"accuracy  {report.accuracy:.4f}")
    lines.append(f"n         {report.n}")
    return "\n".join(lines)


def format_diagnosis_table(card: DiagnosisReportCard, method: str = "result") -> str:
    """Aligned plain-text table: Det-Acc, HR, SV, Mit, plus the uncorrected
    baseline row for the mitigation column."""
    header = ("method", "Det-Acc", "HR", "SV", "Mit")
    result = (
        method,
        f"{card.det_acc:.4f}",
        f"{card.hit_rate:.4f}",
        f"{card.span_validity:.4f}",
        f"{card.mitigation:.4f}",
    )
    original = ("original", "-", "-", "-", f"{card.original_mitigation:.4f}")
    rows = [header, result, original]
    widths = [max(len(row[col]) for row in rows) for col in range(5)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.append(f"n  {card.n}")
    return "\n".join(lines)
