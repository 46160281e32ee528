"""Rule-based reward signal for one model completion against one ground truth.

Three components, each in [0, 1]:

* structure  — mean of the four field-validity flags; 0 for malformed output
* detection  — indicator that the predicted conclusion matches the label
* localization — per-prediction best containment score against the ground
  truth sentences, summed and normalized by the ground-truth count

The total is the weighted sum with default weights (1.0, 0.5, 0.5).  The raw
localization value can exceed 1 when many predictions hit few ground-truth
sentences; it is clamped before weighting (and retained for diagnostics) so
verbose output cannot farm reward.  Predictions are deduplicated after
normalization for the same reason.  Both behaviors are switchable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .report import Conclusion, ParseOutcome, ParseStatus, extract_report
from .textspan import normalize


class Label(str, Enum):
    HALU = "Halu"
    NON_HALU = "NonHalu"


@dataclass(frozen=True)
class RewardWeights:
    w_struct: float = 1.0
    w_acc: float = 0.5
    w_loc: float = 0.5

    def __post_init__(self) -> None:
        for name in ("w_struct", "w_acc", "w_loc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


DEFAULT_WEIGHTS = RewardWeights()


@dataclass(frozen=True)
class GroundTruth:
    """Reference label and annotated hallucinatory sentences for one sample."""

    label: Label
    gt_sentences: tuple[str, ...] = ()
    reference_answer: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "gt_sentences", tuple(self.gt_sentences))
        if self.label is Label.HALU and not self.gt_sentences:
            raise ValueError("Halu ground truth requires non-empty gt_sentences")
        if self.label is Label.NON_HALU and self.gt_sentences:
            raise ValueError("NonHalu ground truth requires empty gt_sentences")


@dataclass(frozen=True)
class LocMatch:
    """One prediction, its best-matching ground-truth index, and the pair score.

    ``gt_index`` is None when nothing hit (score 0) or no ground truth exists.
    """

    prediction: str
    gt_index: int | None
    score: float


@dataclass(frozen=True)
class RewardBreakdown:
    r_struct: float
    r_acc: float
    r_loc: float
    r_loc_raw: float
    total: float
    parse_status: ParseStatus
    loc_detail: tuple[LocMatch, ...] = ()

    def to_dict(self) -> dict:
        return {
            "r_struct": self.r_struct,
            "r_acc": self.r_acc,
            "r_loc": self.r_loc,
            "r_loc_raw": self.r_loc_raw,
            "total": self.total,
            "parse_status": self.parse_status.value,
            "loc_detail": [
                {"prediction": m.prediction, "gt_index": m.gt_index, "score": m.score}
                for m in self.loc_detail
            ],
        }


def reward_struct(outcome: ParseOutcome) -> float:
    """Mean of the four field-validity flags; malformed output scores 0."""
    if outcome.status is ParseStatus.MALFORMED:
        return 0.0
    flags = outcome.field_flags.as_tuple()
    return sum(flags) / len(flags)


def reward_acc(predicted: Conclusion | None, gt_label: Label) -> float:
    """Indicator of a correct verdict: Fail vs Halu, Pass vs NonHalu.

    An absent prediction (parse failure) counts as wrong, never as a skip.
    """
    if predicted is None:
        return 0.0
    matched = (predicted is Conclusion.FAIL and gt_label is Label.HALU) or (
        predicted is Conclusion.PASS and gt_label is Label.NON_HALU
    )
    return 1.0 if matched else 0.0


def loc_score(s_p: str, s_gt: str) -> float:
    """Containment-gated length-ratio score for one sentence pair.

    0 without a two-way substring hit; otherwise min(Lp/Lgt, Lgt/Lp) over
    normalized character lengths, penalizing imprecise boundaries.  Symmetric,
    and 1 exactly when the normalized sentences coincide.
    """
    np_, ng = normalize(s_p), normalize(s_gt)
    if not np_ or not ng:
        return 0.0
    if np_ not in ng and ng not in np_:
        return 0.0
    return min(len(np_) / len(ng), len(ng) / len(np_))


def _dedup_normalized(sentences: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for s in sentences:
        norm = normalize(s)
        if norm not in seen:
            seen.add(norm)
            out.append(norm)
    return out


def _localize(
    s_pred: Sequence[str],
    s_gt: Sequence[str],
    dedup: bool = True,
    clamp: bool = True,
) -> tuple[float, float, tuple[LocMatch, ...]]:
    """Raw and clamped localization reward plus per-prediction match detail."""
    preds = _dedup_normalized(s_pred) if dedup else [normalize(p) for p in s_pred]
    gts = list(s_gt)

    if not gts:
        # Empty ground truth: reward restraint, zero out false positives.
        value = 1.0 if not preds else 0.0
        detail = tuple(LocMatch(p, None, 0.0) for p in preds)
        return value, value, detail

    total = 0.0
    detail = []
    for p in preds:
        best, best_idx = 0.0, None
        for idx, g in enumerate(gts):
            score = loc_score(p, g)
            if score > best:
                best, best_idx = score, idx
        total += best
        detail.append(LocMatch(p, best_idx, best))
    raw = total / len(gts)
    clamped = min(raw, 1.0)
    return raw, (clamped if clamp else raw), tuple(detail)


def reward_loc(
    s_pred: Sequence[str],
    s_gt: Sequence[str],
    dedup: bool = True,
    clamp: bool = True,
) -> tuple[float, float]:
    """(raw, clamped) localization reward; the clamped value feeds the total."""
    raw, used, _ = _localize(s_pred, s_gt, dedup=dedup, clamp=clamp)
    return raw, used


def total_reward(
    r_struct: float, r_acc: float, r_loc: float, weights: RewardWeights = DEFAULT_WEIGHTS
) -> float:
    return weights.w_struct * r_struct + weights.w_acc * r_acc + weights.w_loc * r_loc


def compute_reward(
    raw_completion: str,
    gt: GroundTruth,
    weights: RewardWeights = DEFAULT_WEIGHTS,
    *,
    clamp_loc: bool = True,
    dedup_pred: bool = True,
) -> RewardBreakdown:
    """Score one completion end to end; never raises on hostile input.

    Parse failures zero out the detection and localization components rather
    than skipping the sample.
    """
    outcome = extract_report(raw_completion)
    r_struct = reward_struct(outcome)

    if outcome.report is not None:
        predicted: Conclusion | None = outcome.report.conclusion
        raw_loc, used_loc, detail = _localize(
            outcome.report.hallucinations, gt.gt_sentences, dedup=dedup_pred, clamp=clamp_loc
        )
    else:
        predicted = None
        raw_loc, used_loc, detail = 0.0, 0.0, ()

    r_acc = reward_acc(predicted, gt.label)
    return RewardBreakdown(
        r_struct=r_struct,
        r_acc=r_acc,
        r_loc=used_loc,
        r_loc_raw=raw_loc,
        total=total_reward(r_struct, r_acc, used_loc, weights),
        parse_status=outcome.status,
        loc_detail=detail,
    )
