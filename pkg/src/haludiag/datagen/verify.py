"""Quality verification: an LLM rubric score plus a confidence-weighted
label ensemble.

Each judge contributes ``weight x confidence`` mass to its label; the winning
mass over the total mass is the ensemble confidence.  A sample is accepted
only when quality and confidence clear their thresholds AND the ensemble
agrees with the label the augmentation constructed — disagreement means a bad
generation, so the sample is rejected rather than relabeled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .. import prompts
from ..llm import Backend, BackendError
from ..report import find_json_object
from ..reward import Label
from .augment import AugmentedSample


class JudgeError(Exception):
    """One judge produced unusable output."""


class AllJudgesFailed(Exception):
    """Every judge failed; the sample is quarantined for retry, not dropped."""


@dataclass(frozen=True)
class JudgeVote:
    judge_id: str
    label: Label
    confidence: float  # [0, 1]

    def to_dict(self) -> dict:
        return {"judge_id": self.judge_id, "label": self.label.value, "confidence": self.confidence}

    @classmethod
    def from_dict(cls, obj: dict) -> "JudgeVote":
        return cls(obj["judge_id"], Label(obj["label"]), float(obj["confidence"]))


_HALU_WORDS = frozenset({"halu", "fail", "hallucinated", "hallucination", "inconsistent"})
_NONHALU_WORDS = frozenset({"nonhalu", "non-halu", "pass", "consistent", "faithful"})


def _parse_label(value) -> Label:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in _HALU_WORDS:
            return Label.HALU
        if lowered in _NONHALU_WORDS:
            return Label.NON_HALU
    raise JudgeError(f"unrecognized label {value!r}")


class LlmJudge:
    """LLM-as-a-judge: prompted for a label plus a 0-100 self-reported
    confidence in a fixed JSON schema."""

    def __init__(self, judge_id: str, backend: Backend, weight: float = 1.0):
        self.judge_id = judge_id
        self.backend = backend
        self.weight = weight

    def vote(self, context: str, query: str, response: str) -> JudgeVote:
        prompt = prompts.fill(
            prompts.load("judge_label"),
            {"judge_id": self.judge_id, "context": context, "query": query, "response": response},
        )
        completion = self.backend.chat([{"role": "user", "content": prompt}]).completion
        obj = find_json_object(completion)
        if obj is None:
            raise JudgeError("judge reply is not a JSON object")
        label = _parse_label(obj.get("label"))
        try:
            confidence = float(obj.get("confidence"))
        except (TypeError, ValueError) as exc:
            raise JudgeError(f"bad confidence: {obj.get('confidence')!r}") from exc
        return JudgeVote(self.judge_id, label, min(max(confidence / 100.0, 0.0), 1.0))


class ClassifierJudge:
    """Adapter for a probabilistic classifier: ``predict(context, response)``
    returns the probability that the response is hallucinated; that
    probability passes through as the confidence."""

    def __init__(self, judge_id: str, predict: Callable[[str, str], float], weight: float = 1.0):
        self.judge_id = judge_id
        self.predict = predict
        self.weight = weight

    def vote(self, context: str, query: str, response: str) -> JudgeVote:
        try:
            p_halu = float(self.predict(context, response))
        except Exception as exc:
            raise JudgeError(f"classifier failed: {exc}") from exc
        p_halu = min(max(p_halu, 0.0), 1.0)
        label = Label.HALU if p_halu >= 0.5 else Label.NON_HALU
        return JudgeVote(self.judge_id, label, max(p_halu, 1.0 - p_halu))


@dataclass(frozen=True)
class QualityVerdict:
    quality: float
    ensemble_label: Label
    ensemble_confidence: float
    accepted: bool
    reason: str = ""
    votes: tuple[JudgeVote, ...] = ()

    def to_dict(self) -> dict:
        return {
            "quality": self.quality,
            "ensemble_label": self.ensemble_label.value,
            "ensemble_confidence": self.ensemble_confidence,
            "accepted": self.accepted,
            "reason": self.reason,
            "votes": [v.to_dict() for v in self.votes],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "QualityVerdict":
        return cls(
            quality=float(obj["quality"]),
            ensemble_label=Label(obj["ensemble_label"]),
            ensemble_confidence=float(obj["ensemble_confidence"]),
            accepted=bool(obj["accepted"]),
            reason=obj.get("reason", ""),
            votes=tuple(JudgeVote.from_dict(v) for v in obj.get("votes", [])),
        )


def score_quality(query: str, response: str, backend: Backend) -> float:
    """Rubric score for clarity/fluency/coherence, rescaled to [0, 1]."""
    prompt = prompts.fill(prompts.load("judge_quality"), {"query": query, "response": response})
    completion = backend.chat([{"role": "user", "content": prompt}]).completion
    obj = find_json_object(completion)
    if obj is None:
        raise JudgeError("quality reply is not a JSON object")
    try:
        score = float(obj.get("score"))
    except (TypeError, ValueError) as exc:
        raise JudgeError(f"bad quality score: {obj.get('score')!r}") from exc
    return min(max(score / 100.0, 0.0), 1.0)


def verify_quality(
    sample: AugmentedSample,
    judges: Sequence[LlmJudge | ClassifierJudge],
    quality_backend: Backend,
    *,
    quality_threshold: float = 0.6,
    confidence_threshold: float = 0.6,
) -> QualityVerdict:
    """Score quality, collect weighted judge votes, and gate acceptance.

    Raises AllJudgesFailed when no judge returns a vote.
    """
    if not judges:
        raise ValueError("at least one judge is required")
    quality = score_quality(sample.seed.query, sample.response, quality_backend)

    votes: list[JudgeVote] = []
    mass = {Label.HALU: 0.0, Label.NON_HALU: 0.0}
    for judge in judges:
        try:
            vote = judge.vote(sample.seed.context, sample.seed.query, sample.response)
        except (JudgeError, BackendError):
            continue
        votes.append(vote)
        mass[vote.label] += judge.weight * vote.confidence
    if not votes:
        raise AllJudgesFailed("no judge produced a vote")

    total_mass = mass[Label.HALU] + mass[Label.NON_HALU]
    # Deterministic tie-break toward Halu: a tied vote is not trustworthy
    # evidence of cleanliness.
    ensemble_label = Label.HALU if mass[Label.HALU] >= mass[Label.NON_HALU] else Label.NON_HALU
    ensemble_confidence = mass[ensemble_label] / total_mass if total_mass > 0 else 0.0

    if quality < quality_threshold:
        accepted, reason = False, "low_quality"
    elif ensemble_confidence < confidence_threshold:
        accepted, reason = False, "low_confidence"
    elif ensemble_label is not sample.expected_label:
        accepted, reason = False, "label_mismatch"
    else:
        accepted, reason = True, ""
    return QualityVerdict(
        quality=quality,
        ensemble_label=ensemble_label,
        ensemble_confidence=ensemble_confidence,
        accepted=accepted,
        reason=reason,
        votes=tuple(votes),
    )
