"""Dataset records: enrichment, serialization, and the validation pass.

Every emitted record satisfies: label is Halu exactly when hallucinated
sentences are annotated, each annotated sentence is a substring of the
normalized response, and difficulty is a positive integer (step-marker count
for reasoning chains, distinct cited context sentences for summaries).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .. import prompts
from ..llm import Backend
from ..reward import Label
from ..textspan import normalize
from .augment import AugmentationTag, AugmentedSample, Strategy
from .seeds import STEP_RE, TaskType
from .verify import JudgeVote, QualityVerdict

CITATION_RE = re.compile(r"\[S(\d+)\]")

RECORD_FIELDS = (
    "id",
    "context",
    "query",
    "response",
    "label",
    "halu_sentences",
    "difficulty",
    "reasoning_trace",
    "ground_truth_answer",
    "task_type",
    "augmentation",
    "quality_score",
    "judge_votes",
)


class EnrichmentError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    context: str
    query: str
    response: str
    label: Label
    halu_sentences: tuple[str, ...]
    difficulty: int
    reasoning_trace: str
    ground_truth_answer: str
    task_type: TaskType
    augmentation: AugmentationTag
    quality_score: float
    judge_votes: tuple[JudgeVote, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "context": self.context,
            "query": self.query,
            "response": self.response,
            "label": self.label.value,
            "halu_sentences": list(self.halu_sentences),
            "difficulty": self.difficulty,
            "reasoning_trace": self.reasoning_trace,
            "ground_truth_answer": self.ground_truth_answer,
            "task_type": self.task_type.value,
            "augmentation": self.augmentation.to_dict(),
            "quality_score": self.quality_score,
            "judge_votes": [v.to_dict() for v in self.judge_votes],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetRecord":
        return cls(
            id=obj["id"],
            context=obj["context"],
            query=obj["query"],
            response=obj["response"],
            label=Label(obj["label"]),
            halu_sentences=tuple(obj["halu_sentences"]),
            difficulty=int(obj["difficulty"]),
            reasoning_trace=obj["reasoning_trace"],
            ground_truth_answer=obj["ground_truth_answer"],
            task_type=TaskType(obj["task_type"]),
            augmentation=AugmentationTag.from_dict(obj["augmentation"]),
            quality_score=float(obj["quality_score"]),
            judge_votes=tuple(JudgeVote.from_dict(v) for v in obj.get("judge_votes", [])),
        )


def _difficulty(sample: AugmentedSample, trace: str) -> int:
    if sample.seed.task_type in (TaskType.LOGICAL, TaskType.MATH) and sample.seed.cot_answer:
        return max(1, len(STEP_RE.findall(sample.seed.cot_answer)))
    cited = {int(m) for m in CITATION_RE.findall(trace)}
    return max(1, len(cited))


def enrich_metadata(
    sample: AugmentedSample,
    verdict: QualityVerdict,
    backend: Backend,
    record_id: str,
) -> DatasetRecord:
    """Turn an accepted sample into a full dataset record: re-validate the
    sentence annotations, count difficulty, and generate the reasoning trace."""
    label = sample.expected_label
    norm_response = normalize(sample.response)
    if label is Label.HALU:
        if not sample.halu_sentences:
            raise EnrichmentError("missing_annotations")
        for sentence in sample.halu_sentences:
            if sentence not in norm_response:
                raise EnrichmentError("annotation_not_in_response")
    elif sample.halu_sentences:
        raise EnrichmentError("annotations_on_clean_sample")

    trace_prompt = prompts.fill(
        prompts.load("enrich_trace"),
        {
            "label": label.value,
            "task_type": sample.seed.task_type.value,
            "context": sample.seed.context,
            "response": sample.response,
        },
    )
    trace = backend.chat([{"role": "user", "content": trace_prompt}]).completion.strip()
    if not trace:
        raise EnrichmentError("empty_trace")

    return DatasetRecord(
        id=record_id,
        context=sample.seed.context,
        query=sample.seed.query,
        response=sample.response,
        label=label,
        halu_sentences=sample.halu_sentences,
        difficulty=_difficulty(sample, trace),
        reasoning_trace=trace,
        ground_truth_answer=sample.original_answer or sample.seed.answer,
        task_type=sample.seed.task_type,
        augmentation=sample.tag,
        quality_score=verdict.quality,
        judge_votes=verdict.votes,
    )


def validate_record_dict(obj: dict) -> list[str]:
    """All invariant violations for one serialized record (empty = clean)."""
    problems: list[str] = []
    for field_name in RECORD_FIELDS:
        if field_name not in obj:
            problems.append(f"missing field: {field_name}")
    if problems:
        return problems

    try:
        label = Label(obj["label"])
    except ValueError:
        return [f"invalid label: {obj['label']!r}"]
    try:
        task_type = TaskType(obj["task_type"])
    except ValueError:
        return [f"invalid task_type: {obj['task_type']!r}"]

    sentences = obj["halu_sentences"]
    if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
        problems.append("halu_sentences must be a list of strings")
        sentences = []
    if label is Label.HALU and not sentences:
        problems.append("Halu record with empty halu_sentences")
    if label is Label.NON_HALU and sentences:
        problems.append("NonHalu record with halu_sentences")
    norm_response = normalize(obj["response"])
    for sentence in sentences:
        if sentence not in norm_response:
            problems.append(f"annotated sentence not in normalized response: {sentence[:60]!r}")

    if not isinstance(obj["difficulty"], int) or obj["difficulty"] < 1:
        problems.append(f"difficulty must be a positive integer, got {obj['difficulty']!r}")
    if not 0.0 <= float(obj["quality_score"]) <= 1.0:
        problems.append(f"quality_score outside [0, 1]: {obj['quality_score']!r}")

    strategy = obj["augmentation"].get("strategy") if isinstance(obj["augmentation"], dict) else None
    if strategy == Strategy.FUZZY_REPLACE.value and task_type is not TaskType.SUMMARY:
        problems.append("FuzzyReplace on a non-Summary record")
    return problems


def validate_dataset(path: str | Path) -> tuple[int, list[tuple[int, str]]]:
    """Validate every line of a dataset file; returns (record count,
    [(line number, violation)])."""
    count = 0
    violations: list[tuple[int, str]] = []
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            count += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                violations.append((lineno, f"invalid JSON: {exc}"))
                continue
            for problem in validate_record_dict(obj):
                violations.append((lineno, problem))
    return count, violations
