"""Diagnosis-report data model plus extraction from raw model completions.

A diagnosis report is a JSON object with exactly four keys, in order:
``conclusion``, ``diagnosis``, ``hallucinations``, ``corrected_answer``.
Extraction never raises: every byte sequence maps onto one of three parse
statuses, and per-field validity flags feed the structural reward.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Sequence

REPORT_KEYS = ("conclusion", "diagnosis", "hallucinations", "corrected_answer")

_EXCERPT_CHARS = 200
_DECODER = json.JSONDecoder()

# Opening fence with an optional language tag; content runs to the closing fence.
_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\r?\n?(.*?)```", re.DOTALL)
_DATA_TAGS = frozenset({"", "json", "jsonc", "json5", "js", "javascript"})


class Conclusion(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"


class ParseStatus(str, Enum):
    VALID = "Valid"
    MISSING_FIELDS = "MissingFields"
    MALFORMED = "Malformed"


@dataclass(frozen=True)
class DiagnosisReport:
    """The four-field diagnosis a model emits for one (context, query, answer)."""

    conclusion: Conclusion
    diagnosis: str = ""
    hallucinations: tuple[str, ...] = ()
    corrected_answer: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "hallucinations", tuple(self.hallucinations))

    def violations(self) -> tuple[str, ...]:
        """Consistency flags. Surfaced for callers to judge, never repaired."""
        flags = []
        if self.conclusion is Conclusion.PASS and self.hallucinations:
            flags.append("hallucinations_on_pass")
        if self.conclusion is Conclusion.FAIL and not self.hallucinations:
            flags.append("empty_hallucinations_on_fail")
        return tuple(flags)


@dataclass(frozen=True)
class FieldFlags:
    """Per-key presence-and-type validity of the four required fields."""

    conclusion: bool = False
    diagnosis: bool = False
    hallucinations: bool = False
    corrected_answer: bool = False

    def as_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.conclusion, self.diagnosis, self.hallucinations, self.corrected_answer)

    def all_valid(self) -> bool:
        return all(self.as_tuple())


@dataclass(frozen=True)
class ParseOutcome:
    status: ParseStatus
    report: DiagnosisReport | None
    field_flags: FieldFlags
    raw_excerpt: str = ""


def _scan_json_objects(text: str) -> Iterator[tuple[dict, str]]:
    """Yield every parseable top-level JSON object in ``text``, in order."""
    pos = 0
    while True:
        brace = text.find("{", pos)
        if brace == -1:
            return
        try:
            obj, end = _DECODER.raw_decode(text, brace)
        except ValueError:
            pos = brace + 1
            continue
        if isinstance(obj, dict):
            yield obj, text[brace:end]
            pos = end
        else:
            pos = brace + 1


def find_json_object(text: str) -> dict | None:
    """First parseable top-level JSON object anywhere in ``text``, else None."""
    for obj, _ in _scan_json_objects(text):
        return obj
    return None


def find_json_array(text: str) -> list | None:
    """First parseable top-level JSON array anywhere in ``text``, else None."""
    pos = 0
    while True:
        bracket = text.find("[", pos)
        if bracket == -1:
            return None
        try:
            obj, _ = _DECODER.raw_decode(text, bracket)
        except ValueError:
            pos = bracket + 1
            continue
        if isinstance(obj, list):
            return obj
        pos = bracket + 1


def _locate_object(text: str) -> tuple[dict, str] | None:
    # Whole input is a single JSON object (canonical serialized form).
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            obj, end = _DECODER.raw_decode(stripped)
            if isinstance(obj, dict) and not stripped[end:].strip():
                return obj, stripped[:end]
        except ValueError:
            pass
    # Fenced data blocks take priority over loose braces in prose.
    for match in _FENCE_RE.finditer(text):
        if (match.group(1) or "").lower() not in _DATA_TAGS:
            continue
        for obj, raw in _scan_json_objects(match.group(2)):
            return obj, raw
    for obj, raw in _scan_json_objects(text):
        return obj, raw
    return None


def _parse_conclusion(value: Any) -> Conclusion | None:
    if not isinstance(value, str):
        return None
    lowered = value.strip().lower()
    if lowered == "pass":
        return Conclusion.PASS
    if lowered == "fail":
        return Conclusion.FAIL
    return None


def extract_report(raw_completion: str) -> ParseOutcome:
    """Extract and validate a diagnosis report from arbitrary completion text.

    Never raises.  ``Malformed`` means no JSON object could be located at all;
    ``MissingFields`` means an object was found but at least one required key
    is absent or of the wrong shape.  Extra keys are ignored.
    """
    located = _locate_object(raw_completion)
    if located is None:
        return ParseOutcome(
            status=ParseStatus.MALFORMED,
            report=None,
            field_flags=FieldFlags(),
            raw_excerpt=raw_completion[:_EXCERPT_CHARS],
        )
    obj, raw_region = located

    conclusion = _parse_conclusion(obj.get("conclusion"))
    hallucinations = obj.get("hallucinations")
    flags = FieldFlags(
        conclusion=conclusion is not None,
        diagnosis=isinstance(obj.get("diagnosis"), str),
        hallucinations=isinstance(hallucinations, list)
        and all(isinstance(item, str) for item in hallucinations),
        corrected_answer=isinstance(obj.get("corrected_answer"), str),
    )
    if not flags.all_valid():
        return ParseOutcome(
            status=ParseStatus.MISSING_FIELDS,
            report=None,
            field_flags=flags,
            raw_excerpt=raw_region[:_EXCERPT_CHARS],
        )
    report = DiagnosisReport(
        conclusion=conclusion,  # type: ignore[arg-type]
        diagnosis=obj["diagnosis"],
        hallucinations=tuple(obj["hallucinations"]),
        corrected_answer=obj["corrected_answer"],
    )
    return ParseOutcome(
        status=ParseStatus.VALID,
        report=report,
        field_flags=flags,
        raw_excerpt=raw_region[:_EXCERPT_CHARS],
    )


def serialize_report(report: DiagnosisReport) -> str:
    """Canonical single-object text form, four keys in fixed order.

    ``extract_report(serialize_report(r))`` is Valid and structurally equal
    to ``r`` for every valid report.
    """
    payload = {
        "conclusion": report.conclusion.value,
        "diagnosis": report.diagnosis,
        "hallucinations": list(report.hallucinations),
        "corrected_answer": report.corrected_answer,
    }
    return json.dumps(payload, ensure_ascii=False)
