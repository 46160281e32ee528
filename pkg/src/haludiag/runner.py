"""Benchmark execution for the two diagnosis methods.

The single-prompt method sends the fixed diagnosis template (one backend call
per item) and parses the returned report.  The pipeline method decomposes the
task into detect -> locate -> fix: one call when detection is negative (the
original answer passes through unchanged with no spans), exactly three calls
when positive.  A failed later step degrades the report (empty spans or empty
correction) instead of aborting, and is flagged.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import prompts
from .llm import Backend, BackendError
from .metrics import (
    ConsistencyScorer,
    DetectionReport,
    DiagnosisReportCard,
    ScorerError,
    accumulate,
    detection_metrics,
    hit_rate,
)
from .report import (
    Conclusion,
    DiagnosisReport,
    ParseStatus,
    extract_report,
    find_json_array,
)
from .reward import Label
from .textspan import verbatim_fraction

_FIELD_ALIASES = {
    "id": ("id", "sample_id", "uid", "index"),
    "context": ("context", "passage", "document", "source", "premise"),
    "query": ("query", "question", "instruction", "prompt"),
    "answer": ("answer", "response", "hypothesis", "summary"),
    "label": ("label", "gt_label", "is_hallucination"),
    "gt_sentences": ("gt_sentences", "halu_sentences", "hallucination_spans", "annotations"),
    "reference_answer": ("reference_answer", "ground_truth_answer", "reference"),
}

# Per-benchmark overrides layered on top of the default aliases.
BENCHMARK_ALIASES: dict[str, dict[str, tuple[str, ...]]] = {
    "halubench": {"context": ("passage",), "query": ("question",)},
    "summeval": {"context": ("document", "source"), "answer": ("summary",)},
}

_HALU_LABELS = frozenset({"halu", "fail", "hallucinated", "1", "true", "yes"})
_NONHALU_LABELS = frozenset({"nonhalu", "non-halu", "pass", "0", "false", "no"})

_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    context: str
    query: str
    answer: str
    label: Label | None = None
    gt_sentences: tuple[str, ...] = ()
    reference_answer: str = ""


def _parse_label(value) -> Label | None:
    if value is None:
        return None
    token = str(value).strip().lower()
    if token in _HALU_LABELS:
        return Label.HALU
    if token in _NONHALU_LABELS:
        return Label.NON_HALU
    raise ValueError(f"unrecognized label {value!r}")


def _lookup(obj: dict, aliases: Sequence[str]):
    for key in aliases:
        if key in obj:
            return obj[key]
    return None


def load_benchmark(
    path: str | Path, benchmark: str | None = None
) -> tuple[list[BenchmarkItem], list[tuple[int, str]]]:
    """Load JSONL benchmark items, normalizing field-name variations.

    Malformed lines are skipped and reported as (line number, reason).
    """
    aliases = {k: list(v) for k, v in _FIELD_ALIASES.items()}
    for field_name, extra in BENCHMARK_ALIASES.get((benchmark or "").lower(), {}).items():
        aliases[field_name] = list(extra) + aliases[field_name]

    items: list[BenchmarkItem] = []
    skipped: list[tuple[int, str]] = []
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                context = _lookup(obj, aliases["context"])
                query = _lookup(obj, aliases["query"])
                answer = _lookup(obj, aliases["answer"])
                if not all(isinstance(v, str) and v for v in (context, query, answer)):
                    raise ValueError("missing context/query/answer")
                raw_sentences = _lookup(obj, aliases["gt_sentences"]) or []
                if not isinstance(raw_sentences, list):
                    raise ValueError("gt_sentences must be a list")
                item = BenchmarkItem(
                    id=str(_lookup(obj, aliases["id"]) or f"item-{lineno}"),
                    context=context,
                    query=query,
                    answer=answer,
                    label=_parse_label(_lookup(obj, aliases["label"])),
                    gt_sentences=tuple(str(s) for s in raw_sentences),
                    reference_answer=str(_lookup(obj, aliases["reference_answer"]) or ""),
                )
            except (ValueError, TypeError) as exc:
                skipped.append((lineno, str(exc)))
                continue
            items.append(item)
    return items, skipped


@dataclass(frozen=True)
class DiagnosisRun:
    """Outcome of diagnosing one item: the report when one was parsed, the
    number of backend calls issued, and degradation/error flags."""

    item_id: str
    report: DiagnosisReport | None
    parse_status: ParseStatus | None
    calls: int
    degraded: bool = False
    error: str | None = None


def build_single_prompt_messages(item: BenchmarkItem) -> list[dict]:
    system = prompts.load("diagnose_system")
    user = prompts.fill(
        prompts.load("diagnose_user"),
        {"context": item.context, "query": item.query, "answer": item.answer},
    )
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def diagnose_single_prompt(item: BenchmarkItem, backend: Backend) -> DiagnosisRun:
    """One-shot diagnosis: exactly one backend call per item."""
    try:
        exchange = backend.chat(build_single_prompt_messages(item))
    except BackendError as exc:
        return DiagnosisRun(item.id, None, None, calls=1, error=str(exc))
    outcome = extract_report(exchange.completion)
    return DiagnosisRun(item.id, outcome.report, outcome.status, calls=1)


def _step_prompt(name: str, item: BenchmarkItem) -> list[dict]:
    user = prompts.fill(
        prompts.load(name),
        {"context": item.context, "query": item.query, "answer": item.answer},
    )
    return [{"role": "user", "content": user}]


def diagnose_pipeline(item: BenchmarkItem, backend: Backend) -> DiagnosisRun:
    """Three-step baseline: detect, then (only if positive) locate and fix."""
    try:
        detect = backend.chat(_step_prompt("step_detect", item)).completion
    except BackendError as exc:
        return DiagnosisRun(item.id, None, None, calls=1, error=str(exc))

    match = _YES_NO_RE.search(detect)
    degraded = match is None
    hallucinated = bool(match) and match.group(1).lower() == "yes"
    if not hallucinated:
        # Negative detection short-circuits: the answer passes through
        # unchanged with no spans, after a single call.
        report = DiagnosisReport(
            conclusion=Conclusion.PASS,
            diagnosis="",
            hallucinations=(),
            corrected_answer=item.answer,
        )
        return DiagnosisRun(item.id, report, ParseStatus.VALID, calls=1, degraded=degraded)

    calls = 1
    spans: tuple[str, ...] = ()
    try:
        calls += 1
        located = backend.chat(_step_prompt("step_locate", item)).completion
        parsed = find_json_array(located)
        if parsed is not None and all(isinstance(s, str) for s in parsed):
            spans = tuple(parsed)
        else:
            degraded = True
    except BackendError:
        degraded = True

    corrected = ""
    try:
        calls += 1
        corrected = backend.chat(_step_prompt("step_fix", item)).completion.strip()
        if not corrected:
            degraded = True
    except BackendError:
        degraded = True

    report = DiagnosisReport(
        conclusion=Conclusion.FAIL,
        diagnosis="",
        hallucinations=spans,
        corrected_answer=corrected,
    )
    return DiagnosisRun(item.id, report, ParseStatus.VALID, calls=calls, degraded=degraded)


METHODS: dict[str, Callable[[BenchmarkItem, Backend], DiagnosisRun]] = {
    "single": diagnose_single_prompt,
    "pipeline": diagnose_pipeline,
}


@dataclass
class DetectionEval:
    report: DetectionReport
    skipped: int
    errored: int
    log_records: list[dict] = field(default_factory=list)


@dataclass
class DiagnosisEval:
    card: DiagnosisReportCard
    skipped: int
    errored: int
    log_records: list[dict] = field(default_factory=list)


def _run_items(
    items: Sequence[BenchmarkItem],
    method: str,
    backend: Backend,
    workers: int = 1,
) -> list[DiagnosisRun]:
    diagnose = METHODS[method]
    if workers <= 1:
        return [diagnose(item, backend) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda item: diagnose(item, backend), items))


def _log_record(item: BenchmarkItem, run: DiagnosisRun, method: str) -> dict:
    conclusion = run.report.conclusion.value if run.report else None
    return {
        "id": item.id,
        "method": method,
        "conclusion": conclusion,
        "gt_label": item.label.value if item.label else None,
        "calls": run.calls,
        "parse_status": run.parse_status.value if run.parse_status else None,
        "degraded": run.degraded,
        "error": run.error,
    }


def evaluate_detection(
    data_path: str | Path,
    method: str,
    backend: Backend,
    benchmark: str | None = None,
    workers: int = 1,
) -> DetectionEval:
    """Run a diagnosis method over a labeled benchmark and aggregate binary
    detection metrics.  An absent conclusion is mapped to the wrong class;
    transport-errored items are excluded with a count."""
    items, load_skipped = load_benchmark(data_path, benchmark)
    labeled = [item for item in items if item.label is not None]
    skipped = len(load_skipped) + (len(items) - len(labeled))

    runs = _run_items(labeled, method, backend, workers)
    preds: list[Label] = []
    gts: list[Label] = []
    errored = 0
    log_records = []
    for item, run in zip(labeled, runs):
        log_records.append(_log_record(item, run, method))
        if run.error is not None:
            errored += 1
            continue
        gt = item.label
        assert gt is not None
        if run.report is None:
            pred = Label.NON_HALU if gt is Label.HALU else Label.HALU
        else:
            pred = Label.HALU if run.report.conclusion is Conclusion.FAIL else Label.NON_HALU
        preds.append(pred)
        gts.append(gt)
    counts = accumulate(preds, gts)
    return DetectionEval(
        report=detection_metrics(counts),
        skipped=skipped,
        errored=errored,
        log_records=log_records,
    )


def evaluate_diagnosis(
    data_path: str | Path,
    method: str,
    backend: Backend,
    scorer: ConsistencyScorer,
    benchmark: str | None = None,
    workers: int = 1,
) -> DiagnosisEval:
    """Score detection accuracy, hit rate, span validity, and mitigation over
    a diagnosis benchmark (every item must carry gt_sentences).  The
    uncorrected answers are scored too, as the mitigation baseline."""
    items, load_skipped = load_benchmark(data_path, benchmark)
    if not items:
        raise ValueError("no usable benchmark items")
    missing = [item.id for item in items if not item.gt_sentences]
    if missing:
        raise ValueError(
            f"diagnosis benchmark requires gt_sentences on every item; missing on: {missing[:5]}"
        )

    runs = _run_items(items, method, backend, workers)
    det_hits: list[float] = []
    hit_rates: list[float] = []
    validities: list[float] = []
    mitigations: list[float] = []
    originals: list[float] = []
    errored = 0
    log_records = []
    for item, run in zip(items, runs):
        log_records.append(_log_record(item, run, method))
        if run.error is not None:
            errored += 1
            continue
        report = run.report
        det_hits.append(1.0 if report and report.conclusion is Conclusion.FAIL else 0.0)
        pred_spans = report.hallucinations if report else ()
        hit_rates.append(hit_rate(pred_spans, item.gt_sentences))
        validities.append(verbatim_fraction(pred_spans, item.answer))
        corrected = report.corrected_answer if report else ""
        try:
            mitigations.append(scorer(item.context, corrected))
            originals.append(scorer(item.context, item.answer))
        except ScorerError as exc:
            raise ScorerError(str(exc), sample_id=item.id) from exc

    n = len(det_hits)
    if n == 0:
        raise ValueError("every item errored; nothing to aggregate")
    card = DiagnosisReportCard(
        det_acc=sum(det_hits) / n,
        hit_rate=sum(hit_rates) / n,
        span_validity=sum(validities) / n,
        mitigation=sum(mitigations) / n,
        original_mitigation=sum(originals) / n,
        n=n,
    )
    return DiagnosisEval(
        card=card, skipped=len(load_skipped), errored=errored, log_records=log_records
    )


def write_run_log(path: str | Path, records: Sequence[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
