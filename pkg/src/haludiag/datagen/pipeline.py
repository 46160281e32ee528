"""End-to-end dataset construction with stage-level checkpointing.

The run is a pure function of (corpus bytes, config, seed) when driven by the
mock backend: task types and augmentation strategies are assigned by a
deterministic weighted round-robin, so configured proportions are exact, and
two identical runs produce byte-identical output files.  Each stage writes
its output atomically and records completion in a checkpoint manifest; a
rerun with the same fingerprint reuses completed stages instead of repeating
backend calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..config import atomic_write_json, atomic_write_text, fingerprint
from ..llm import Backend, BackendError, MockBackend
from ..reward import Label
from .augment import (
    AugmentationError,
    AugmentedSample,
    ContextMode,
    InjectMode,
    augment_context,
    fuzzy_replace,
    inject_hallucination,
    no_augmentation,
)
from .corpus import CorpusFilter, FilterRules, read_corpus, recursive_split
from .records import DatasetRecord, EnrichmentError, enrich_metadata
from .seeds import SeedError, SeedSample, TaskType, generate_seed
from .verify import (
    AllJudgesFailed,
    ClassifierJudge,
    JudgeError,
    LlmJudge,
    QualityVerdict,
    verify_quality,
)

logger = logging.getLogger("haludiag.datagen")

DEFAULT_TASK_MIX = {"Summary": 1 / 3, "Logical": 1 / 3, "Math": 1 / 3}
# One third per augmentation family; context splits evenly into add/delete.
DEFAULT_STRATEGY_MIX = {
    "none": 0.0,
    "context_add": 1 / 6,
    "context_delete": 1 / 6,
    "inject": 1 / 3,
    "fuzzy_replace": 1 / 3,
}

_SUMMARY_ONLY = ("fuzzy_replace",)


class QuotaScheduler:
    """Deterministic weighted round-robin with exact long-run proportions.

    At each draw the key with the largest quota deficit wins; ties resolve in
    declaration order.  After n draws every key's count is within one of
    ``weight * n``.
    """

    def __init__(self, weights: Mapping[str, float]):
        items = [(k, w) for k, w in weights.items() if w > 0]
        if not items:
            raise ValueError("at least one positive weight is required")
        total = sum(w for _, w in items)
        self._weights = [(k, w / total) for k, w in items]
        self._counts: Counter[str] = Counter()
        self._drawn = 0

    def next(self) -> str:
        self._drawn += 1
        best_key, best_deficit = None, float("-inf")
        for key, weight in self._weights:
            deficit = weight * self._drawn - self._counts[key]
            if deficit > best_deficit:
                best_key, best_deficit = key, deficit
        assert best_key is not None
        self._counts[best_key] += 1
        return best_key

    @property
    def counts(self) -> dict[str, int]:
        return dict(self._counts)


@dataclass
class PipelineConfig:
    corpus_path: str
    out_path: str
    workdir: str | None = None
    seed: int = 0
    max_samples: int | None = None
    max_context_chars: int = 1500
    variants_per_seed: int = 1
    distractor_pool_size: int = 8
    task_mix: dict = field(default_factory=lambda: dict(DEFAULT_TASK_MIX))
    strategy_mix: dict = field(default_factory=lambda: dict(DEFAULT_STRATEGY_MIX))
    quality_threshold: float = 0.6
    confidence_threshold: float = 0.6
    filter_rules: FilterRules = field(default_factory=FilterRules)
    n_judges: int = 2
    resume: bool = True

    @classmethod
    def from_dict(cls, obj: dict, **overrides) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in obj.items() if k in known}
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        if isinstance(kwargs.get("filter_rules"), dict):
            kwargs["filter_rules"] = FilterRules(**kwargs["filter_rules"])
        return cls(**kwargs)

    def fingerprint_payload(self) -> dict:
        payload = {
            "seed": self.seed,
            "max_samples": self.max_samples,
            "max_context_chars": self.max_context_chars,
            "variants_per_seed": self.variants_per_seed,
            "distractor_pool_size": self.distractor_pool_size,
            "task_mix": self.task_mix,
            "strategy_mix": self.strategy_mix,
            "quality_threshold": self.quality_threshold,
            "confidence_threshold": self.confidence_threshold,
            "filter_rules": vars(self.filter_rules),
            "n_judges": self.n_judges,
        }
        return payload


@dataclass
class PipelineResult:
    dataset_path: Path
    stats_path: Path
    stats: dict
    counters: dict
    records: list[DatasetRecord]


class _Checkpoint:
    """Stage manifest: which stage files are complete for which fingerprint."""

    def __init__(self, workdir: Path, run_fingerprint: str, resume: bool):
        self.path = workdir / "checkpoint.json"
        self.fingerprint = run_fingerprint
        self.state: dict = {"fingerprint": run_fingerprint, "stages": {}}
        if resume and self.path.is_file():
            try:
                loaded = json.loads(self.path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                loaded = None
            if loaded and loaded.get("fingerprint") == run_fingerprint:
                self.state = loaded

    def complete(self, stage: str) -> bool:
        return bool(self.state["stages"].get(stage, {}).get("complete"))

    def counters_for(self, stage: str) -> dict:
        return self.state["stages"].get(stage, {}).get("counters", {})

    def mark(self, stage: str, counters: dict) -> None:
        self.state["stages"][stage] = {"complete": True, "counters": counters}
        atomic_write_json(self.path, self.state)


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))


def _read_jsonl(path: Path) -> list[dict]:
    with path.open(encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def _build_inputs(cfg: PipelineConfig, backend: Backend | None, embedder, judges, quality_backend):
    backend = backend or MockBackend(cfg.seed)
    embedder = embedder or backend
    quality_backend = quality_backend or backend
    if judges is None:
        judges = [LlmJudge(f"judge-{tag}", backend) for tag in ("a", "b")[: max(1, cfg.n_judges)]]
        while len(judges) < cfg.n_judges:
            judges.append(LlmJudge(f"judge-{len(judges)}", backend))
    return backend, embedder, judges, quality_backend


def run_pipeline(
    cfg: PipelineConfig,
    backend: Backend | None = None,
    embedder: Backend | None = None,
    judges: Sequence[LlmJudge | ClassifierJudge] | None = None,
    quality_backend: Backend | None = None,
) -> PipelineResult:
    """Run corpus -> filter/split -> seeds -> augment -> verify -> enrich and
    write the dataset JSONL plus run statistics.

    Per-sample failures are counted, never fatal; an unreadable corpus is a
    startup error.
    """
    corpus_path = Path(cfg.corpus_path)
    if not corpus_path.is_file():
        raise FileNotFoundError(f"corpus not readable: {corpus_path}")
    out_path = Path(cfg.out_path)
    workdir = Path(cfg.workdir) if cfg.workdir else Path(str(out_path) + ".work")
    workdir.mkdir(parents=True, exist_ok=True)

    backend, embedder, judges, quality_backend = _build_inputs(
        cfg, backend, embedder, judges, quality_backend
    )

    corpus_digest = hashlib.sha256(corpus_path.read_bytes()).hexdigest()
    run_fp = fingerprint({"config": cfg.fingerprint_payload(), "corpus": corpus_digest})
    checkpoint = _Checkpoint(workdir, run_fp, cfg.resume)
    counters: dict = {}

    # Stage 1: filter, split, and task assignment.
    contexts_path = workdir / "01_contexts.jsonl"
    if checkpoint.complete("contexts"):
        context_rows = _read_jsonl(contexts_path)
        counters["contexts"] = checkpoint.counters_for("contexts")
    else:
        corpus_filter = CorpusFilter(cfg.filter_rules)
        task_scheduler = QuotaScheduler(cfg.task_mix)
        context_rows = []
        raw_paragraphs = 0
        for paragraph in read_corpus(corpus_path):
            raw_paragraphs += 1
            reason = corpus_filter.check(paragraph)
            if reason is not None:
                corpus_filter.drops[reason] += 1
                continue
            corpus_filter.kept += 1
            for chunk in recursive_split(paragraph, cfg.max_context_chars):
                context_rows.append({"context": chunk, "task_type": task_scheduler.next()})
        if cfg.max_samples is not None:
            context_rows = context_rows[: cfg.max_samples]
        counters["contexts"] = {
            "paragraphs": raw_paragraphs,
            "kept": corpus_filter.kept,
            "dropped": dict(corpus_filter.drops),
            "contexts": len(context_rows),
        }
        _write_jsonl(contexts_path, context_rows)
        checkpoint.mark("contexts", counters["contexts"])

    # Stage 2: seed generation.
    seeds_path = workdir / "02_seeds.jsonl"
    if checkpoint.complete("seeds"):
        seed_rows = _read_jsonl(seeds_path)
        counters["seeds"] = checkpoint.counters_for("seeds")
    else:
        seed_rows = []
        dropped: Counter[str] = Counter()
        for row in context_rows:
            task = TaskType(row["task_type"])
            try:
                seed = generate_seed(row["context"], task, backend)
            except SeedError as exc:
                dropped[exc.reason] += 1
                continue
            except BackendError as exc:
                logger.warning("seed generation failed: %s", exc)
                dropped["backend_error"] += 1
                continue
            seed_rows.append(seed.to_dict())
        counters["seeds"] = {
            "attempted": len(context_rows),
            "emitted": len(seed_rows),
            "dropped": dict(dropped),
        }
        _write_jsonl(seeds_path, seed_rows)
        checkpoint.mark("seeds", counters["seeds"])

    # Stage 3: augmentation with per-task strategy quotas.
    augmented_path = workdir / "03_augmented.jsonl"
    if checkpoint.complete("augment"):
        augmented_rows = _read_jsonl(augmented_path)
        counters["augment"] = checkpoint.counters_for("augment")
    else:
        all_contexts = [row["context"] for row in context_rows]
        schedulers = {task: _strategy_scheduler(cfg.strategy_mix, task) for task in TaskType}
        augmented_rows = []
        dropped = Counter()
        attempted = 0
        for index, row in enumerate(seed_rows):
            seed = SeedSample.from_dict(row)
            for _ in range(max(1, cfg.variants_per_seed)):
                attempted += 1
                strategy = schedulers[seed.task_type].next()
                try:
                    sample = _apply_strategy(
                        strategy, seed, index, all_contexts, backend, embedder, cfg
                    )
                except AugmentationError as exc:
                    dropped[exc.reason] += 1
                    continue
                except BackendError as exc:
                    logger.warning("augmentation failed: %s", exc)
                    dropped["backend_error"] += 1
                    continue
                augmented_rows.append(sample.to_dict())
        counters["augment"] = {
            "attempted": attempted,
            "emitted": len(augmented_rows),
            "dropped": dict(dropped),
        }
        _write_jsonl(augmented_path, augmented_rows)
        checkpoint.mark("augment", counters["augment"])

    # Stage 4: quality verification.
    verified_path = workdir / "04_verified.jsonl"
    quarantine_path = workdir / "quarantine.jsonl"
    if checkpoint.complete("verify"):
        verified_rows = _read_jsonl(verified_path)
        counters["verify"] = checkpoint.counters_for("verify")
    else:
        verified_rows = []
        quarantined_rows = []
        rejected: Counter[str] = Counter()
        for row in augmented_rows:
            sample = AugmentedSample.from_dict(row)
            try:
                verdict = verify_quality(
                    sample,
                    judges,
                    quality_backend,
                    quality_threshold=cfg.quality_threshold,
                    confidence_threshold=cfg.confidence_threshold,
                )
            except (AllJudgesFailed, JudgeError) as exc:
                quarantined_rows.append({"sample": row, "reason": str(exc)})
                continue
            if not verdict.accepted:
                rejected[verdict.reason] += 1
                continue
            verified_rows.append({"sample": row, "verdict": verdict.to_dict()})
        counters["verify"] = {
            "attempted": len(augmented_rows),
            "accepted": len(verified_rows),
            "rejected": dict(rejected),
            "quarantined": len(quarantined_rows),
        }
        _write_jsonl(verified_path, verified_rows)
        _write_jsonl(quarantine_path, quarantined_rows)
        checkpoint.mark("verify", counters["verify"])

    # Stage 5: metadata enrichment and final emission.
    if checkpoint.complete("enrich") and out_path.is_file():
        record_dicts = _read_jsonl(out_path)
        records = [DatasetRecord.from_dict(r) for r in record_dicts]
        counters["enrich"] = checkpoint.counters_for("enrich")
    else:
        records = []
        dropped = Counter()
        for row in verified_rows:
            sample = AugmentedSample.from_dict(row["sample"])
            verdict = QualityVerdict.from_dict(row["verdict"])
            record_id = f"rec-{len(records):06d}"
            try:
                record = enrich_metadata(sample, verdict, backend, record_id)
            except EnrichmentError as exc:
                dropped[exc.reason] += 1
                continue
            except BackendError as exc:
                logger.warning("enrichment failed: %s", exc)
                dropped["backend_error"] += 1
                continue
            records.append(record)
        counters["enrich"] = {
            "attempted": len(verified_rows),
            "emitted": len(records),
            "dropped": dict(dropped),
        }
        _write_jsonl(out_path, [r.to_dict() for r in records])
        checkpoint.mark("enrich", counters["enrich"])

    stats = compute_stats(records, [TaskType(r["task_type"]) for r in context_rows], counters)
    stats_path = Path(str(out_path) + ".stats.json")
    atomic_write_json(stats_path, stats)
    return PipelineResult(
        dataset_path=out_path,
        stats_path=stats_path,
        stats=stats,
        counters=counters,
        records=records,
    )


def _strategy_scheduler(strategy_mix: Mapping[str, float], task: TaskType) -> QuotaScheduler:
    eligible = dict(strategy_mix)
    if task is not TaskType.SUMMARY:
        for key in _SUMMARY_ONLY:
            eligible.pop(key, None)
    return QuotaScheduler(eligible)


def _apply_strategy(
    strategy: str,
    seed: SeedSample,
    seed_index: int,
    all_contexts: Sequence[str],
    backend: Backend,
    embedder: Backend,
    cfg: PipelineConfig,
) -> AugmentedSample:
    if strategy == "none":
        return no_augmentation(seed)
    if strategy == "context_add":
        pool = _distractor_pool(all_contexts, seed_index, cfg.distractor_pool_size)
        if not pool:
            raise AugmentationError("empty_distractor_pool")
        return augment_context(seed, ContextMode.ADD, embedder, pool)
    if strategy == "context_delete":
        return augment_context(seed, ContextMode.DELETE, embedder)
    if strategy == "inject":
        mode = InjectMode.DIRECT if seed.task_type is TaskType.SUMMARY else InjectMode.REASONING_CHAIN
        return inject_hallucination(seed, mode, backend)
    if strategy == "fuzzy_replace":
        return fuzzy_replace(seed, backend)
    raise ValueError(f"unknown strategy {strategy!r}")


def _distractor_pool(all_contexts: Sequence[str], index: int, size: int) -> list[str]:
    """Deterministic pool: the next ``size`` contexts after ``index``, cyclic."""
    n = len(all_contexts)
    if n <= 1:
        return []
    picks = []
    for offset in range(1, n):
        picks.append(all_contexts[(index + offset) % n])
        if len(picks) >= size:
            break
    return picks


def _token_count(text: str) -> int:
    return len(text.split())


def compute_stats(
    records: Sequence[DatasetRecord], context_tasks: Sequence[TaskType], counters: dict
) -> dict:
    """Per-task dataset statistics plus the stage counters.

    Context length is reported both in characters and whitespace tokens.
    """
    per_task: dict[str, dict] = {}
    for task in TaskType:
        task_records = [r for r in records if r.task_type is task]
        contexts = [r.context for r in task_records]
        per_task[task.value] = {
            "raw_contexts": sum(1 for t in context_tasks if t is task),
            "total": len(task_records),
            "halu": sum(1 for r in task_records if r.label is Label.HALU),
            "non_halu": sum(1 for r in task_records if r.label is Label.NON_HALU),
            "avg_context_chars": (
                sum(len(c) for c in contexts) / len(contexts) if contexts else 0.0
            ),
            "avg_context_tokens": (
                sum(_token_count(c) for c in contexts) / len(contexts) if contexts else 0.0
            ),
        }
    totals = {
        "raw_contexts": len(context_tasks),
        "total": len(records),
        "halu": sum(1 for r in records if r.label is Label.HALU),
        "non_halu": sum(1 for r in records if r.label is Label.NON_HALU),
    }
    return {
        "per_task": per_task,
        "totals": totals,
        "stage_counters": counters,
        # One shared segmenter produced every sentence annotation in this set.
        "segmenter": "rule-based/terminal-punctuation-v1",
    }


def format_stats_table(stats: dict) -> str:
    """Aligned plain-text statistics table (per task: raw, avg length, totals)."""
    rows = [("task", "raw", "avg_chars", "total", "halu", "non_halu")]
    for task, entry in stats["per_task"].items():
        rows.append(
            (
                task,
                str(entry["raw_contexts"]),
                f"{entry['avg_context_chars']:.0f}",
                str(entry["total"]),
                str(entry["halu"]),
                str(entry["non_halu"]),
            )
        )
    totals = stats["totals"]
    rows.append(
        (
            "Total",
            str(totals["raw_contexts"]),
            "",
            str(totals["total"]),
            str(totals["halu"]),
            str(totals["non_halu"]),
        )
    )
    widths = [max(len(row[col]) for row in rows) for col in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows
    )
