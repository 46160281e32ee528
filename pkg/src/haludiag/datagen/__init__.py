"""Four-stage synthetic-data pipeline: seed generation from a raw corpus,
controlled augmentation, ensemble quality verification, and metadata
enrichment into annotated dataset records."""

from .augment import (
    AugmentationError,
    AugmentationTag,
    AugmentedSample,
    ContextMode,
    InjectMode,
    Strategy,
    augment_context,
    fuzzy_replace,
    inject_hallucination,
    no_augmentation,
)
from .corpus import CorpusFilter, FilterRules, read_corpus, recursive_split
from .pipeline import PipelineConfig, PipelineResult, QuotaScheduler, run_pipeline
from .records import DatasetRecord, EnrichmentError, enrich_metadata, validate_dataset
from .seeds import SeedError, SeedSample, TaskType, generate_seed
from .verify import (
    AllJudgesFailed,
    ClassifierJudge,
    JudgeError,
    JudgeVote,
    LlmJudge,
    QualityVerdict,
    verify_quality,
)

__all__ = [
    "AugmentationError",
    "AugmentationTag",
    "AugmentedSample",
    "AllJudgesFailed",
    "ClassifierJudge",
    "ContextMode",
    "CorpusFilter",
    "DatasetRecord",
    "EnrichmentError",
    "FilterRules",
    "InjectMode",
    "JudgeError",
    "JudgeVote",
    "LlmJudge",
    "PipelineConfig",
    "PipelineResult",
    "QualityVerdict",
    "QuotaScheduler",
    "SeedError",
    "SeedSample",
    "Strategy",
    "TaskType",
    "augment_context",
    "enrich_metadata",
    "fuzzy_replace",
    "generate_seed",
    "inject_hallucination",
    "no_augmentation",
    "read_corpus",
    "recursive_split",
    "run_pipeline",
    "validate_dataset",
    "verify_quality",
]
