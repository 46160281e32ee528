"""Hallucination diagnosis toolkit.

Core pieces: the four-field diagnosis-report model and its reward function,
detection/diagnosis evaluation harnesses, a synthetic-data pipeline, and an
HTTP reward service for RL trainers.
"""

__version__ = "0.1.0"

from .report import (
    Conclusion,
    DiagnosisReport,
    FieldFlags,
    ParseOutcome,
    ParseStatus,
    extract_report,
    serialize_report,
)
from .reward import (
    GroundTruth,
    Label,
    RewardBreakdown,
    RewardWeights,
    compute_reward,
    loc_score,
    reward_acc,
    reward_loc,
    reward_struct,
    total_reward,
)
from .textspan import SentenceSpan, containment_hit, normalize, split_sentences, verbatim_fraction

__all__ = [
    "Conclusion",
    "DiagnosisReport",
    "FieldFlags",
    "GroundTruth",
    "Label",
    "ParseOutcome",
    "ParseStatus",
    "RewardBreakdown",
    "RewardWeights",
    "SentenceSpan",
    "__version__",
    "compute_reward",
    "containment_hit",
    "extract_report",
    "loc_score",
    "normalize",
    "reward_acc",
    "reward_loc",
    "reward_struct",
    "serialize_report",
    "split_sentences",
    "total_reward",
    "verbatim_fraction",
]
