"""Controlled augmentation of seed samples.

Context augmentation perturbs the evidence (adding a distractor keeps the
answer supported; deleting the supporting sentence breaks it).  Hallucination
injection and fuzzy replacement perturb the response itself via the backend
and verify the returned edits: every edited sentence must appear verbatim in
the new response (after normalization) and must not appear in the original,
otherwise the sample is discarded with a reason code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .. import prompts
from ..llm import Backend
from ..report import find_json_object
from ..reward import Label
from ..textspan import normalize, split_sentences
from .seeds import SeedSample, TaskType


class Strategy(str, Enum):
    CONTEXT_ADD = "ContextAdd"
    CONTEXT_DELETE = "ContextDelete"
    DIRECT_INJECT = "DirectInject"
    REASONING_CHAIN_INJECT = "ReasoningChainInject"
    FUZZY_REPLACE = "FuzzyReplace"
    NONE = "None"


class ContextMode(Enum):
    ADD = "add"
    DELETE = "delete"


class InjectMode(Enum):
    DIRECT = "direct"
    REASONING_CHAIN = "reasoning_chain"


@dataclass(frozen=True)
class AugmentationTag:
    strategy: Strategy
    detail: str = ""

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value, "detail": self.detail}

    @classmethod
    def from_dict(cls, obj: dict) -> "AugmentationTag":
        return cls(Strategy(obj["strategy"]), obj.get("detail", ""))


@dataclass(frozen=True)
class AugmentedSample:
    """A seed after one augmentation: the (possibly rewritten) response, the
    label the construction implies, and the hallucinated sentences when any."""

    seed: SeedSample
    response: str
    expected_label: Label
    tag: AugmentationTag
    halu_sentences: tuple[str, ...] = ()
    original_answer: str = ""

    def to_dict(self) -> dict:
        return {
            "seed": self.seed.to_dict(),
            "response": self.response,
            "expected_label": self.expected_label.value,
            "tag": self.tag.to_dict(),
            "halu_sentences": list(self.halu_sentences),
            "original_answer": self.original_answer,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AugmentedSample":
        return cls(
            seed=SeedSample.from_dict(obj["seed"]),
            response=obj["response"],
            expected_label=Label(obj["expected_label"]),
            tag=AugmentationTag.from_dict(obj["tag"]),
            halu_sentences=tuple(obj.get("halu_sentences", [])),
            original_answer=obj.get("original_answer", ""),
        )


class AugmentationError(Exception):
    """Augmentation output failed verification; discard with a reason code."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def no_augmentation(seed: SeedSample) -> AugmentedSample:
    return AugmentedSample(
        seed=seed,
        response=seed.response_text,
        expected_label=Label.NON_HALU,
        tag=AugmentationTag(Strategy.NONE),
        original_answer=seed.response_text,
    )


def _cosine_argmax(query_vec: np.ndarray, candidates: Sequence[np.ndarray]) -> int:
    sims = [float(np.dot(query_vec, c)) for c in candidates]
    return int(np.argmax(sims))


def augment_context(
    seed: SeedSample,
    mode: ContextMode,
    embedder: Backend,
    pool: Sequence[str] = (),
) -> AugmentedSample:
    """Add the most context-similar distractor paragraph (label unchanged) or
    delete the context sentence most similar to the answer (label flips to
    Halu: the answer is no longer supported)."""
    if mode is ContextMode.ADD:
        if not pool:
            raise ValueError("context addition requires a non-empty distractor pool")
        vectors = embedder.embed([seed.context] + list(pool))
        best = _cosine_argmax(vectors[0], vectors[1:])
        distractor = pool[best]
        new_seed = replace(seed, context=f"{seed.context}\n\n{distractor}")
        return AugmentedSample(
            seed=new_seed,
            response=seed.response_text,
            expected_label=Label.NON_HALU,
            tag=AugmentationTag(Strategy.CONTEXT_ADD, f"added distractor: {distractor[:80]}"),
            original_answer=seed.response_text,
        )

    spans = split_sentences(seed.context)
    if len(spans) < 2:
        raise AugmentationError("context_too_short_for_delete")
    vectors = embedder.embed([seed.answer] + [s.text for s in spans])
    target = _cosine_argmax(vectors[0], vectors[1:])
    deleted = spans[target]
    new_context = (seed.context[: deleted.start] + seed.context[deleted.end :]).strip()
    if not new_context:
        raise AugmentationError("context_emptied_by_delete")

    response = seed.response_text
    response_spans = split_sentences(response)
    if response_spans:
        deleted_vec = embedder.embed([deleted.text])[0]
        response_vecs = embedder.embed([s.text for s in response_spans])
        hit = response_spans[_cosine_argmax(deleted_vec, response_vecs)]
        halu_sentences = (hit.text,)
    else:
        halu_sentences = (normalize(response),)

    new_seed = replace(seed, context=new_context)
    return AugmentedSample(
        seed=new_seed,
        response=response,
        expected_label=Label.HALU,
        tag=AugmentationTag(
            Strategy.CONTEXT_DELETE, f"deleted supporting sentence: {deleted.text[:80]}"
        ),
        halu_sentences=halu_sentences,
        original_answer=response,
    )


def _verified_edit(completion: str, original_response: str) -> tuple[str, tuple[str, ...]]:
    """Parse and verify an edit exchange; returns (response, normalized edited
    sentences) or raises AugmentationError with a reason code."""
    obj = find_json_object(completion)
    if obj is None:
        raise AugmentationError("unparseable_edit")
    response = obj.get("response")
    edited = obj.get("edited_sentences")
    if not isinstance(response, str) or not response.strip():
        raise AugmentationError("missing_response")
    if not isinstance(edited, list) or not edited or not all(isinstance(e, str) for e in edited):
        raise AugmentationError("missing_edited_sentences")

    norm_response = normalize(response)
    norm_original = normalize(original_response)
    if norm_response == norm_original:
        raise AugmentationError("response_unchanged")
    normalized = []
    for sentence in edited:
        norm = normalize(sentence)
        if not norm or norm not in norm_response:
            raise AugmentationError("sentence_not_in_response")
        if norm in norm_original:
            raise AugmentationError("sentence_unchanged")
        normalized.append(norm)
    return response, tuple(normalized)


def inject_hallucination(
    seed: SeedSample, mode: InjectMode, backend: Backend
) -> AugmentedSample:
    """Introduce an error into a correct response: entity-level edits for
    summaries, a perturbed step for reasoning chains."""
    if mode is InjectMode.DIRECT:
        if seed.task_type is not TaskType.SUMMARY:
            raise ValueError("direct injection applies to Summary tasks only")
        original = seed.answer
        template, strategy = "inject_direct", Strategy.DIRECT_INJECT
    else:
        if not seed.cot_answer:
            raise ValueError("reasoning-chain injection requires a reasoning chain")
        original = seed.cot_answer
        template, strategy = "inject_chain", Strategy.REASONING_CHAIN_INJECT

    prompt = prompts.fill(
        prompts.load(template), {"context": seed.context, "answer": original}
    )
    completion = backend.chat([{"role": "user", "content": prompt}]).completion
    response, edited = _verified_edit(completion, original)
    return AugmentedSample(
        seed=seed,
        response=response,
        expected_label=Label.HALU,
        tag=AugmentationTag(strategy, f"edited: {edited[0][:80]}"),
        halu_sentences=edited,
        original_answer=original,
    )


def fuzzy_replace(seed: SeedSample, backend: Backend) -> AugmentedSample:
    """Soften precise information into vague expressions.  Summaries only:
    the output stays plausible but is no longer strictly faithful, so it is
    emitted as Halu with the strategy tag preserved."""
    if seed.task_type is not TaskType.SUMMARY:
        raise ValueError("fuzzy replacement applies to Summary tasks only")
    prompt = prompts.fill(
        prompts.load("fuzzy_replace"), {"context": seed.context, "answer": seed.answer}
    )
    completion = backend.chat([{"role": "user", "content": prompt}]).completion
    response, edited = _verified_edit(completion, seed.answer)
    return AugmentedSample(
        seed=seed,
        response=response,
        expected_label=Label.HALU,
        tag=AugmentationTag(Strategy.FUZZY_REPLACE, f"softened: {edited[0][:80]}"),
        halu_sentences=edited,
        original_answer=seed.answer,
    )
