"""Seed sample generation: (context, query, answer) triples from corpus text.

Each seed costs two backend exchanges: one to write the instruction, one to
answer it.  Logical and math tasks request a step-marked reasoning chain and
retain both the direct answer and the full chain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .. import prompts
from ..llm import Backend


class TaskType(str, Enum):
    SUMMARY = "Summary"
    LOGICAL = "Logical"
    MATH = "Math"


STEP_RE = re.compile(r"^Step \d+:", re.MULTILINE)
_ANSWER_LINE_RE = re.compile(r"^Answer:[ \t]*(.*)$", re.MULTILINE)


class SeedError(Exception):
    """Seed generation produced unusable output; the sample is skipped."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class SeedSample:
    context: str
    query: str
    answer: str
    cot_answer: str | None
    task_type: TaskType

    def __post_init__(self) -> None:
        if not (self.context and self.query and self.answer):
            raise ValueError("context, query, and answer must be non-empty")

    @property
    def response_text(self) -> str:
        """The response a diagnosis model would inspect: the reasoning chain
        when one exists, the direct answer otherwise."""
        return self.cot_answer if self.cot_answer else self.answer

    def to_dict(self) -> dict:
        return {
            "context": self.context,
            "query": self.query,
            "answer": self.answer,
            "cot_answer": self.cot_answer,
            "task_type": self.task_type.value,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SeedSample":
        return cls(
            context=obj["context"],
            query=obj["query"],
            answer=obj["answer"],
            cot_answer=obj.get("cot_answer"),
            task_type=TaskType(obj["task_type"]),
        )


def generate_seed(context: str, task_type: TaskType, backend: Backend) -> SeedSample:
    """Generate one seed sample with an instruction exchange and an answer
    exchange.  Raises SeedError when the output violates the prompt contract
    (no step markers, empty answer); backend errors propagate."""
    instruction_prompt = prompts.fill(
        prompts.load("gen_instruction"),
        {"task_type": task_type.value, "context": context},
    )
    query = backend.chat([{"role": "user", "content": instruction_prompt}]).completion.strip()
    if not query:
        raise SeedError("empty_query")

    if task_type is TaskType.SUMMARY:
        answer_prompt = prompts.fill(
            prompts.load("gen_answer_direct"),
            {"task_type": task_type.value, "context": context, "query": query},
        )
        answer = backend.chat([{"role": "user", "content": answer_prompt}]).completion.strip()
        if not answer:
            raise SeedError("empty_answer")
        return SeedSample(context, query, answer, None, task_type)

    answer_prompt = prompts.fill(
        prompts.load("gen_answer_chain"),
        {"task_type": task_type.value, "context": context, "query": query},
    )
    chain = backend.chat([{"role": "user", "content": answer_prompt}]).completion.strip()
    if not STEP_RE.search(chain):
        raise SeedError("missing_step_markers")
    answer_match = None
    for answer_match in _ANSWER_LINE_RE.finditer(chain):
        pass
    if answer_match is None:
        raise SeedError("missing_answer_line")
    answer = answer_match.group(1).strip()
    if not answer:
        raise SeedError("empty_answer")
    return SeedSample(context, query, answer, chain, task_type)
