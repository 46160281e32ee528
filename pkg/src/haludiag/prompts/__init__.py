"""Prompt assets: loading, brace-safe filling, and payload block helpers.

Templates live as editable text files under ``assets/``.  Placeholders use
``{name}`` tokens but are substituted by plain replacement, never
``str.format``, so payload text containing braces is safe.  Stage prompts
carry a distinctive ``### ...`` header line and wrap inputs in
``[[NAME]] ... [[/NAME]]`` blocks; the deterministic mock backend keys its
behavior off those markers.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Mapping

# Header lines identifying each exchange kind.
DIAGNOSE_INPUT_HEADER = "### Input Data"
DETECT_HEADER = "### Hallucination Detection Step"
LOCATE_HEADER = "### Hallucination Localization Step"
FIX_HEADER = "### Answer Correction Step"
INSTRUCTION_HEADER = "### Instruction Request"
ANSWER_HEADER = "### Answer Request"
INJECT_DIRECT_HEADER = "### Hallucination Injection Request"
INJECT_CHAIN_HEADER = "### Reasoning Perturbation Request"
FUZZY_HEADER = "### Precision Softening Request"
JUDGE_HEADER = "### Label Judgment Request"
QUALITY_HEADER = "### Quality Rubric Request"
TRACE_HEADER = "### Reasoning Trace Request"

DIAGNOSE_EXPERT_MARK = "Hallucination Diagnosis Expert"


@lru_cache(maxsize=None)
def load(name: str) -> str:
    """Read a prompt asset verbatim (UTF-8, bytes preserved)."""
    return resources.files("haludiag").joinpath(f"prompts/assets/{name}.txt").read_text("utf-8")


def fill(template: str, values: Mapping[str, str]) -> str:
    """Substitute ``{key}`` tokens by literal replacement (brace safe)."""
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def payload_block(name: str, value: str) -> str:
    return f"[[{name}]]\n{value}\n[[/{name}]]"


def extract_payload(text: str, name: str) -> str | None:
    """Pull the contents of a ``[[NAME]] ... [[/NAME]]`` block, if present."""
    match = re.search(
        r"\[\[" + re.escape(name) + r"\]\]\n(.*?)\n\[\[/" + re.escape(name) + r"\]\]",
        text,
        re.DOTALL,
    )
    return match.group(1) if match else None


def extract_line_value(text: str, key: str) -> str | None:
    """Value of a ``Key: value`` line, e.g. ``Task type: Summary``."""
    match = re.search(rf"^{re.escape(key)}:\s*(.+)$", text, re.MULTILINE)
    return match.group(1).strip() if match else None
