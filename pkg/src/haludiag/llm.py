"""Pluggable chat/embedding backends.

``HttpBackend`` speaks the de-facto chat-completions wire protocol
(``POST {base_url}/v1/chat/completions`` and ``/v1/embeddings``) with
exponential-backoff retries, a hard in-flight cap, and bearer auth from an
environment variable named in config.  ``MockBackend`` is a fully
deterministic stand-in: given the same seed and messages it produces
byte-identical completions, which makes every pipeline and harness test
reproducible offline.  The mock recognizes the toolkit's stage prompts by
their header lines and fabricates well-formed stage output from the payload
blocks; its "model" is a lexical-support heuristic — content words of the
response that never appear in the context are treated as hallucinated.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
import requests

from . import prompts
from .metrics import content_words
from .report import Conclusion, DiagnosisReport, serialize_report
from .textspan import split_sentences

Message = dict  # {"role": ..., "content": ...}

_VALID_ROLES = ("system", "user", "assistant")


class BackendError(Exception):
    pass


class TransportError(BackendError):
    """Transient failure that survived every retry."""


class PermanentError(BackendError):
    """Non-retryable HTTP error (4xx other than 429)."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"HTTP {status}: {detail}" if detail else f"HTTP {status}")
        self.status = status


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = "http://localhost:8000"
    model_name: str = "default"
    api_key_env: str = ""
    max_in_flight: int = 4
    timeout_s: float = 60.0
    retries: int = 3
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024
    backoff_base_s: float = 0.5

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if not 0 <= self.retries <= 10:
            raise ValueError("retries must be between 0 and 10")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    total_tokens: int = 0


@dataclass(frozen=True)
class ChatExchange:
    messages: tuple[Message, ...]
    completion: str
    usage: Usage = Usage()
    latency_ms: float = 0.0
    attempts: int = 1


def _validate_messages(messages: Sequence[Message]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")
    previous = None
    for i, message in enumerate(messages):
        role, content = message.get("role"), message.get("content")
        if role not in _VALID_ROLES:
            raise ValueError(f"message {i}: invalid role {role!r}")
        if not isinstance(content, str):
            raise ValueError(f"message {i}: content must be a string")
        if role == "system" and i > 0:
            raise ValueError("system message only allowed at the start")
        if role != "system" and role == previous:
            raise ValueError(f"message {i}: consecutive {role!r} roles")
        previous = role


def _last_user_content(messages: Sequence[Message]) -> str:
    for message in reversed(messages):
        if message["role"] == "user":
            return message["content"]
    return ""


def _system_content(messages: Sequence[Message]) -> str:
    if messages and messages[0]["role"] == "system":
        return messages[0]["content"]
    return ""


def _stable_int(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class Backend(Protocol):
    def chat(self, messages: Sequence[Message]) -> ChatExchange: ...

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


# A transport takes (url, payload, headers, timeout) and returns
# (status_code, parsed_body); it raises requests.RequestException on
# network-level failure.  Injectable for tests.
Transport = Callable[[str, dict, dict, float], tuple[int, dict]]


def _requests_transport(session: requests.Session) -> Transport:
    def post(url: str, payload: dict, headers: dict, timeout: float) -> tuple[int, dict]:
        response = session.post(url, json=payload, headers=headers, timeout=timeout)
        try:
            body = response.json()
        except ValueError:
            body = {}
        return response.status_code, body

    return post


class HttpBackend:
    """Chat-completions client with retries, backoff, and an in-flight cap.

    Safe to share across threads; the semaphore bounds concurrent transport
    calls at ``cfg.max_in_flight``.
    """

    def __init__(
        self,
        cfg: BackendConfig,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._transport = transport or _requests_transport(requests.Session())
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(cfg.max_in_flight)
        self._rng = random.Random(0x5EED)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _request(self, path: str, payload: dict) -> tuple[dict, int]:
        url = self.cfg.base_url.rstrip("/") + path
        headers = self._headers()
        last_error = "no attempt made"
        for attempt in range(self.cfg.retries + 1):
            try:
                with self._semaphore:
                    status, body = self._transport(url, payload, headers, self.cfg.timeout_s)
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if status == 200:
                    return body, attempt + 1
                if status != 429 and 400 <= status < 500:
                    raise PermanentError(status, str(body)[:200])
                last_error = f"HTTP {status}"
            if attempt < self.cfg.retries:
                # Exponential backoff: nondecreasing base delay plus jitter.
                delay = self.cfg.backoff_base_s * (2**attempt)
                self._sleep(delay + self._rng.uniform(0, delay * 0.1))
        raise TransportError(
            f"request to {url} failed after {self.cfg.retries + 1} attempts: {last_error}"
        )

    def chat(self, messages: Sequence[Message]) -> ChatExchange:
        _validate_messages(messages)
        payload = {
            "model": self.cfg.model_name,
            "messages": list(messages),
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
            "max_tokens": self.cfg.max_tokens,
        }
        started = time.monotonic()
        body, attempts = self._request("/v1/chat/completions", payload)
        latency_ms = (time.monotonic() - started) * 1000
        try:
            completion = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc
        if not isinstance(completion, str):
            raise TransportError("completion content is not a string")
        usage = body.get("usage") or {}
        return ChatExchange(
            messages=tuple(messages),
            completion=completion,
            usage=Usage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                total_tokens=int(usage.get("total_tokens", 0)),
            ),
            latency_ms=latency_ms,
            attempts=attempts,
        )

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        payload = {"model": self.cfg.model_name, "input": list(texts)}
        body, _ = self._request("/v1/embeddings", payload)
        try:
            raw = [np.asarray(item["embedding"], dtype=np.float64) for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embeddings response: {exc}") from exc
        if len(raw) != len(texts):
            raise TransportError("embedding count does not match input count")
        return [_unit(vec) for vec in raw]


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


_MARKERS = ("reportedly", "allegedly", "supposedly", "apparently", "ostensibly")
_VAGUE_MARKERS = ("roughly", "approximately", "loosely")
# Scaffold tokens the mock judge ignores when checking lexical support.
_SCAFFOLD = frozenset({"step", "answer"})
_NUMBER_RE = re.compile(r"\d[\d,]*(?:\.\d+)?")
_STEP_LINE_RE = re.compile(r"^Step \d+:.*$", re.MULTILINE)


def _mock_usage(messages: Sequence[Message], completion: str) -> Usage:
    prompt_tokens = sum(len(m["content"].split()) for m in messages)
    completion_tokens = len(completion.split())
    return Usage(prompt_tokens, completion_tokens, prompt_tokens + completion_tokens)


class MockBackend:
    """Deterministic offline backend.

    Scripted responses are keyed by the exact text of the last user message;
    anything unscripted falls through to a stage-aware generator seeded by
    (seed, messages).  Embeddings are unit-norm bags of per-token hash
    vectors, so cosine similarity tracks lexical overlap.
    """

    embedding_dim = 64

    def __init__(self, seed: int = 0, script: Mapping[str, str] | None = None):
        self.seed = seed
        self._script = {self.script_key(k): v for k, v in (script or {}).items()}
        self._token_cache: dict[str, np.ndarray] = {}

    @staticmethod
    def script_key(last_user_message: str) -> str:
        return hashlib.sha256(last_user_message.encode("utf-8")).hexdigest()

    def chat(self, messages: Sequence[Message]) -> ChatExchange:
        _validate_messages(messages)
        user = _last_user_content(messages)
        scripted = self._script.get(self.script_key(user))
        if scripted is not None:
            completion = scripted
        else:
            rng = random.Random(
                _stable_int(str(self.seed), *(m["content"] for m in messages))
            )
            completion = self._generate(_system_content(messages), user, rng)
        return ChatExchange(
            messages=tuple(messages),
            completion=completion,
            usage=_mock_usage(messages, completion),
            latency_ms=0.0,
        )

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        return [self._embed_one(text) for text in texts]

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is None:
            gen = np.random.default_rng(_stable_int(str(self.seed), "tok", token))
            cached = gen.standard_normal(self.embedding_dim)
            self._token_cache[token] = cached
        return cached

    def _embed_one(self, text: str) -> np.ndarray:
        tokens = [t.lower() for t in re.findall(r"\w+", text)]
        if not tokens:
            tokens = [text or "<empty>"]
        vec = np.zeros(self.embedding_dim)
        for token in tokens:
            vec = vec + self._token_vector(token)
        return _unit(vec)

    # -- stage-aware generation ------------------------------------------

    def _generate(self, system: str, user: str, rng: random.Random) -> str:
        if prompts.INSTRUCTION_HEADER in user:
            return self._gen_instruction(user)
        if prompts.ANSWER_HEADER in user:
            return self._gen_answer(user, rng)
        if prompts.INJECT_DIRECT_HEADER in user:
            return self._gen_edit(user, rng, _MARKERS)
        if prompts.INJECT_CHAIN_HEADER in user:
            return self._gen_chain_edit(user, rng)
        if prompts.FUZZY_HEADER in user:
            return self._gen_fuzzy(user, rng)
        if prompts.JUDGE_HEADER in user:
            return self._gen_judgment(user, rng)
        if prompts.QUALITY_HEADER in user:
            return json.dumps({"score": 80 + rng.randrange(16)})
        if prompts.TRACE_HEADER in user:
            return self._gen_trace(user, rng)
        if prompts.DETECT_HEADER in user:
            context = prompts.extract_payload(user, "CONTEXT") or ""
            answer = prompts.extract_payload(user, "ANSWER") or ""
            return "Yes" if self._unsupported_sentences(context, answer) else "No"
        if prompts.LOCATE_HEADER in user:
            context = prompts.extract_payload(user, "CONTEXT") or ""
            answer = prompts.extract_payload(user, "ANSWER") or ""
            return json.dumps(self._unsupported_sentences(context, answer))
        if prompts.FIX_HEADER in user:
            context = prompts.extract_payload(user, "CONTEXT") or ""
            return self._leading_sentences(context, 2)
        if prompts.DIAGNOSE_EXPERT_MARK in system or prompts.DIAGNOSE_INPUT_HEADER in user:
            return self._gen_diagnosis(user)
        return serialize_report(
            DiagnosisReport(Conclusion.PASS, "No issues found.", (), "")
        )

    @staticmethod
    def _leading_sentences(text: str, count: int) -> str:
        spans = split_sentences(text)
        if not spans:
            return text.strip()[:200]
        return " ".join(text[s.start : s.end] for s in spans[:count])

    def _unsupported_sentences(self, context: str, answer: str) -> list[str]:
        """Raw answer sentences containing a content word absent from context."""
        supported = set(content_words(context)) | _SCAFFOLD
        flagged = []
        for span in split_sentences(answer):
            words = [w for w in content_words(span.text) if not w.isdigit()]
            if any(w not in supported for w in words):
                flagged.append(answer[span.start : span.end])
        return flagged

    def _gen_instruction(self, user: str) -> str:
        task = (prompts.extract_line_value(user, "Task type") or "Summary").lower()
        if task == "logical":
            return "Based only on the passage, state what can be concluded from the facts it presents."
        if task == "math":
            return "Using only the passage, work through the relevant facts step by step and state the result."
        return "Summarize the main points of the passage in one or two sentences."

    def _gen_answer(self, user: str, rng: random.Random) -> str:
        context = prompts.extract_payload(user, "CONTEXT") or ""
        fmt = prompts.extract_line_value(user, "Format") or "direct"
        spans = split_sentences(context)
        if fmt != "reasoning-chain":
            return self._leading_sentences(context, 2)
        if not spans:
            return f"Step 1: {context.strip()[:120]}\nAnswer: {context.strip()[:60]}"
        steps = min(len(spans), 2 + rng.randrange(3))
        lines = [
            f"Step {i + 1}: {context[spans[i].start : spans[i].end]}" for i in range(steps)
        ]
        final_words = spans[steps - 1].text.split()[:8]
        lines.append("Answer: " + " ".join(final_words))
        return "\n".join(lines)

    @staticmethod
    def _insert_marker(sentence: str, marker: str) -> str:
        head, sep, tail = sentence.partition(" ")
        if sep:
            return f"{head} {marker} {tail}"
        return f"{marker} {sentence}"

    def _gen_edit(self, user: str, rng: random.Random, markers: Sequence[str]) -> str:
        answer = prompts.extract_payload(user, "ANSWER") or ""
        spans = split_sentences(answer)
        if not spans:
            return json.dumps({"response": answer, "edited_sentences": []})
        span = spans[rng.randrange(len(spans))]
        raw = answer[span.start : span.end]
        edited = self._insert_marker(raw, rng.choice(list(markers)))
        return json.dumps(
            {"response": answer.replace(raw, edited, 1), "edited_sentences": [edited]},
            ensure_ascii=False,
        )

    def _gen_chain_edit(self, user: str, rng: random.Random) -> str:
        chain = prompts.extract_payload(user, "ANSWER") or ""
        steps = _STEP_LINE_RE.findall(chain)
        if not steps:
            return json.dumps({"response": chain, "edited_sentences": []})
        target = steps[rng.randrange(len(steps))]
        edited = self._insert_marker(target, rng.choice(_MARKERS))
        perturbed = chain.replace(target, edited, 1)
        # The wrong step propagates: the final answer line changes too.
        if "\nAnswer:" in perturbed:
            head, _, tail = perturbed.rpartition("\nAnswer:")
            perturbed = head + "\nAnswer: not" + tail
        return json.dumps(
            {"response": perturbed, "edited_sentences": [edited]}, ensure_ascii=False
        )

    def _gen_fuzzy(self, user: str, rng: random.Random) -> str:
        answer = prompts.extract_payload(user, "ANSWER") or ""
        match = _NUMBER_RE.search(answer)
        if match:
            raw_number = match.group(0)
            value = float(raw_number.replace(",", ""))
            if value >= 10:
                magnitude = 10 ** (len(str(int(value))) - 1)
                rounded = int(round(value / magnitude) * magnitude)
            else:
                rounded = int(round(value)) + 1
            vague = f"nearly {rounded:,}" if "," in raw_number else f"nearly {rounded}"
            response = answer.replace(raw_number, vague, 1)
            for span in split_sentences(response):
                if vague in span.text:
                    return json.dumps(
                        {
                            "response": response,
                            "edited_sentences": [response[span.start : span.end]],
                        },
                        ensure_ascii=False,
                    )
            return json.dumps(
                {"response": response, "edited_sentences": [response]}, ensure_ascii=False
            )
        return self._gen_edit(user, rng, _VAGUE_MARKERS)

    def _gen_judgment(self, user: str, rng: random.Random) -> str:
        context = prompts.extract_payload(user, "CONTEXT") or ""
        response = prompts.extract_payload(user, "RESPONSE") or ""
        label = "Halu" if self._unsupported_sentences(context, response) else "NonHalu"
        return json.dumps({"label": label, "confidence": 75 + rng.randrange(21)})

    def _gen_trace(self, user: str, rng: random.Random) -> str:
        context = prompts.extract_payload(user, "CONTEXT") or ""
        label_match = re.search(r'labeled\s+"([^"]+)"', user)
        label = label_match.group(1) if label_match else "NonHalu"
        sentence_count = max(1, len(split_sentences(context)))
        cited = sorted(rng.sample(range(1, sentence_count + 1), 1 + rng.randrange(min(3, sentence_count))))
        markers = " ".join(f"[S{i}]" for i in cited)
        if label == "Halu":
            return (
                f"The response makes claims that the cited context sentences {markers} "
                "do not support, so it was labeled Halu."
            )
        return (
            f"Every claim in the response is backed by the cited context sentences "
            f"{markers}, so it was labeled NonHalu."
        )

    def _gen_diagnosis(self, user: str) -> str:
        context, query, answer = _parse_diagnose_user(user)
        flagged = self._unsupported_sentences(context, answer)
        if flagged:
            report = DiagnosisReport(
                conclusion=Conclusion.FAIL,
                diagnosis="The answer contains content that the context does not support.",
                hallucinations=tuple(flagged),
                corrected_answer=self._leading_sentences(context, 2),
            )
        else:
            report = DiagnosisReport(
                conclusion=Conclusion.PASS,
                diagnosis="Every statement in the answer is supported by the context.",
                hallucinations=(),
                corrected_answer="",
            )
        return serialize_report(report)


def _parse_diagnose_user(user: str) -> tuple[str, str, str]:
    """Best-effort parse of the fixed single-prompt user layout."""
    context = query = answer = ""
    ctx_start = user.find("Context:\n")
    query_mark = user.rfind("\n\nQuery: ")
    if ctx_start != -1 and query_mark > ctx_start:
        context = user[ctx_start + len("Context:\n") : query_mark]
    answer_mark = user.rfind("\nAnswer: ")
    if query_mark != -1 and answer_mark > query_mark:
        query = user[query_mark + len("\n\nQuery: ") : answer_mark]
    end_mark = user.rfind("\n\n### Begin Execution")
    if answer_mark != -1 and end_mark > answer_mark:
        answer = user[answer_mark + len("\nAnswer: ") : end_mark]
    return context, query, answer
