import json
import random

import pytest

from haludiag import prompts
from haludiag.llm import BackendConfig, HttpBackend, MockBackend, TransportError
from haludiag.metrics import LexicalOverlapScorer
from haludiag.report import Conclusion, DiagnosisReport, serialize_report
from haludiag.reward import Label
from haludiag.runner import (
    BenchmarkItem,
    build_single_prompt_messages,
    diagnose_pipeline,
    diagnose_single_prompt,
    evaluate_detection,
    evaluate_diagnosis,
    load_benchmark,
    write_run_log,
)

from conftest import CountingMockBackend, write_benchmark

SUPPORTED_ITEM = BenchmarkItem(
    id="ok",
    context="The red rose bloomed in May. The garden had ten beds.",
    query="What bloomed?",
    answer="The red rose bloomed in May.",
)
UNSUPPORTED_ITEM = BenchmarkItem(
    id="bad",
    context="The red rose bloomed in May.",
    query="What bloomed?",
    answer="The pink tulip wilted in March.",
)


def _exchange(messages, completion):
    from haludiag.llm import ChatExchange, Usage

    return ChatExchange(messages=tuple(messages), completion=completion, usage=Usage())


class StaticBackend:
    """Always returns the same completion; counts calls."""

    def __init__(self, completion: str):
        self.completion = completion
        self.calls = 0

    def chat(self, messages):
        self.calls += 1
        return _exchange(messages, self.completion)

    def embed(self, texts):
        raise NotImplementedError


class FailingBackend:
    def chat(self, messages):
        raise TransportError("down")

    def embed(self, texts):
        raise TransportError("down")


class TestLoader:
    def test_field_aliases(self, tmp_path):
        path = tmp_path / "b.jsonl"
        rows = [
            {"id": 1, "passage": "ctx", "question": "q", "answer": "a", "label": "PASS"},
            {"context": "ctx2", "query": "q2", "response": "a2", "label": "Halu",
             "halu_sentences": ["a2"]},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
        items, skipped = load_benchmark(path)
        assert skipped == []
        assert items[0].context == "ctx" and items[0].label is Label.NON_HALU
        assert items[1].query == "q2" and items[1].label is Label.HALU
        assert items[1].gt_sentences == ("a2",)

    def test_label_variants(self, tmp_path):
        path = tmp_path / "b.jsonl"
        rows = [
            {"passage": "c", "question": "q", "answer": "a", "label": value}
            for value in ("FAIL", "fail", "Halu", 1, True, "PASS", "NonHalu", 0, False)
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
        items, skipped = load_benchmark(path)
        assert skipped == []
        expected = [Label.HALU] * 5 + [Label.NON_HALU] * 4
        assert [i.label for i in items] == expected

    def test_malformed_lines_skipped_with_numbers(self, tmp_path):
        path = tmp_path / "b.jsonl"
        path.write_text(
            '{"passage": "c", "question": "q", "answer": "a", "label": "PASS"}\n'
            "not json at all\n"
            '{"passage": "c"}\n',
            encoding="utf-8",
        )
        items, skipped = load_benchmark(path)
        assert len(items) == 1
        assert [line for line, _ in skipped] == [2, 3]

    def test_benchmark_specific_aliases(self, tmp_path):
        path = tmp_path / "b.jsonl"
        row = {"document": "ctx", "query": "q", "summary": "s", "label": "PASS"}
        path.write_text(json.dumps(row), encoding="utf-8")
        items, skipped = load_benchmark(path, benchmark="summeval")
        assert skipped == []
        assert items[0].answer == "s"


class TestSinglePrompt:
    def test_scripted_report_returned(self):
        messages = build_single_prompt_messages(SUPPORTED_ITEM)
        scripted = serialize_report(
            DiagnosisReport(Conclusion.FAIL, "d", ("The red rose bloomed in May.",), "c")
        )
        backend = CountingMockBackend(0, script={messages[1]["content"]: scripted})
        run = diagnose_single_prompt(SUPPORTED_ITEM, backend)
        assert backend.calls == 1
        assert run.report.conclusion is Conclusion.FAIL
        assert run.calls == 1

    def test_prose_only_yields_no_report(self):
        backend = StaticBackend("I could not decide anything today.")
        run = diagnose_single_prompt(SUPPORTED_ITEM, backend)
        assert run.report is None
        assert run.parse_status is not None

    def test_transport_error_marks_item(self):
        run = diagnose_single_prompt(SUPPORTED_ITEM, FailingBackend())
        assert run.error is not None
        assert run.report is None

    def test_request_carries_verbatim_prompt_assets(self):
        captured = {}

        def transport(url, payload, headers, timeout):
            captured["payload"] = payload
            body = {
                "choices": [
                    {"message": {"role": "assistant", "content": serialize_report(
                        DiagnosisReport(Conclusion.PASS, "", (), "")
                    )}}
                ]
            }
            return 200, body

        backend = HttpBackend(BackendConfig(retries=0), transport=transport)
        diagnose_single_prompt(SUPPORTED_ITEM, backend)
        messages = captured["payload"]["messages"]
        assert messages[0]["content"] == prompts.load("diagnose_system")
        assert "Hallucination Diagnosis Expert" in messages[0]["content"]
        assert "### Input Data" in messages[1]["content"]
        assert SUPPORTED_ITEM.context in messages[1]["content"]


class TestPipelineMethod:
    def test_negative_detection_short_circuits(self):
        backend = CountingMockBackend(0)
        run = diagnose_pipeline(SUPPORTED_ITEM, backend)
        assert backend.calls == 1
        assert run.calls == 1
        assert run.report.conclusion is Conclusion.PASS
        assert run.report.hallucinations == ()
        assert run.report.corrected_answer == SUPPORTED_ITEM.answer

    def test_positive_detection_three_calls(self):
        backend = CountingMockBackend(0)
        run = diagnose_pipeline(UNSUPPORTED_ITEM, backend)
        assert backend.calls == 3
        assert run.calls == 3
        assert run.report.conclusion is Conclusion.FAIL
        assert run.report.hallucinations

    def test_positive_scripted_carries_spans_and_fix(self):
        values = {
            "context": UNSUPPORTED_ITEM.context,
            "query": UNSUPPORTED_ITEM.query,
            "answer": UNSUPPORTED_ITEM.answer,
        }
        backend = CountingMockBackend(
            0,
            script={
                prompts.fill(prompts.load("step_detect"), values): "Yes, hallucinated.",
                prompts.fill(prompts.load("step_locate"), values): '["The pink tulip wilted in March."]',
                prompts.fill(prompts.load("step_fix"), values): "The red rose bloomed in May.",
            },
        )
        run = diagnose_pipeline(UNSUPPORTED_ITEM, backend)
        assert backend.calls == 3
        assert not run.degraded
        assert run.report.hallucinations == ("The pink tulip wilted in March.",)
        assert run.report.corrected_answer == "The red rose bloomed in May."

    def test_fixer_failure_degrades(self):
        detect_prompt = prompts.fill(
            prompts.load("step_detect"),
            {
                "context": UNSUPPORTED_ITEM.context,
                "query": UNSUPPORTED_ITEM.query,
                "answer": UNSUPPORTED_ITEM.answer,
            },
        )
        locate_prompt = prompts.fill(
            prompts.load("step_locate"),
            {
                "context": UNSUPPORTED_ITEM.context,
                "query": UNSUPPORTED_ITEM.query,
                "answer": UNSUPPORTED_ITEM.answer,
            },
        )
        fix_prompt = prompts.fill(
            prompts.load("step_fix"),
            {
                "context": UNSUPPORTED_ITEM.context,
                "query": UNSUPPORTED_ITEM.query,
                "answer": UNSUPPORTED_ITEM.answer,
            },
        )
        backend = CountingMockBackend(
            0,
            script={
                detect_prompt: "Yes",
                locate_prompt: '["The pink tulip wilted in March."]',
                fix_prompt: "   ",
            },
        )
        run = diagnose_pipeline(UNSUPPORTED_ITEM, backend)
        assert backend.calls == 3
        assert run.degraded
        assert run.report.conclusion is Conclusion.FAIL
        assert run.report.hallucinations == ("The pink tulip wilted in March.",)
        assert run.report.corrected_answer == ""

    def test_unparseable_locator_degrades_spans(self):
        detect_prompt = prompts.fill(
            prompts.load("step_detect"),
            {
                "context": UNSUPPORTED_ITEM.context,
                "query": UNSUPPORTED_ITEM.query,
                "answer": UNSUPPORTED_ITEM.answer,
            },
        )
        locate_prompt = prompts.fill(
            prompts.load("step_locate"),
            {
                "context": UNSUPPORTED_ITEM.context,
                "query": UNSUPPORTED_ITEM.query,
                "answer": UNSUPPORTED_ITEM.answer,
            },
        )
        backend = CountingMockBackend(
            0, script={detect_prompt: "Yes", locate_prompt: "cannot comply"}
        )
        run = diagnose_pipeline(UNSUPPORTED_ITEM, backend)
        assert run.degraded
        assert run.report.hallucinations == ()
        assert backend.calls == 3


class TestEvaluateDetection:
    def test_oracle_mock_perfect(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        write_benchmark(path, n=6)
        evaluation = evaluate_detection(path, "single", MockBackend(0))
        assert evaluation.report.macro_f1 == 1.0
        assert evaluation.errored == 0

    def test_always_pass_on_balanced_fixture(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        write_benchmark(path, n=6)  # halu_every=2 -> balanced
        always_pass = StaticBackend(
            serialize_report(DiagnosisReport(Conclusion.PASS, "", (), ""))
        )
        evaluation = evaluate_detection(path, "single", always_pass)
        assert evaluation.report.accuracy == 0.5
        assert evaluation.report.halu_recall == 0.0

    def test_malformed_line_counted_and_skipped(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        rows = write_benchmark(path, n=2)
        with path.open("a", encoding="utf-8") as handle:
            handle.write("broken line\n")
        evaluation = evaluate_detection(path, "single", MockBackend(0))
        assert evaluation.report.n == len(rows)
        assert evaluation.skipped == 1

    def test_absent_conclusion_maps_to_wrong_class(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        write_benchmark(path, n=4)
        prose = StaticBackend("no structured output")
        evaluation = evaluate_detection(path, "single", prose)
        assert evaluation.report.accuracy == 0.0

    def test_errored_items_excluded_with_count(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        write_benchmark(path, n=4)
        evaluation_ok = evaluate_detection(path, "single", MockBackend(0))

        class FlakyOnce:
            def __init__(self):
                self.n = 0

            def chat(self, messages):
                self.n += 1
                if self.n == 1:
                    raise TransportError("boom")
                return MockBackend(0).chat(messages)

            def embed(self, texts):
                raise NotImplementedError

        evaluation = evaluate_detection(path, "single", FlakyOnce())
        assert evaluation.errored == 1
        assert evaluation.report.n == evaluation_ok.report.n - 1

    def test_run_log_one_record_per_item(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        rows = write_benchmark(path, n=5)
        evaluation = evaluate_detection(path, "single", MockBackend(0))
        assert len(evaluation.log_records) == len(rows)
        log_path = tmp_path / "log.jsonl"
        write_run_log(log_path, evaluation.log_records)
        assert len(log_path.read_text(encoding="utf-8").splitlines()) == len(rows)

    def test_order_invariance(self, tmp_path):
        rows = write_benchmark(tmp_path / "a.jsonl", n=8)
        rng = random.Random(2)
        shuffled = rows[:]
        rng.shuffle(shuffled)
        (tmp_path / "b.jsonl").write_text(
            "\n".join(json.dumps(r) for r in shuffled), encoding="utf-8"
        )
        a = evaluate_detection(tmp_path / "a.jsonl", "single", MockBackend(0))
        b = evaluate_detection(tmp_path / "b.jsonl", "single", MockBackend(0))
        assert a.report == b.report


def _diagnosis_fixture(tmp_path, n=4):
    path = tmp_path / "diag.jsonl"
    rows = []
    for i in range(n):
        answer = f"The pink tulip number {i} wilted early."
        rows.append(
            {
                "id": f"d{i}",
                "passage": f"The red rose number {i} bloomed in the garden. It was a lovely sight.",
                "question": "What happened?",
                "answer": answer,
                "label": "FAIL",
                "gt_sentences": [answer],
            }
        )
    path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
    return path, rows


class TestEvaluateDiagnosis:
    def test_oracle_mock_perfect(self, tmp_path):
        path, _ = _diagnosis_fixture(tmp_path)
        evaluation = evaluate_diagnosis(path, "single", MockBackend(0), LexicalOverlapScorer())
        card = evaluation.card
        assert card.det_acc == 1.0
        assert card.hit_rate == 1.0
        assert card.span_validity == 1.0
        assert card.mitigation == 1.0

    def test_requires_gt_sentences(self, tmp_path):
        path = tmp_path / "bench.jsonl"
        write_benchmark(path, n=4)  # has NonHalu items without gt_sentences
        with pytest.raises(ValueError, match="gt_sentences"):
            evaluate_diagnosis(path, "single", MockBackend(0), LexicalOverlapScorer())

    def test_paraphrased_spans_lower_sv_not_hr(self, tmp_path):
        path, rows = _diagnosis_fixture(tmp_path, n=1)
        answer = rows[0]["answer"]
        # Same sentence with doubled spaces: normalized containment still
        # hits (HR > 0) but the raw verbatim check fails (SV = 0).
        paraphrased = answer.replace(" ", "  ")
        messages = build_single_prompt_messages(
            BenchmarkItem("d0", rows[0]["passage"], rows[0]["question"], answer)
        )
        scripted = serialize_report(
            DiagnosisReport(Conclusion.FAIL, "d", (paraphrased,), rows[0]["passage"])
        )
        backend = MockBackend(0, script={messages[1]["content"]: scripted})
        evaluation = evaluate_diagnosis(path, "single", backend, LexicalOverlapScorer())
        assert evaluation.card.span_validity == 0.0
        assert evaluation.card.hit_rate == 1.0

    def test_empty_span_fail_reports_zero_hr(self, tmp_path):
        path, _ = _diagnosis_fixture(tmp_path, n=2)
        empty_fail = StaticBackend(
            serialize_report(DiagnosisReport(Conclusion.FAIL, "d", (), "fix"))
        )
        evaluation = evaluate_diagnosis(path, "single", empty_fail, LexicalOverlapScorer())
        assert evaluation.card.hit_rate == 0.0
        assert evaluation.card.det_acc == 1.0
        # Empty span lists are vacuously valid.
        assert evaluation.card.span_validity == 1.0

    def test_original_baseline_scored(self, tmp_path):
        path, _ = _diagnosis_fixture(tmp_path)
        evaluation = evaluate_diagnosis(path, "single", MockBackend(0), LexicalOverlapScorer())
        assert 0.0 <= evaluation.card.original_mitigation < 1.0

    def test_pipeline_method_call_budget(self, tmp_path):
        path, rows = _diagnosis_fixture(tmp_path, n=3)
        backend = CountingMockBackend(0)
        evaluation = evaluate_diagnosis(path, "pipeline", backend, LexicalOverlapScorer())
        # All items are hallucinated and the mock detects them: 3 calls each.
        assert backend.calls == 3 * len(rows)
        assert evaluation.card.det_acc == 1.0
