"""Operator command-line interface.

Exit codes are stable: 0 success, 1 runtime failure, 2 usage/config error.
All commands share one JSON config file with per-command sections; flags
override config.  Report-producing commands write figures next to their
delimited outputs unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ConfigError, atomic_write_json, atomic_write_text, load_config
from .llm import Backend, BackendConfig, HttpBackend, MockBackend
from .metrics import (
    HttpConsistencyScorer,
    LexicalOverlapScorer,
    ScorerError,
    format_detection_table,
    format_diagnosis_table,
)
from .reward import GroundTruth, Label, RewardWeights, compute_reward

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def build_backend(config: dict, name: str, seed: int = 0) -> Backend:
    """Resolve a backend profile: ``mock``/``mock:<seed>`` or a named entry
    under the config's ``backends`` section."""
    if name == "mock" or name.startswith("mock:"):
        if ":" in name:
            seed = int(name.split(":", 1)[1])
        return MockBackend(seed)
    profiles = config.get("backends", {})
    if name not in profiles:
        raise ConfigError(f"unknown backend profile {name!r}")
    return HttpBackend(BackendConfig(**profiles[name]))


def _build_scorer(config: dict, spec: str):
    if spec == "lexical":
        return LexicalOverlapScorer()
    if spec.startswith("http:"):
        return HttpConsistencyScorer(spec[len("http:") :] or spec)
    if spec == "http":
        url = config.get("scorer", {}).get("url")
        if not url:
            raise ConfigError("scorer 'http' requires scorer.url in config")
        return HttpConsistencyScorer(url)
    raise ConfigError(f"unknown scorer {spec!r}")


def _write_manifest(path: Path, command: str, args: dict, counters: dict, started: str) -> None:
    manifest = {
        "command": command,
        "config": args.get("config"),
        "seed": args.get("seed"),
        "inputs": {k: v for k, v in args.items() if k in ("corpus", "data", "gt_file")},
        "outputs": args.get("outputs", []),
        "started": started,
        "finished": _now(),
        "version": __version__,
        "counters": counters,
    }
    atomic_write_json(path, manifest)


def cmd_generate(args: argparse.Namespace) -> int:
    started = _now()
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    section = config.get("generate", {})

    from .datagen import PipelineConfig, run_pipeline
    from .datagen.pipeline import format_stats_table

    try:
        pipeline_cfg = PipelineConfig.from_dict(
            section,
            corpus_path=args.corpus,
            out_path=args.out,
            seed=args.seed,
        )
    except TypeError as exc:
        return _fail(f"bad generate config: {exc}", EXIT_USAGE)
    if not pipeline_cfg.corpus_path or not pipeline_cfg.out_path:
        return _fail("generate requires --corpus and --out (or config entries)", EXIT_USAGE)
    if args.no_resume:
        pipeline_cfg.resume = False

    try:
        backend = build_backend(config, args.backend or section.get("backend", "mock"), pipeline_cfg.seed)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)

    try:
        result = run_pipeline(pipeline_cfg, backend=backend)
    except FileNotFoundError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except OSError as exc:
        return _fail(f"runtime failure: {exc}", EXIT_RUNTIME)

    outputs = [str(result.dataset_path), str(result.stats_path)]
    try:
        table_path = Path(str(result.dataset_path) + ".stats.txt")
        atomic_write_text(table_path, format_stats_table(result.stats) + "\n")
        outputs.append(str(table_path))
        if args.figures:
            from .figures import render_dataset_figures

            figure_dir = result.dataset_path.parent / "figures"
            outputs += [str(p) for p in render_dataset_figures(
                [r.to_dict() for r in result.records], figure_dir
            )]
        _write_manifest(
            result.dataset_path.parent / "manifest.json",
            "generate",
            {
                "config": args.config,
                "seed": pipeline_cfg.seed,
                "corpus": pipeline_cfg.corpus_path,
                "outputs": outputs,
            },
            result.counters,
            started,
        )
    except OSError as exc:
        return _fail(f"runtime failure: {exc}", EXIT_RUNTIME)
    print(f"wrote {len(result.records)} records to {result.dataset_path}")
    return EXIT_OK


def _eval_common(args: argparse.Namespace, diagnose: bool) -> int:
    started = _now()
    try:
        config = load_config(args.config)
        backend = build_backend(config, args.backend, args.seed)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)

    from . import runner

    outdir = Path(args.out)
    eval_started = time.monotonic()
    try:
        if diagnose:
            scorer = _build_scorer(config, args.scorer)
            evaluation = runner.evaluate_diagnosis(
                args.data, args.method, backend, scorer, benchmark=args.benchmark, workers=args.workers
            )
            table = format_diagnosis_table(evaluation.card, method=args.method)
            metrics_dict = evaluation.card.to_dict()
        else:
            evaluation = runner.evaluate_detection(
                args.data, args.method, backend, benchmark=args.benchmark, workers=args.workers
            )
            table = format_detection_table(evaluation.report)
            metrics_dict = evaluation.report.to_dict()
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except FileNotFoundError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except ScorerError as exc:
        return _fail(f"scorer failure on sample {exc.sample_id}: {exc}", EXIT_RUNTIME)

    metrics_dict["skipped"] = evaluation.skipped
    metrics_dict["errored"] = evaluation.errored
    # Wall-clock per method, recorded for comparison; no threshold applied.
    metrics_dict["elapsed_s"] = round(time.monotonic() - eval_started, 3)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        runner.write_run_log(outdir / "run_log.jsonl", evaluation.log_records)
        atomic_write_json(outdir / "metrics.json", metrics_dict)
        atomic_write_text(outdir / "metrics.txt", table + "\n")
        outputs = ["run_log.jsonl", "metrics.json", "metrics.txt"]
        if args.figures:
            from .figures import render_detection_figure, render_diagnosis_figure

            if diagnose:
                outputs.append(str(render_diagnosis_figure(evaluation.card, outdir)))
            else:
                outputs.append(str(render_detection_figure(evaluation.report, outdir)))
        _write_manifest(
            outdir / "manifest.json",
            "eval-diagnose" if diagnose else "eval-detect",
            {"config": args.config, "seed": args.seed, "data": args.data, "outputs": outputs},
            {"scored": metrics_dict.get("n"), "skipped": evaluation.skipped, "errored": evaluation.errored},
            started,
        )
    except OSError as exc:
        return _fail(f"runtime failure: {exc}", EXIT_RUNTIME)
    print(table)
    return EXIT_OK


def cmd_eval_detect(args: argparse.Namespace) -> int:
    return _eval_common(args, diagnose=False)


def cmd_eval_diagnose(args: argparse.Namespace) -> int:
    return _eval_common(args, diagnose=True)


def _parse_completion_line(line: str):
    obj = json.loads(line)
    if isinstance(obj, str):
        return obj
    if isinstance(obj, dict) and isinstance(obj.get("completion"), str):
        return obj["completion"]
    raise ValueError("completion line must be a JSON string or {\"completion\": ...}")


def _parse_gt_line(line: str) -> GroundTruth:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("ground-truth line must be a JSON object")
    return GroundTruth(
        label=Label(obj["label"]),
        gt_sentences=tuple(obj.get("gt_sentences", ())),
        reference_answer=obj.get("reference_answer", ""),
    )


def cmd_reward(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    reward_cfg = config.get("reward", {})
    weights = RewardWeights(
        w_struct=reward_cfg.get("w_struct", 1.0),
        w_acc=reward_cfg.get("w_acc", 0.5),
        w_loc=reward_cfg.get("w_loc", 0.5),
    )
    clamp_loc = bool(reward_cfg.get("clamp_loc", True))
    dedup_pred = bool(reward_cfg.get("dedup_pred", True))

    gt_path = Path(args.gt_file)
    if not gt_path.is_file():
        return _fail(f"ground-truth file not found: {gt_path}", EXIT_USAGE)
    gt_lines = [l for l in gt_path.read_text(encoding="utf-8").splitlines() if l.strip()]
    completion_lines = [l for l in sys.stdin.read().splitlines() if l.strip()]
    if len(gt_lines) != len(completion_lines):
        return _fail(
            f"line count mismatch: {len(completion_lines)} completions vs {len(gt_lines)} ground truths",
            EXIT_USAGE,
        )

    for completion_line, gt_line in zip(completion_lines, gt_lines):
        try:
            completion = _parse_completion_line(completion_line)
            gt = _parse_gt_line(gt_line)
        except (ValueError, KeyError) as exc:
            print(json.dumps({"error": str(exc)}, ensure_ascii=False))
            continue
        breakdown = compute_reward(completion, gt, weights, clamp_loc=clamp_loc, dedup_pred=dedup_pred)
        print(json.dumps(breakdown.to_dict(), ensure_ascii=False))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        from .service import ServiceConfig, create_app

        service_cfg = ServiceConfig.from_dict(config)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    host = args.host or service_cfg.host
    port = args.port if args.port is not None else service_cfg.port

    # Fail fast with a clean exit code when the port is taken.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        return _fail(f"cannot bind {host}:{port}: {exc}", EXIT_RUNTIME)
    finally:
        probe.close()

    import signal as signal_module

    import uvicorn

    # uvicorn re-raises a captured SIGTERM after draining in-flight requests;
    # translate that into a clean exit instead of the default kill.
    def _graceful_exit(signum, frame):
        raise SystemExit(0)

    signal_module.signal(signal_module.SIGTERM, _graceful_exit)

    app = create_app(service_cfg)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_RUNTIME
        return EXIT_OK if code == 0 else EXIT_RUNTIME
    except OSError as exc:
        return _fail(f"server failed: {exc}", EXIT_RUNTIME)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    from .datagen import validate_dataset

    path = Path(args.data)
    if not path.is_file():
        return _fail(f"dataset not found: {path}", EXIT_USAGE)
    count, violations = validate_dataset(path)
    if violations:
        for lineno, problem in violations[:50]:
            print(f"line {lineno}: {problem}", file=sys.stderr)
        return _fail(f"{len(violations)} violations over {count} records", EXIT_RUNTIME)
    print(f"{count} records, all invariants hold")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haludiag", description=__doc__)
    parser.add_argument("--version", action="version", version=f"haludiag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the synthetic-data pipeline")
    gen.add_argument("--config")
    gen.add_argument("--corpus")
    gen.add_argument("--out")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--backend", default=None, help="backend profile or mock[:seed]")
    gen.add_argument("--no-resume", action="store_true")
    gen.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    gen.set_defaults(func=cmd_generate)

    for name, func in (("eval-detect", cmd_eval_detect), ("eval-diagnose", cmd_eval_diagnose)):
        ev = sub.add_parser(name, help=f"run {name.replace('-', ' ')} over a benchmark")
        ev.add_argument("--data", required=True)
        ev.add_argument("--method", choices=("single", "pipeline"), default="single")
        ev.add_argument("--backend", default="mock")
        ev.add_argument("--out", required=True)
        ev.add_argument("--config")
        ev.add_argument("--benchmark", default=None)
        ev.add_argument("--seed", type=int, default=0)
        ev.add_argument("--workers", type=int, default=1)
        ev.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
        if name == "eval-diagnose":
            ev.add_argument("--scorer", default="lexical", help="lexical | http:<url>")
        ev.set_defaults(func=func)

    rew = sub.add_parser("reward", help="score completions from stdin against a ground-truth file")
    rew.add_argument("--gt-file", required=True)
    rew.add_argument("--config")
    rew.set_defaults(func=cmd_reward)

    srv = sub.add_parser("serve", help="run the reward-scoring HTTP service")
    srv.add_argument("--config")
    srv.add_argument("--host", default=None)
    srv.add_argument("--port", type=int, default=None)
    srv.set_defaults(func=cmd_serve)

    val = sub.add_parser("validate", help="check dataset invariants")
    val.add_argument("--data", required=True)
    val.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
