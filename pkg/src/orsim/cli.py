"""Command-line front end: run, eval, ingest, gen-cases, replay, serve.

Exit codes: 0 success, 1 domain failure, 2 usage error. A failed command
removes whatever partial output files it had started writing.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .backends import RemoteConfig
from .copilot import LongMemory
from .defaults import builtin_corpus
from .engine import SimulationConfig
from .errors import InvalidConfig, InvalidMix, OrsimError, ParseError
from .evaluation import render_ablation_table
from .knowledge import KnowledgeDoc, chunk_text, parse_knowledge_doc
from .records import (
    load_case,
    load_corpus,
    load_transcript,
    save_corpus,
    save_report,
    save_transcript,
)
from .runner import ABLATIONS, Runner, evaluate_corpus
from .synthetic import generate_corpus


def _add_flag_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--turn-budget", type=int, default=20)
    parser.add_argument("--no-copilot", action="store_true")
    parser.add_argument("--no-rag", action="store_true")
    parser.add_argument("--no-memory", action="store_true")
    parser.add_argument("--no-react", action="store_true")


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend", choices=("scripted", "remote"), default="scripted"
    )
    parser.add_argument("--rules", help="scripted rule table (JSON)")
    parser.add_argument("--docs", help="directory of reference markdown files")
    parser.add_argument("--long-memory", help="experience log file (JSONL)")


def _config_from(args: argparse.Namespace) -> SimulationConfig:
    return SimulationConfig(
        seed=args.seed,
        copilot_on=not args.no_copilot,
        rag_on=not args.no_rag,
        long_memory_on=not args.no_memory,
        react_on=not args.no_react,
        turn_budget=args.turn_budget,
    )


def _load_docs(directory: str | None) -> list[KnowledgeDoc] | None:
    if directory is None:
        return None
    root = Path(directory)
    if not root.is_dir():
        raise ParseError(f"not a directory: {root}")
    docs = []
    for path in sorted(root.glob("*.md")):
        docs.append(parse_knowledge_doc(path.read_text(encoding="utf-8"), path.stem))
    if not docs:
        raise ParseError(f"no .md files in {root}")
    return docs


def _runner_from(args: argparse.Namespace) -> Runner:
    memory = LongMemory(args.long_memory) if args.long_memory else LongMemory()
    docs = _load_docs(args.docs)
    if args.backend == "remote":
        return Runner.remote(
            RemoteConfig.from_env(), long_memory=memory, docs=docs
        )
    return Runner.scripted(args.rules, long_memory=memory, docs=docs)


def _remove_partial(paths: list[Path]) -> None:
    for path in paths:
        try:
            path.unlink(missing_ok=True)
        except OSError:
            pass


# --- subcommands ---


def cmd_run(args: argparse.Namespace) -> int:
    bundle = load_case(args.case)
    runner = _runner_from(args)
    config = replace(_config_from(args), sim_id=args.sim_id or "")
    out_dir = Path(args.out or f"runs/{bundle.case.case_id}-s{args.seed}")
    transcript_path = out_dir / "transcript.jsonl"
    report_path = out_dir / "report.json"
    written: list[Path] = []
    try:
        report = runner.simulate(bundle, config)
        out_dir.mkdir(parents=True, exist_ok=True)
        written.append(transcript_path)
        save_transcript(report, transcript_path)
        written.append(report_path)
        save_report(report, report_path)
    except Exception:
        _remove_partial(written)
        raise
    print(
        f"{report.sim_id}: {len(report.transcript)} utterances, "
        f"{len(report.events_fired)} events, route="
        f"{report.chosen_route.canonical if report.chosen_route else 'none'}"
    )
    print(f"wrote {transcript_path} and {report_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.corpus:
        corpus = load_corpus(args.corpus)
    else:
        corpus = generate_corpus(args.count, seed=args.seed)
    labels = [x.strip() for x in args.labels.split(",") if x.strip()]
    for label in labels:
        if label not in ABLATIONS:
            raise InvalidConfig(
                f"unknown label {label!r}; choose from {sorted(ABLATIONS)}"
            )
    base = _config_from(args)
    rows = []
    payload = []
    for label in labels:
        runner = _runner_from(args)
        run = evaluate_corpus(runner, corpus, base, label=label)
        rows.append((label, run.fingerprint, run.summary))
        payload.append(run.to_dict())
    print(render_ablation_table(rows))
    if args.out:
        out_path = Path(args.out)
        try:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
        except Exception:
            _remove_partial([out_path])
            raise
        print(f"wrote {out_path}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    docs = _load_docs(args.docs)
    assert docs is not None
    out_path = Path(args.out) if args.out else None
    written: list[Path] = []
    try:
        lines = []
        total = 0
        for doc in docs:
            chunks = chunk_text(doc.body, doc.doc_id, args.chunk_size, args.overlap)
            total += len(chunks)
            print(f"{doc.doc_id}: role={doc.role} chunks={len(chunks)}")
            for chunk in chunks:
                lines.append(
                    json.dumps(
                        {
                            "chunk_id": chunk.chunk_id,
                            "doc_id": chunk.doc_id,
                            "role": doc.role,
                            "start": chunk.start,
                            "end": chunk.end,
                            "text": chunk.text,
                        },
                        sort_keys=True,
                    )
                )
        if out_path is not None:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            written.append(out_path)
            out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            print(f"wrote {total} chunks to {out_path}")
    except Exception:
        _remove_partial(written)
        raise
    return 0


def cmd_gen_cases(args: argparse.Namespace) -> int:
    weights = None
    if args.mix:
        weights = {}
        for part in args.mix.split(","):
            code, _, value = part.partition("=")
            if not value:
                raise InvalidMix(f"bad mix entry {part!r}; use CODE=WEIGHT")
            try:
                weights[code.strip()] = float(value)
            except ValueError as exc:
                raise InvalidMix(f"bad weight in {part!r}") from exc
    corpus = generate_corpus(
        args.count, seed=args.seed, weights=weights, name=args.name
    )
    save_corpus(corpus, args.out)
    by_disease: dict[str, int] = {}
    for case in corpus.cases:
        by_disease[case.disease_label.code] = (
            by_disease.get(case.disease_label.code, 0) + 1
        )
    mix_text = ", ".join(f"{k}={v}" for k, v in sorted(by_disease.items()))
    print(f"wrote {len(corpus.cases)} cases to {args.out} ({mix_text})")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    header, utterances = load_transcript(args.transcript)
    print(f"# {header.get('sim_id', '?')} on {header.get('case_id', '?')}")
    phase = None
    for utt in utterances:
        if utt.phase != phase:
            phase = utt.phase
            print(f"\n== {phase.value} ==")
        action = ""
        if utt.derived_action is not None:
            action = f"  <{utt.derived_action.kind.value}>"
        first_line = utt.text.splitlines()[0] if utt.text else ""
        print(f"[{utt.seq:3d}] {utt.speaker.value}: {first_line}{action}")
    print(f"\n{len(utterances)} utterances")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    corpus = load_corpus(args.corpus) if args.corpus else builtin_corpus()
    runner = _runner_from(args)
    app = create_app(corpus=corpus, runner=runner, pace=args.pace)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orsim",
        description="Deterministic operating-room sandbox and evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one case end to end")
    p_run.add_argument("--case", required=True, help="case file (JSON)")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--sim-id", help="override the simulation id")
    _add_flag_args(p_run)
    _add_backend_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score a corpus under one or more configs")
    p_eval.add_argument("--corpus", help="corpus directory (with manifest.json)")
    p_eval.add_argument("--count", type=int, default=20, help="generated corpus size")
    p_eval.add_argument(
        "--labels", default="full", help="comma-separated config labels"
    )
    p_eval.add_argument("--out", help="write run results as JSON")
    _add_flag_args(p_eval)
    _add_backend_args(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_ingest = sub.add_parser("ingest", help="chunk reference docs for inspection")
    p_ingest.add_argument("--docs", required=True, help="directory of .md files")
    p_ingest.add_argument("--out", help="write chunks as JSONL")
    p_ingest.add_argument("--chunk-size", type=int, default=800)
    p_ingest.add_argument("--overlap", type=int, default=100)
    p_ingest.set_defaults(func=cmd_ingest)

    p_gen = sub.add_parser("gen-cases", help="generate a synthetic corpus")
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="corpus directory to create")
    p_gen.add_argument("--name", default="synthetic", help="case id prefix")
    p_gen.add_argument("--mix", help="disease weights, e.g. D1=2,D2=1")
    p_gen.set_defaults(func=cmd_gen_cases)

    p_replay = sub.add_parser("replay", help="pretty-print a stored transcript")
    p_replay.add_argument("--transcript", required=True)
    p_replay.set_defaults(func=cmd_replay)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8008)
    p_serve.add_argument("--corpus", help="corpus directory")
    p_serve.add_argument("--pace", type=float, default=1.0, help="turns per second")
    _add_backend_args(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OrsimError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
