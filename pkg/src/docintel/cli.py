"""Command-line surface over Engine.

Exit codes: 0 success, 1 user error (bad arguments, bad query, missing
store...), 2 internal error. --json on the query-ish commands prints the
exact objects the HTTP service would return, so scripts can consume
either surface interchangeably.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import Config, load_config, serialize_config
from .engine import (
    Engine,
    answer_to_dict,
    load_examples_file,
    page_to_dict,
    record_to_dict,
    summary_to_dict,
    templates_text,
)
from .errors import DocIntelError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docintel",
        description="Local document intelligence: ingest, search, ask, "
                    "extract, summarize, classify.")
    parser.add_argument("--config", metavar="PATH",
                        help="config file (defaults apply when omitted)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="create the configured store")

    p = sub.add_parser("ingest", help="ingest a folder of documents")
    p.add_argument("dir", help="folder to ingest")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("search", help="query the store")
    p.add_argument("query")
    p.add_argument("--mode", choices=("keyword", "semantic", "hybrid"),
                   default="keyword")
    p.add_argument("--page", type=int, default=1)
    p.add_argument("--page-size", type=int, default=10)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("ask", help="answer a question from the store")
    p.add_argument("question")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("extract", help="run schema extraction over units")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--source-path", help="ingested source to split")
    src.add_argument("--units-file",
                     help="text file, one unit per line")
    p.add_argument("--unit", choices=("sentence", "paragraph", "passage"),
                   default="passage")
    p.add_argument("--template-file", required=True,
                   help="prompt text containing {unit}")
    p.add_argument("--schema-file", required=True,
                   help='JSON {"fields": [{"name", "type", ...}]}')
    p.add_argument("--max-retries", type=int, default=2)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("summarize", help="summarize a source or text file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--source-path", help="ingested source to summarize")
    src.add_argument("--text-file", help="local text file to summarize")
    p.add_argument("--strategy", choices=("map_reduce", "concept_focused"))
    p.add_argument("--concept")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("classify", help="train or apply a classifier")
    csub = p.add_subparsers(dest="classify_command", required=True)
    t = csub.add_parser("train")
    t.add_argument("--kind", choices=("centroid_fewshot", "tfidf_linear"),
                   required=True)
    t.add_argument("--data", required=True,
                   help='.json array or .jsonl of {"text", "label"}')
    t.add_argument("--json", action="store_true")
    d = csub.add_parser("predict")
    d.add_argument("--model-id", required=True)
    d.add_argument("text")
    d.add_argument("--json", action="store_true")

    sub.add_parser("serve", help="run the HTTP service")

    p = sub.add_parser("config", help="inspect configuration")
    p.add_argument("config_command", choices=("print", "print-templates"))

    return parser


def _load(args) -> Config:
    if args.config:
        return load_config(args.config)
    return Config()


def _emit(obj: dict) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2))


def _run(args) -> int:
    cfg = _load(args)

    if args.command == "init":
        engine = Engine.init_store(cfg)
        print(f"initialized {cfg.store_kind} store at {engine.store.dir}")
        return 0

    if args.command == "config":
        if args.config_command == "print":
            sys.stdout.write(serialize_config(cfg))
        else:
            print(templates_text())
        return 0

    if args.command == "serve":
        from .service import serve
        serve(cfg)
        return 0

    engine = Engine.open_or_create(cfg)
    try:
        return _run_store_command(engine, args)
    finally:
        engine.close()


def _run_store_command(engine: Engine, args) -> int:
    if args.command == "ingest":
        report = engine.ingest(args.dir)
        if args.json:
            _emit(report.to_dict())
        else:
            print(f"seen {report.files_seen}, ingested "
                  f"{report.files_ingested}, unchanged "
                  f"{report.files_skipped_unchanged}, chunks "
                  f"+{report.chunks_added}, errors {len(report.errors)}")
            for err in report.errors:
                print(f"  {err[0]}: {err[1]}", file=sys.stderr)
        return 0

    if args.command == "search":
        page = engine.search(args.query, mode=args.mode, page=args.page,
                             page_size=args.page_size)
        if args.json:
            _emit(page_to_dict(page))
        else:
            print(f"{page.total_hits} hits (page {page.page})")
            for h in page.hits:
                print(f"  {h.score:10.4f}  {h.source_path}  {h.snippet}")
        return 0

    if args.command == "ask":
        answer = engine.ask(args.question, k=args.k)
        if args.json:
            _emit(answer_to_dict(answer))
        else:
            print(answer.answer_text)
            if answer.sources:
                print("\nSources:")
                for n, s in enumerate(answer.sources, start=1):
                    print(f"  [{n}] {s.source_path}")
        return 0

    if args.command == "extract":
        units = None
        if args.units_file:
            lines = Path(args.units_file).read_text(encoding="utf-8")
            units = [ln.strip() for ln in lines.splitlines() if ln.strip()]
        template = Path(args.template_file).read_text(encoding="utf-8")
        schema = json.loads(Path(args.schema_file).read_text(encoding="utf-8"))
        records, csv_path = engine.extract(
            units=units, source_path=args.source_path, unit=args.unit,
            template=template, schema=schema, max_retries=args.max_retries)
        if args.json:
            _emit({"records": [record_to_dict(r) for r in records],
                   "csv_path": csv_path})
        else:
            for r in records:
                print(f"  {r.status:6s}  {r.unit_ref[0]}:{r.unit_ref[1]}")
            print(f"csv: {csv_path}")
        return 0

    if args.command == "summarize":
        text = None
        if args.text_file:
            text = Path(args.text_file).read_text(encoding="utf-8")
        summary = engine.summarize(
            source_path=args.source_path, text=text,
            strategy=args.strategy, concept=args.concept)
        if args.json:
            _emit(summary_to_dict(summary))
        else:
            print(summary.text)
        return 0

    if args.command == "classify":
        if args.classify_command == "train":
            pairs = load_examples_file(args.data)
            model_id, model = engine.classify_train(args.kind, pairs)
            if args.json:
                _emit({"model_id": model_id, "kind": model.kind,
                       "classes": model.classes})
            else:
                print(model_id)
        else:
            label, scores, model = engine.classify_predict(
                args.model_id, args.text)
            if args.json:
                _emit({"model_id": args.model_id, "label": label,
                       "scores": scores, "kind": model.kind})
            else:
                print(label)
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse prints its own message; --help exits 0, usage errors
        # exit 2, which this CLI's contract calls a user error (1).
        return 0 if e.code == 0 else 1
    try:
        return _run(args)
    except DocIntelError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as e:   # noqa: BLE001 - the exit-code contract
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
