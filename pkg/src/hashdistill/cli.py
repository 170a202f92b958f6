"""Command line interface.

Subcommands: distill, finetune, encode, evaluate, report. A config file
seeds the run; flags override individual fields. The dataset root falls
back to the HASHDISTILL_DATA_ROOT environment variable. Exit code 0 on
success, otherwise a categorized error line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .code_file import read_code_file
from .errors import HashDistillError, MissingArtifactError
from .experiment import (
    ExperimentConfig, MetricsReport, encode_splits, evaluate_codes,
    report_tables, run_distill, run_finetune,
)

ENV_DATA_ROOT = "HASHDISTILL_DATA_ROOT"

_EXIT_CODES = {"config": 2, "artifact": 3, "data": 4}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_stage_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--output-dir", help="run directory")
    sub.add_argument("--dataset", choices=["synthetic", "cifar10", "nuswide"])
    sub.add_argument("--data-root", help=f"dataset root (default ${ENV_DATA_ROOT})")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--student-variant", choices=["V1", "V2"])
    sub.add_argument("--input-size", type=int)
    sub.add_argument("--teacher", choices=["tiny", "resnet50", "alexnet"])
    sub.add_argument("--framework", choices=["CSQ", "DCH"])
    sub.add_argument("--n-bits", type=int)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override any config field")


def _build_config(args, stage: str) -> ExperimentConfig:
    doc: dict = {}
    if args.config:
        doc.update(json.loads(Path(args.config).read_text()))
    for flag in ("output_dir", "dataset", "data_root", "seed", "epochs",
                 "student_variant", "input_size", "teacher", "framework",
                 "n_bits", "batch_size"):
        value = getattr(args, flag, None)
        if value is not None:
            doc[flag] = value
    for item in args.set:
        if "=" not in item:
            raise HashDistillError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        doc[key] = _parse_value(value)
    doc["stage"] = stage
    if not doc.get("data_root") and os.environ.get(ENV_DATA_ROOT):
        doc["data_root"] = os.environ[ENV_DATA_ROOT]
    doc.setdefault("output_dir", "runs/latest")
    return ExperimentConfig(**doc)


def _cmd_distill(args) -> int:
    report = run_distill(_build_config(args, "distill"))
    print(f"distill done: final loss {report.losses[-1]:.6g} over {len(report.losses)} epochs")
    return 0


def _cmd_finetune(args) -> int:
    report = run_finetune(_build_config(args, "finetune"))
    print(f"finetune done: final loss {report.losses[-1]:.6g} ({report.framework} "
          f"{report.n_bits}-bit)")
    return 0


def _cmd_encode(args) -> int:
    config = _build_config(args, "encode")
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    database, queries = encode_splits(config)
    print(f"encoded {database.count} database and {queries.count} query codes "
          f"({config.n_bits}-bit) into {config.output_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _build_config(args, "evaluate")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.database_codes or args.query_codes:
        if not (args.database_codes and args.query_codes):
            raise HashDistillError("direct mode needs both --database-codes and --query-codes")
        for path in (args.database_codes, args.query_codes):
            if not Path(path).exists():
                raise MissingArtifactError(f"code file not found: {path}")
        database = read_code_file(args.database_codes)
        queries = read_code_file(args.query_codes)
    else:
        db_path = out_dir / "codes_database.cukd"
        q_path = out_dir / "codes_query.cukd"
        if not db_path.exists() or not q_path.exists():
            raise MissingArtifactError(
                f"no code files in {out_dir}; run the encode stage first")
        database = read_code_file(db_path)
        queries = read_code_file(q_path)
    report = evaluate_codes(database, queries, config)
    print(f"mAP@{report.top_n} = {report.map_at_n:.17g}")
    return 0


def _cmd_report(args) -> int:
    reports = []
    for run_dir in args.runs:
        path = Path(run_dir) / "report_evaluate.json"
        if not path.exists():
            raise MissingArtifactError(f"no evaluation report in {run_dir}")
        reports.append(MetricsReport.load(path))
    tables = report_tables(reports)
    if not tables:
        print("no completed evaluations")
        return 0
    out_dir = Path(args.output_dir) if args.output_dir else None
    for framework, rendered in tables.items():
        print(f"== {framework} ==")
        print(rendered["text"], end="")
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / f"results_{framework.lower()}.csv").write_text(rendered["csv"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hashdistill",
        description="Two-stage compact-hashing pipeline: distill, finetune, "
                    "encode, evaluate, report.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("distill", _cmd_distill), ("finetune", _cmd_finetune),
                     ("encode", _cmd_encode), ("evaluate", _cmd_evaluate)):
        sub = subs.add_parser(name)
        _add_stage_args(sub)
        sub.set_defaults(fn=fn)
        if name == "evaluate":
            sub.add_argument("--database-codes", help="evaluate a code file directly")
            sub.add_argument("--query-codes", help="query code file for direct mode")
            sub.add_argument("--top-n", type=int, dest="top_n_flag")
            sub.add_argument("--top-k", type=int, dest="top_k_flag",
                             help="also write a per-query neighbor listing")
    rep = subs.add_parser("report")
    rep.add_argument("runs", nargs="+", help="run directories with evaluation reports")
    rep.add_argument("--output-dir", help="where to write CSV tables")
    rep.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "top_n_flag", None) is not None:
        args.set = list(args.set) + [f"top_n={args.top_n_flag}"]
    if getattr(args, "top_k_flag", None) is not None:
        args.set = list(args.set) + [f"top_k_listing={args.top_k_flag}"]
    try:
        return args.fn(args)
    except HashDistillError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return _EXIT_CODES.get(exc.category, 1)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error[internal]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
