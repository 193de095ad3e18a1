"""Command-line entry: run, score, emit-plots, synth, verify.

Exit codes: 0 success, 1 stage or verification failure, 2 bad input or
configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, ParseError, StageError, SubshapError, ValidationError
from .pipeline import RunConfig, emit_plot_data, run_pipeline, score_row, verify_artifacts
from .tabular import SyntheticSpec, generate_synthetic, write_csv

INPUT_ERRORS = (ConfigError, ParseError, ValidationError, FileNotFoundError, KeyError, json.JSONDecodeError)


def _cmd_run(args) -> int:
    try:
        config = RunConfig.load(args.config)
    except INPUT_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_pipeline(config, args.outdir)
    except StageError as exc:
        print(f"pipeline failed: {exc}", file=sys.stderr)
        return 1
    selection = report.get("selection")
    print(json.dumps({
        "outdir": str(args.outdir),
        "n_clusters": report.get("clusters", {}).get("n_clusters"),
        "selection": selection,
    }, sort_keys=True))
    return 0


def _cmd_score(args) -> int:
    try:
        record = score_row(args.artifacts, args.row)
    except INPUT_ERRORS as exc:
        print(f"scoring input error: {exc}", file=sys.stderr)
        return 2
    except SubshapError as exc:
        print(f"scoring failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(record, sort_keys=True))
    return 0


def _cmd_emit_plots(args) -> int:
    try:
        written = emit_plot_data(args.artifacts)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"missing artifacts: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


def _cmd_synth(args) -> int:
    try:
        spec = SyntheticSpec.from_dict(
            json.loads(Path(args.spec).read_text(encoding="utf-8"))
        )
        table, planted, warnings = generate_synthetic(spec)
    except INPUT_ERRORS as exc:
        print(f"synthetic spec error: {exc}", file=sys.stderr)
        return 2
    write_csv(table, args.out)
    if args.labels:
        lines = ["row_id,subgroup"] + [
            f"{int(i)},{int(g)}" for i, g in zip(table.row_ids, planted)
        ]
        Path(args.labels).write_text("\n".join(lines) + "\n", encoding="utf-8")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(args.out)
    return 0


def _cmd_verify(args) -> int:
    try:
        problems = verify_artifacts(args.artifacts)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"unreadable artifacts: {exc}", file=sys.stderr)
        return 1
    if problems:
        for p in problems:
            print(f"FAIL {p}", file=sys.stderr)
        return 1
    print("verified")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subshap",
        description="SHAP-cluster subgroup discovery and subgroup-specific retraining",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the full pipeline")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--outdir", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_score = sub.add_parser("score", help="score a patient row against run artifacts")
    p_score.add_argument("--artifacts", required=True)
    p_score.add_argument("--row", required=True)
    p_score.set_defaults(func=_cmd_score)

    p_plots = sub.add_parser("emit-plots", help="write plot-ready data files")
    p_plots.add_argument("--artifacts", required=True)
    p_plots.set_defaults(func=_cmd_emit_plots)

    p_synth = sub.add_parser("synth", help="generate a planted-subgroup cohort CSV")
    p_synth.add_argument("--spec", required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--labels", default=None)
    p_synth.set_defaults(func=_cmd_synth)

    p_verify = sub.add_parser("verify", help="audit artifact hashes and metrics")
    p_verify.add_argument("--artifacts", required=True)
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
