"""Command-line entry point: synth, fit, transform, bench, report."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .dataset import ColumnSchema, load_csv, read_schema, write_csv
from .errors import LemdaError
from .experiment import METHODS, MODELS, ExperimentConfig, format_table, run_bench
from .forest import ForestConfig
from .pipeline import LemdaConfig, LemdaPipeline, fit_pipeline, transform_pipeline
from .synth import SynthConfig, generate_dataset, write_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    """Bad command line; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _csv_list(choices):
    def parse(text: str) -> list[str]:
        items = [s.strip().lower() for s in text.split(",") if s.strip()]
        bad = [s for s in items if s not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(
                f"expected a comma list drawn from {', '.join(choices)}; got {text!r}")
        return list(dict.fromkeys(items))
    return parse


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _default_seed() -> int:
    raw = os.environ.get("LEMDA_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"LEMDA_SEED must be an integer, got {raw!r}") from None


def _add_data_args(p):
    p.add_argument("--data", required=True, type=Path, help="input CSV file")
    p.add_argument("--schema", required=True, type=Path,
                   help="schema file with one name=kind line per column")
    p.add_argument("--normal-label", default="0", help="label string for normal rows (default 0)")
    p.add_argument("--attack-label", default="1", help="label string for attack rows (default 1)")


def build_parser() -> argparse.ArgumentParser:
    seed_help = "random seed (default: $LEMDA_SEED or 0)"
    parser = _Parser(prog="lemda", description="LEMDA feature engineering and IDS benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a labelled synthetic flow dataset")
    p.add_argument("--rows", type=_positive_int, default=20000, help="row count (default 20000)")
    p.add_argument("--attack-frac", type=_fraction, default=0.125,
                   help="fraction of attack rows (default 0.125)")
    p.add_argument("--cardinality", type=int, default=SynthConfig.cardinality,
                   help="distinct values of the categorical column")
    p.add_argument("--attack-values", type=int, default=SynthConfig.attack_values,
                   help="categorical values that attacks concentrate on")
    p.add_argument("--signal", type=float, default=SynthConfig.signal,
                   help="how strongly attacks concentrate on their values, 0..1")
    p.add_argument("--informative", type=int, default=SynthConfig.informative,
                   help="label-dependent numeric columns")
    p.add_argument("--noise", type=int, default=SynthConfig.noise,
                   help="label-independent numeric columns")
    p.add_argument("--numeric-shift", type=float, default=SynthConfig.numeric_shift,
                   help="log-mean shift of informative numeric columns on attack rows")
    p.add_argument("--burst-mean", type=float, default=SynthConfig.burst_mean,
                   help="mean attack burst length in rows")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("fit", help="fit a LEMDA pipeline and save it as JSON")
    _add_data_args(p)
    p.add_argument("--k-features", type=_positive_int, default=5,
                   help="number of selected features (default 5)")
    p.add_argument("--b", type=_fraction, default=0.5, help="decay factor (default 0.5)")
    p.add_argument("--sf", action="store_true", help="append the SF recency feature")
    p.add_argument("--sf-peak-one", action="store_true",
                   help="SF emits 1 (not b) on suspicious rows")
    p.add_argument("--importance-trees", type=_positive_int, default=100,
                   help="trees in the MDA importance forest (default 100)")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker threads (default 1)")
    p.add_argument("--out", required=True, type=Path, help="pipeline file to write")

    p = sub.add_parser("transform", help="apply a saved pipeline to a CSV file")
    p.add_argument("--pipeline", required=True, type=Path, help="file written by 'fit'")
    p.add_argument("--data", required=True, type=Path, help="input CSV with the fit-time schema")
    p.add_argument("--out", type=Path, default=None, help="output CSV (default: stdout)")

    p = sub.add_parser("bench", help="cross-validate feature methods across models")
    _add_data_args(p)
    p.add_argument("--methods", type=_csv_list(METHODS), default=["base", "pca", "mda", "lemda"],
                   help=f"comma list from {','.join(METHODS)} (default base,pca,mda,lemda)")
    p.add_argument("--models", type=_csv_list(MODELS), default=["dt", "rf", "mlp"],
                   help=f"comma list from {','.join(MODELS)} (default dt,rf,mlp)")
    p.add_argument("--k", type=_positive_int, default=10, help="cross-validation folds (default 10)")
    p.add_argument("--k-features", type=_positive_int, default=5,
                   help="features kept by MDI/MDA/LEMDA (default 5)")
    p.add_argument("--b", type=_fraction, default=0.5, help="decay factor (default 0.5)")
    p.add_argument("--sf", action="store_true", help="enable SF (switches to block folds)")
    p.add_argument("--sf-peak-one", action="store_true",
                   help="SF emits 1 (not b) on suspicious rows")
    p.add_argument("--pca-threshold", type=float, default=0.95,
                   help="explained variance to keep (default 0.95)")
    p.add_argument("--trees", type=_positive_int, default=100, help="RF trees (default 100)")
    p.add_argument("--importance-trees", type=_positive_int, default=100,
                   help="trees in the MDA importance forest (default 100)")
    p.add_argument("--fold-mode", choices=("stratified", "block"), default=None,
                   help="fold construction (default: stratified, or block with --sf)")
    p.add_argument("--global-selection", action="store_true",
                   help="fit feature selection once on all rows instead of per fold")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker threads (default 1)")
    p.add_argument("--out", required=True, type=Path,
                   help="output directory for report.json and table.txt")

    p = sub.add_parser("report", help="re-render a saved report.json as a text table")
    p.add_argument("report", type=Path, help="report.json written by 'bench'")
    p.add_argument("--out", type=Path, default=None, help="table file (default: stdout)")
    return parser


def _load(args):
    schema = read_schema(args.schema)
    data = load_csv(args.data, schema, normal_label=args.normal_label,
                    attack_label=args.attack_label)
    return schema, data


def cmd_synth(args) -> None:
    try:
        cfg = SynthConfig(rows=args.rows, attack_fraction=args.attack_frac,
                          cardinality=args.cardinality, attack_values=args.attack_values,
                          signal=args.signal, informative=args.informative, noise=args.noise,
                          numeric_shift=args.numeric_shift, burst_mean=args.burst_mean,
                          seed=args.seed)
    except ValueError as exc:
        raise UsageError(f"lemda synth: error: {exc}") from None
    csv_path, schema_path = write_dataset(generate_dataset(cfg), args.out)
    print(f"wrote {csv_path} and {schema_path}")


def cmd_fit(args) -> None:
    schema, data = _load(args)
    cfg = LemdaConfig(k_features=args.k_features, b=args.b, sf_enabled=args.sf,
                      sf_peak_at_one=args.sf_peak_one, seed=args.seed,
                      importance_trees=args.importance_trees)
    pipeline = fit_pipeline(data, cfg, jobs=args.jobs).with_source(
        schema=[[c.name, c.kind.value] for c in schema],
        labels={"normal": args.normal_label, "attack": args.attack_label},
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(pipeline.dumps() + "\n")
    print(f"wrote {args.out}: features {', '.join(pipeline.output_features)}")


def cmd_transform(args) -> None:
    pipeline = LemdaPipeline.loads(args.pipeline.read_text())
    source = pipeline.source
    if "schema" not in source:
        raise LemdaError(f"{args.pipeline} does not record its training schema")
    schema = [ColumnSchema(name, kind) for name, kind in source["schema"]]
    labels = source.get("labels", {"normal": "0", "attack": "1"})
    data = load_csv(args.data, schema, normal_label=labels["normal"],
                    attack_label=labels["attack"])
    out = transform_pipeline(pipeline, data)
    if args.out is None:
        write_csv(out, sys.stdout, labels["normal"], labels["attack"])
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(out, args.out, labels["normal"], labels["attack"])


def cmd_bench(args) -> None:
    _, data = _load(args)
    cfg = ExperimentConfig(
        k_features=args.k_features, b=args.b, sf_enabled=args.sf,
        sf_peak_at_one=args.sf_peak_one, pca_threshold=args.pca_threshold, seed=args.seed,
        forest=ForestConfig(n_trees=args.trees), importance_trees=args.importance_trees,
        selection="global" if args.global_selection else "per_fold",
    )
    run_config = {"data": str(args.data), "schema": str(args.schema),
                  "normal_label": args.normal_label, "attack_label": args.attack_label,
                  "jobs": args.jobs}
    report = run_bench(data, args.methods, args.models, cfg, k=args.k,
                       fold_mode=args.fold_mode, jobs=args.jobs, extra_config=run_config)
    args.out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    (args.out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    table = format_table(doc)
    (args.out / "table.txt").write_text(table)
    print(table, end="")


def cmd_report(args) -> None:
    try:
        doc = json.loads(args.report.read_text())
    except json.JSONDecodeError as exc:
        raise LemdaError(f"{args.report} is not valid JSON: {exc}") from exc
    table = format_table(doc)
    if args.out is None:
        print(table, end="")
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(table)


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "transform": cmd_transform,
            "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (LemdaError, OSError, KeyError, ValueError) as exc:
        print(f"lemda: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
