"""Batch command-line front end: synthesize, evaluate, indif.

Every run is driven by one seed. When the flag is absent a seed is drawn
from system entropy and recorded in the run's artifacts, so any output can
be reproduced by passing the recorded value back in. Exit codes follow the
usual convention: 0 success, 2 for usage or validation problems, 1 for
runtime failures after validation passed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .data import DataError, Dataset, load_csv, load_domain, write_csv
from .evaluation import range_query_error, sample_queries, two_way_error
from .marginal import indif
from .pipeline import PipelineConfig, PipelineError, run
from .privacy import dp_to_zcdp
from .selection import publish_indif

NO_NOISE_WARNING = (
    "WARNING: --no-noise disables the differential privacy guarantee; "
    "the output is an exact statistic of the input data."
)

_CONFIG_TUPLE_KEYS = ("decay",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="margsyn",
        description="Differentially private synthetic data from noisy marginals.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, *, budget: str):
        sub.add_argument("--data", required=True, help="input CSV with header row")
        sub.add_argument(
            "--domain", required=True,
            help="JSON object mapping attribute name to value labels",
        )
        sub.add_argument("--seed", type=int, default=None,
                         help="RNG seed (default: drawn from entropy and recorded)")
        sub.add_argument("--threads", type=int, default=1,
                         help="worker threads; recorded, stages run sequentially")
        if budget == "required":
            sub.add_argument("--epsilon", type=float, required=True)
            sub.add_argument("--delta", type=float, default=None,
                             help="default: 1/m^2 for the noisy record count m")
        elif budget == "optional":
            sub.add_argument("--epsilon", type=float, default=None)
            sub.add_argument("--delta", type=float, default=None)

    synth = commands.add_parser(
        "synthesize", help="generate a synthetic dataset under (epsilon, delta)"
    )
    add_common(synth, budget="required")
    synth.add_argument("--config", default=None,
                       help="JSON file of pipeline settings to override")
    synth.add_argument("--out", required=True,
                       help="output directory for synthetic.csv and run artifacts")

    evaluate = commands.add_parser(
        "evaluate", help="compare a synthetic dataset against the original"
    )
    evaluate.add_argument("synthetic", help="synthetic CSV to score")
    add_common(evaluate, budget="none")
    evaluate.add_argument("--queries", type=int, default=100,
                          help="number of random range queries (0 disables)")
    evaluate.add_argument("--out", default=None,
                          help="metrics JSON path (default: stdout)")

    indif_cmd = commands.add_parser(
        "indif", help="print pairwise dependency scores (debug view)"
    )
    add_common(indif_cmd, budget="optional")
    indif_cmd.add_argument("--no-noise", action="store_true",
                           help="exact scores; NOT differentially private")
    indif_cmd.add_argument("--out", default=None,
                           help="also write the score rows to this JSON file")
    return parser


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(np.random.SeedSequence().entropy)


def _check_threads(threads: int) -> None:
    if threads < 1:
        raise ValueError(f"--threads must be at least 1, got {threads}")


def _load_config(path: str | None) -> tuple[PipelineConfig, dict]:
    """Build a PipelineConfig from a JSON override file (or defaults)."""
    if path is None:
        return PipelineConfig(), {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config {path} must be a JSON object")
    known = {f.name for f in dataclass_fields(PipelineConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(unknown)}")
    for key in _CONFIG_TUPLE_KEYS:
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(raw[key])
    return PipelineConfig(**raw), raw


def _json_pair(spec_attrs, domains) -> list[str]:
    return [domains[a].name for a in spec_attrs]


def cmd_synthesize(args) -> int:
    _check_threads(args.threads)
    config, overrides = _load_config(args.config)
    domains = load_domain(args.domain)
    dataset = load_csv(args.data, domains)
    seed = _resolve_seed(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = run(dataset, args.epsilon, args.delta, config,
                 np.random.default_rng(seed))

    write_csv(result.synthetic, out / "synthetic.csv")
    selection = {
        "seed": seed,
        "scores": [
            {
                "pair": _json_pair(s.pair, domains),
                "noisy_indif": s.noisy_indif,
                "cells": s.cell_count,
            }
            for s in result.scores
        ],
        "chosen": [_json_pair(s.attributes, domains) for s in result.selection.chosen],
        "combined": [
            _json_pair(s.attributes, domains) for s in result.selection.combined
        ],
        "rho_per_marginal": {
            ",".join(_json_pair(spec.attributes, domains)): rho
            for spec, rho in result.rho_per_published.items()
        },
    }
    (out / "selection.json").write_text(
        json.dumps(selection, indent=2), encoding="utf-8"
    )
    manifest = {
        "command": "synthesize",
        "data": args.data,
        "domain": args.domain,
        "config": args.config,
        "out": args.out,
        "seed": seed,
        "threads": args.threads,
        "epsilon": args.epsilon,
        "delta": args.delta,
        "settings": overrides,
        "budget": {
            "epsilon": result.budget.epsilon,
            "delta": result.budget.delta,
            "rho_total": result.budget.rho_total,
            "splits": result.budget.splits,
        },
        "n_synth": result.n_synth,
        "audit": [[name, rho] for name, rho in result.audit],
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2), encoding="utf-8"
    )
    return 0


def cmd_evaluate(args) -> int:
    _check_threads(args.threads)
    if args.queries < 0:
        raise ValueError(f"--queries must be nonnegative, got {args.queries}")
    domains = load_domain(args.domain)
    original = load_csv(args.data, domains)
    synthetic = load_csv(args.synthetic, domains)
    seed = _resolve_seed(args)

    range_error = None
    if args.queries > 0:
        queries = sample_queries(domains, args.queries, np.random.default_rng(seed))
        range_error = range_query_error(original, synthetic, queries)
    report = {
        "two_way_error": two_way_error(original, synthetic),
        "range_query_error": range_error,
        "classifier_accuracy": None,
        "settings": {
            "data": args.data,
            "synthetic": args.synthetic,
            "domain": args.domain,
            "queries": args.queries,
            "seed": seed,
            "threads": args.threads,
        },
    }
    text = json.dumps(report, indent=2)
    if args.out is None:
        print(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_indif(args) -> int:
    _check_threads(args.threads)
    domains = load_domain(args.domain)
    dataset = load_csv(args.data, domains)

    if args.no_noise:
        print(NO_NOISE_WARNING, file=sys.stderr)
        rows = [
            {
                "pair": _json_pair((a, b), domains),
                "indif": indif(dataset, a, b),
                "cells": domains[a].size * domains[b].size,
            }
            for a, b in itertools.combinations(range(dataset.d), 2)
        ]
    else:
        if args.epsilon is None:
            raise ValueError("noisy scores need --epsilon (or pass --no-noise)")
        if args.delta is None:
            raise ValueError("noisy scores need --delta (or pass --no-noise)")
        seed = _resolve_seed(args)
        rho_select = (
            PipelineConfig().splits["select"] * dp_to_zcdp(args.epsilon, args.delta)
        )
        scores = publish_indif(dataset, rho_select, np.random.default_rng(seed))
        rows = [
            {
                "pair": _json_pair(s.pair, domains),
                "indif": s.noisy_indif,
                "cells": s.cell_count,
            }
            for s in scores
        ]
    text = json.dumps(rows, indent=2)
    print(text)
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


_COMMANDS = {
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
    "indif": cmd_indif,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "epsilon", None) is not None and args.epsilon <= 0.0:
        print(f"error: epsilon must be positive, got {args.epsilon}",
              file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: failed at the {exc.stage} stage: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
