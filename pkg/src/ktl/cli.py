"""Command-line interface.

Subcommands: safety, convergence, train-head, correlate, verify.  Every
artifact embeds the tool version, the fully resolved configuration and the
seed, so a run can be replayed exactly.  Exit codes: 0 success, 2 input or
validation problem, 3 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from . import finite_dist as fd
from .analytics import TransformationRecord, build_correlation_report
from .data import load_dataset
from .dataio import load_distribution, load_map
from .errors import (
    DegenerateInputError,
    DomainError,
    GenerationError,
    IngestionError,
    InternalConsistencyError,
    TrainingError,
    ValidationError,
)
from .head import TrainConfig, train_head
from .knn import KnnConfig, convergence_curve
from .suites import run_suite

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3

_INPUT_ERRORS = (
    ValidationError,
    DomainError,
    IngestionError,
    DegenerateInputError,
    FileNotFoundError,
    IsADirectoryError,
)
_COMPUTE_ERRORS = (TrainingError, GenerationError, InternalConsistencyError)


def _artifact(command: str, config: dict, payload: dict) -> str:
    doc = {
        "tool": {"name": "ktl", "version": __version__},
        "command": command,
        "config": config,
    }
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, command: str, config: dict,
               header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# ktl {command} v{__version__}\n")
        fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int)) else repr(v) for v in row])


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _int_list(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")


def _float_list(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {raw!r}")


def cmd_safety(args: argparse.Namespace) -> int:
    p = load_distribution(args.distribution)
    f = load_map(args.map)
    report = fd.safety_report(p, f)
    config = {
        "distribution": str(args.distribution),
        "map": str(args.map),
        "delta": args.delta,
    }
    payload: dict = {"report": report.to_dict(), "certificate": None}
    if args.delta is not None:
        cert = fd.pinsker_safety_certificate(p, f, args.delta)
        payload["certificate"] = cert.to_dict()
    _emit(_artifact("safety", config, payload), args.out)
    return EXIT_OK


def cmd_convergence(args: argparse.Namespace) -> int:
    train = load_dataset(args.train, args.data_format)
    test = load_dataset(args.test, args.data_format)
    config = {
        "train": str(args.train),
        "test": str(args.test),
        "k": args.k,
        "sizes": args.sizes,
        "runs": args.runs,
        "seed": args.seed,
    }
    curves = {}
    rows = []
    for k in args.k:
        curve = convergence_curve(train, test, KnnConfig(k), args.sizes,
                                  args.runs, args.seed)
        curves[k] = curve
        for pt in curve.points:
            rows.append([k, pt.size, pt.mean, pt.sd, pt.ci95, pt.runs])
    out = Path(args.out)
    _write_csv(out, "convergence", config,
               ["k", "size", "mean", "sd", "ci95", "runs"], rows)
    if not args.no_figure:
        from .plots import save_convergence_figure

        save_convergence_figure(curves, out.with_suffix(".png"))
    sys.stdout.write(f"wrote {out}\n")
    return EXIT_OK


def cmd_train_head(args: argparse.Namespace) -> int:
    train = load_dataset(args.train, args.data_format)
    test = load_dataset(args.test, args.data_format)
    fields: dict = {}
    if args.config:
        try:
            fields = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON ({exc})") from exc
        unknown = set(fields) - {
            "learning_rates", "l2_strengths", "epochs", "batch_size",
            "momentum", "seed",
        }
        if unknown:
            raise ValidationError(f"{args.config}: unknown fields {sorted(unknown)}")
    # flags win over the config file
    if args.lr is not None:
        fields["learning_rates"] = args.lr
    if args.l2 is not None:
        fields["l2_strengths"] = args.l2
    for name in ("epochs", "batch_size", "momentum", "seed"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    try:
        if "learning_rates" in fields:
            fields["learning_rates"] = tuple(float(v) for v in fields["learning_rates"])
        if "l2_strengths" in fields:
            fields["l2_strengths"] = tuple(float(v) for v in fields["l2_strengths"])
        cfg = TrainConfig(**fields)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad training config: {exc}") from None
    _, report = train_head(train, test, cfg)
    config = {
        "train": str(args.train),
        "test": str(args.test),
        "learning_rates": list(cfg.learning_rates),
        "l2_strengths": list(cfg.l2_strengths),
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "momentum": cfg.momentum,
        "seed": cfg.seed,
    }
    _emit(_artifact("train-head", config, {"report": report.to_dict()}), args.out)
    return EXIT_OK


def cmd_correlate(args: argparse.Namespace) -> int:
    try:
        raw = json.loads(Path(args.records).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.records}: invalid JSON ({exc})") from exc
    if not isinstance(raw, list):
        raise ValidationError(f"{args.records}: expected a JSON list of records")
    records = [TransformationRecord.from_dict(obj) for obj in raw]
    report = build_correlation_report(records, args.k)
    config = {
        "records": str(args.records),
        "k": args.k,
        "surrogate_exponent": args.surrogate_exponent,
    }
    prefix = Path(args.out_prefix)
    rows = []
    for rec in records:
        surrogate = rec.surrogate(args.k, args.surrogate_exponent)
        rows.append([
            rec.name, rec.dim, rec.mse, rec.frobenius_norm,
            rec.knn_error[args.k],
            "" if surrogate is None else repr(surrogate),
        ])
    _write_csv(prefix.with_suffix(".csv"), "correlate", config,
               ["name", "dim", "mse", "norm", "knn_err", "surrogate"], rows)
    text = _artifact("correlate", config, {"report": report.to_dict()})
    Path(prefix.with_suffix(".json")).write_text(text)
    sys.stdout.write(text)
    if not args.no_figure:
        from .plots import save_correlation_figure

        save_correlation_figure(records, args.k, prefix.with_suffix(".png"))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    report = run_suite(args.suite, args.trials, args.seed)
    sys.stdout.write(report.summary() + "\n")
    for failure in report.failures:
        sys.stdout.write(f"  counterexample: {failure}\n")
    return EXIT_OK if report.passed else EXIT_COMPUTE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ktl",
        description="Bayes-error safety calculus and kNN convergence benchmarks",
    )
    parser.add_argument("--version", action="version", version=f"ktl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("safety", help="safety report for a distribution and a map")
    p.add_argument("distribution", help="distribution JSON file")
    p.add_argument("map", help="map JSON file")
    p.add_argument("--delta", type=float, default=None,
                   help="also check the KL safety certificate at this level")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(fn=cmd_safety)

    p = sub.add_parser("convergence", help="subsampled error curves")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--k", type=_int_list, required=True, help="comma-separated k values")
    p.add_argument("--sizes", type=_int_list, required=True,
                   help="comma-separated subsample sizes")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="convergence.csv")
    p.add_argument("--data-format", default="auto", choices=["auto", "csv", "binary"])
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(fn=cmd_convergence)

    p = sub.add_parser("train-head", help="train the softmax head over the grid")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--config", default=None, help="JSON training config")
    p.add_argument("--lr", type=_float_list, default=None)
    p.add_argument("--l2", type=_float_list, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--data-format", default="auto", choices=["auto", "csv", "binary"])
    p.set_defaults(fn=cmd_train_head)

    p = sub.add_parser("correlate", help="correlation report over records")
    p.add_argument("records", help="JSON list of transformation records")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--surrogate-exponent", type=float, default=0.25,
                   choices=[0.25, 1.0])
    p.add_argument("--out-prefix", default="correlate")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("verify", help="run a randomized verification suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _INPUT_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except _COMPUTE_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
