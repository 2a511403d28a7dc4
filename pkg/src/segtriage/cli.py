"""Batch command line: generate, validate, score, correlate, fit,
simulate, and serve.

Exit codes: 0 success, 1 validation/data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .bundle import BundleError, read_bundle, validate_bundle
from .scoring import (
    correlation_corpus,
    fit_corpus,
    read_scores,
    score_bundle,
    write_scores,
)
from .simulate import SimulationConfig, export_curves, run_simulation_report
from .statmodel import (
    InsufficientDataError,
    SingularDesignError,
    UndefinedCorrelationError,
    correlation_report,
    fit_quality_model,
    format_correlation_table,
    format_regression_table,
    model_to_json,
)
from .synth import GeneratorConfig, write_corpus

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _bundle_paths(input_path: Path) -> list[Path]:
    if input_path.is_dir():
        return sorted(input_path.glob("*.ubnd"))
    return [input_path]


def cmd_gen(args) -> int:
    config = GeneratorConfig(
        num_images=args.images,
        passes=args.passes,
        num_classes=args.classes,
        height=args.height,
        width=args.width,
        layout=args.layout,
        quality_range=(args.quality_lo, args.quality_hi),
        coupling=args.coupling,
        noise_scale=args.noise,
        seed=args.seed,
        background_coupling=args.background_coupling,
    )
    manifest = write_corpus(config, args.output)
    print(f"wrote {len(manifest['images'])} bundles to {args.output}")
    return EXIT_OK


def cmd_validate(args) -> int:
    paths = _bundle_paths(Path(args.input))
    if not paths:
        print(f"no .ubnd files under {args.input}", file=sys.stderr)
        return EXIT_FAILURE
    failures = 0
    for path in paths:
        with open(path, "rb") as fh:
            report = validate_bundle(fh)
        if report.ok:
            print(f"{path.name}: ok")
        else:
            failures += 1
            for violation in report.violations:
                print(f"{path.name}: {violation}")
    print(f"{len(paths) - failures}/{len(paths)} bundles valid")
    return EXIT_OK if failures == 0 else EXIT_FAILURE


def cmd_score(args) -> int:
    paths = _bundle_paths(Path(args.input))
    if not paths:
        print(f"no .ubnd files under {args.input}", file=sys.stderr)
        return EXIT_FAILURE
    scores = []
    class_names: list[str] | None = None
    for path in paths:
        try:
            with open(path, "rb") as fh:
                bundle = read_bundle(fh)
        except BundleError as exc:
            print(f"{path.name}: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        if class_names is None:
            class_names = list(bundle.class_spec.class_names)
        elif class_names != list(bundle.class_spec.class_names):
            print(
                f"{path.name}: class names differ from the rest of the corpus",
                file=sys.stderr,
            )
            return EXIT_FAILURE
        scores.append(score_bundle(bundle))
    write_scores(scores, args.output, class_names)
    labeled = sum(1 for s in scores if s.dice is not None)
    print(f"scored {len(scores)} images ({labeled} labeled) -> {args.output}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    scores, class_names = read_scores(args.input)
    corpus = correlation_corpus(scores)
    try:
        report = correlation_report(corpus)
    except (InsufficientDataError, UndefinedCorrelationError) as exc:
        print(f"correlation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(format_correlation_table(report, class_names))
    if args.output:
        if args.format == "json":
            doc = {
                "format": "segtriage-correlation-report",
                "format_version": 1,
                "n": report.n,
                "class_names": class_names,
                "per_class_r": list(report.per_class_r),
                "per_class_n": list(report.per_class_n),
                "image_level_r": report.image_level_r,
            }
            text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        else:
            lines = ["series,r,pairs"]
            for name, r, n_used in zip(
                class_names, report.per_class_r, report.per_class_n
            ):
                shown = "" if r is None else repr(r)
                lines.append(f"{name},{shown},{n_used}")
            image = "" if report.image_level_r is None else repr(report.image_level_r)
            lines.append(f"image_level,{image},{report.n}")
            text = "\n".join(lines) + "\n"
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_fit(args) -> int:
    scores, class_names = read_scores(args.input)
    corpus = fit_corpus(scores)
    try:
        model = fit_quality_model(corpus, alpha=args.alpha)
    except (InsufficientDataError, SingularDesignError) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(format_regression_table(model, class_names))
    if args.output:
        Path(args.output).write_text(model_to_json(model) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scores, _ = read_scores(args.input)
    corpus = fit_corpus(scores)
    if len(corpus) < 2:
        print("simulation needs at least 2 labeled images", file=sys.stderr)
        return EXIT_FAILURE
    config = SimulationConfig(
        fit_count=args.fit_count,
        seed=args.seed,
        alpha=args.alpha,
        random_baseline_mode=args.random_mode,
        trials=args.trials,
    )
    try:
        report = run_simulation_report(corpus, config)
    except (InsufficientDataError, SingularDesignError, ValueError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out = Path(args.output)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        export_curves(report.curves, fh)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    n = len(report.sim_indices)
    print(
        f"simulated {n} images (fit on {len(report.fit_indices)}), "
        f"model R2 {report.model.r_squared:.3f} -> {out}"
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import TriageStore, create_app, load_palette

    palette = load_palette(args.palette) if args.palette else None
    store = TriageStore(args.data_dir)
    app = create_app(store, palette=palette)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segtriage",
        description="Uncertainty-based triage for semantic-segmentation predictions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic bundle corpus")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--images", type=int, default=100)
    p.add_argument("--passes", type=int, default=5)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--layout", choices=["stripes", "blobs"], default="blobs")
    p.add_argument("--quality-lo", type=float, default=0.35)
    p.add_argument("--quality-hi", type=float, default=0.95)
    p.add_argument("--coupling", type=float, default=0.9)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--background-coupling", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="validate bundles in a file or directory")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="score a corpus into a score file")
    p.add_argument("--input", required=True, help=".ubnd file or directory")
    p.add_argument("--output", required=True, help="score CSV path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("correlate", help="correlation report from a score file")
    p.add_argument("--input", required=True, help="score CSV path")
    p.add_argument("--output", help="optional report artifact path")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit", help="fit the quality regression from a score file")
    p.add_argument("--input", required=True, help="score CSV path")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--output", help="optional model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the human-in-the-loop simulation")
    p.add_argument("--input", required=True, help="score CSV path")
    p.add_argument("--output", required=True, help="curves CSV path")
    p.add_argument("--report", help="optional JSON report path")
    p.add_argument("--fit-count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument(
        "--random-mode", choices=["analytic", "monte_carlo"], default="analytic"
    )
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_simulate)

    # flags win over SEGTRIAGE_* environment variables
    p = sub.add_parser("serve", help="run the review service")
    p.add_argument(
        "--data-dir",
        default=os.environ.get("SEGTRIAGE_DATA_DIR"),
        required="SEGTRIAGE_DATA_DIR" not in os.environ,
    )
    p.add_argument("--host", default=os.environ.get("SEGTRIAGE_HOST", "127.0.0.1"))
    p.add_argument(
        "--port", type=int, default=int(os.environ.get("SEGTRIAGE_PORT", "8077"))
    )
    p.add_argument(
        "--palette",
        default=os.environ.get("SEGTRIAGE_PALETTE"),
        help="JSON palette file",
    )
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
