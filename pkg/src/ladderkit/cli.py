"""Command-line interface.

Subcommands cover the whole workflow: exhaustive sweeps, ground-truth
reference ladders, calibration fitting, predicted ladders from entry
CRFs, curve deltas between two ladders, and run-level reporting.

Exit codes: 0 success, 2 validation/usage error, 3 external tool
failure, 4 curves share no overlap.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bd import RQAnchorSet, bd_quality, bd_rate
from .config import load_config
from .crf_rate import (
    CalibrationSample,
    fit_calibration,
    fit_crf_rate,
    load_calibration,
    save_calibration,
)
from .errors import (
    InsufficientAnchorsError,
    LadderError,
    PredictionAborted,
    SchemaError,
    ToolError,
)
from .ground_truth import (
    DEFAULT_HQ_VMAF,
    DEFAULT_K,
    DEFAULT_R_MIN_KBPS,
    K_RANGE,
    build_reference_ladder,
    extract_crossovers,
    extract_hq_point,
)
from .orchestrator import (
    EncodeOrchestrator,
    discover_sweeps,
    load_scene_manifests,
    load_sweep,
    save_sweep,
)
from .predictor import (
    DEFAULT_HQ_FALLBACK_STEP,
    load_predictions,
    predict_ladder,
)
from .report import assemble_report, write_report_files
from .rq import RESOLUTIONS, build_pareto_front
from .store import load_ladder, save_front, save_ladder

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TOOL = 3
EXIT_NO_OVERLAP = 4


def _add_walk_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--k",
        type=float,
        default=None,
        help=f"ladder step factor, within [{K_RANGE[0]}, {K_RANGE[1]}] (default {DEFAULT_K})",
    )
    parser.add_argument(
        "--r-min",
        type=float,
        default=None,
        dest="r_min",
        help=f"minimum rung bitrate in kbps (default {DEFAULT_R_MIN_KBPS:.0f})",
    )


def _walk_params(args, config=None) -> tuple[float, float]:
    k = args.k if args.k is not None else (config.k if config else DEFAULT_K)
    r_min = args.r_min if args.r_min is not None else (
        config.r_min_kbps if config else DEFAULT_R_MIN_KBPS
    )
    lo, hi = K_RANGE
    if not lo <= k <= hi:
        raise SchemaError(f"step factor k must be within [{lo}, {hi}], got {k}")
    if not r_min > 0:
        raise SchemaError(f"r-min must be positive, got {r_min}")
    return k, r_min


def _select_manifests(config, scene_filter):
    if config.scenes_file is None:
        raise SchemaError("config has no scenes_file; nothing to encode")
    manifests = load_scene_manifests(config.scenes_file)
    if scene_filter:
        wanted = set(scene_filter)
        manifests = [m for m in manifests if m.scene_id in wanted]
        missing = wanted - {m.scene_id for m in manifests}
        if missing:
            raise SchemaError(f"unknown scene id(s): {', '.join(sorted(missing))}")
    return manifests


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    manifests = _select_manifests(config, args.scenes)
    orch = EncodeOrchestrator(
        config.tools, config.cache_dir, parallelism=config.parallelism
    )
    out_dir = Path(args.out)
    any_failures = False
    for manifest in manifests:
        sweep, failures = orch.exhaustive_sweep(manifest)
        save_sweep(sweep, out_dir, tools=config.tools, failures=failures)
        invocations = orch.invocations(manifest.scene_id, "sweep")
        print(
            f"scene {manifest.scene_id}: {len(sweep.points)} points "
            f"({invocations} tool invocations, {len(failures)} failures)"
        )
        any_failures = any_failures or bool(failures)
    return EXIT_TOOL if any_failures else EXIT_OK


def cmd_reference(args) -> int:
    k, r_min = _walk_params(args)
    sweep_files = discover_sweeps(args.sweeps)
    if not sweep_files:
        raise SchemaError(f"no sweep files under {args.sweeps}")
    out_dir = Path(args.out)
    for path in sweep_files:
        sweep = load_sweep(path)
        front = build_pareto_front(sweep.points)
        hq = extract_hq_point(sweep, target_vmaf=args.target_vmaf)
        ladder = build_reference_ladder(
            front, hq, k=k, r_min_kbps=r_min, scene_id=sweep.scene_id
        )
        crossovers = extract_crossovers(sweep.scene_id, front)
        warnings = []
        if not hq.reachable:
            warnings.append(
                f"target vmaf {args.target_vmaf:.1f} unreachable at 1080p"
            )
        for res in crossovers.absent:
            warnings.append(f"{res.label} absent from the front")
        save_front(front, out_dir / f"{sweep.scene_id}.front.csv")
        save_ladder(
            ladder,
            out_dir / f"{sweep.scene_id}.ladder.csv",
            meta={
                "kind": "reference",
                "hq": {
                    "crf": hq.point.crf,
                    "bitrate_kbps": hq.point.bitrate_kbps,
                    "vmaf": hq.point.vmaf,
                    "reachable": hq.reachable,
                    "target_vmaf": hq.target_vmaf,
                },
                "crossovers": {
                    r.resolution.label: {"crf_low": r.crf_low, "crf_high": r.crf_high}
                    for r in crossovers.ranges
                },
                "warnings": warnings,
            },
        )
        print(
            f"scene {sweep.scene_id}: {len(ladder.rungs)} rungs, "
            f"front {len(front.points)} points"
            + (f", warnings: {'; '.join(warnings)}" if warnings else "")
        )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    sweep_files = discover_sweeps(args.sweeps)
    if not sweep_files:
        raise SchemaError(f"no sweep files under {args.sweeps}")
    samples = []
    for path in sweep_files:
        sweep = load_sweep(path)
        front = build_pareto_front(sweep.points)
        crossovers = extract_crossovers(sweep.scene_id, front)
        zetas = {}
        for res in RESOLUTIONS:
            points = sweep.for_resolution(res)
            if len(points) >= 2:
                model = fit_crf_rate(
                    res, [(p.crf, p.bitrate_kbps) for p in points]
                )
                zetas[res] = model.zeta
        samples.append(CalibrationSample(crossovers=crossovers, zetas=zetas))
    calibration = fit_calibration(samples)
    save_calibration(calibration, args.out)
    print(
        f"calibration from {len(samples)} scenes: "
        f"{len(calibration.crossover_maps)} crossover map(s), "
        f"{len(calibration.slope_maps)} slope map(s) -> {args.out}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    config = load_config(args.config)
    k, r_min = _walk_params(args, config)
    calibration = load_calibration(args.calibration)
    predictions = load_predictions(args.predictions)
    if args.scenes:
        wanted = set(args.scenes)
        predictions = [p for p in predictions if p.scene_id in wanted]
        missing = wanted - {p.scene_id for p in predictions}
        if missing:
            raise SchemaError(
                f"no predictions for scene id(s): {', '.join(sorted(missing))}"
            )
    manifests = {m.scene_id: m for m in _select_manifests(config, None)}
    orch = EncodeOrchestrator(
        config.tools, config.cache_dir, parallelism=config.parallelism
    )
    out_dir = Path(args.out)
    mode = "predicted_nohq" if args.no_hq else "predicted"
    for predicted in predictions:
        manifest = manifests.get(predicted.scene_id)
        if manifest is None:
            raise SchemaError(
                f"predictions reference scene {predicted.scene_id!r} "
                "missing from the scenes file"
            )

        def encode(resolution, crf, _manifest=manifest):
            return orch.run_encode(_manifest, resolution, crf, "predict").to_rq_point()

        outcome = predict_ladder(
            predicted,
            calibration,
            encode,
            k=k,
            r_min_kbps=r_min,
            use_hq=not args.no_hq,
            hq_fallback_step=args.fallback_step,
        )
        entry_counts = {
            "pre_encodes": outcome.pre_encodes,
            "rung_encodes": outcome.rung_encodes,
            "total": outcome.total_encodes,
        }
        save_ladder(
            outcome.ladder,
            out_dir / f"{predicted.scene_id}.ladder.csv",
            meta={
                "kind": mode,
                "counts": entry_counts,
                "provenance": "fallback" if args.no_hq else predicted.provenance,
                "warnings": list(outcome.warnings),
                "tool_invocations": orch.invocations(predicted.scene_id, "predict"),
            },
        )
        print(
            f"scene {predicted.scene_id}: {len(outcome.ladder.rungs)} rungs, "
            f"{outcome.pre_encodes}+{outcome.rung_encodes}="
            f"{outcome.total_encodes} encodes"
        )
    return EXIT_OK


def cmd_bd(args) -> int:
    test = RQAnchorSet.from_ladder(load_ladder(args.test))
    reference = RQAnchorSet.from_ladder(load_ladder(args.reference))
    rate = bd_rate(test, reference)
    quality = bd_quality(test, reference)
    if not rate.ok or not quality.ok:
        print("status: no-overlap (curves share no common interval)")
        return EXIT_NO_OVERLAP
    print(f"bd-rate: {rate.bd_rate_percent:+.4f}%")
    print(f"bd-vmaf: {quality.bd_vmaf:+.4f}")
    lo, hi = rate.vmaf_overlap
    print(f"vmaf overlap: [{lo:.2f}, {hi:.2f}]")
    return EXIT_OK


def cmd_report(args) -> int:
    report = assemble_report(args.run, target_vmaf=args.target_vmaf)
    out_dir = Path(args.out) if args.out else Path(args.run) / "report"
    paths = write_report_files(report, out_dir)
    for mode in report["modes"]:
        summary = report["summary"][mode]
        line = f"{mode}: {summary['scenes_with_bd']}/{summary['scenes']} scenes with deltas"
        if "mean_bd_rate_percent" in summary:
            line += (
                f", mean bd-rate {summary['mean_bd_rate_percent']:+.3f}%, "
                f"mean bd-vmaf {summary['mean_bd_vmaf']:+.3f}"
            )
        complexity = summary["complexity"]
        if complexity.get("scenes"):
            line += (
                f", mean {complexity['mean_total_encodes']:.2f} encodes "
                f"({complexity['mean_reduction_percent']:.2f}% reduction)"
            )
        print(line)
    print(f"report written to {paths['report']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ladderkit",
        description="Per-scene bitrate ladder construction and evaluation.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="increase log detail"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run the exhaustive CRF sweep for each scene")
    p.add_argument("--config", required=True, help="run config (.toml or .json)")
    p.add_argument("--out", required=True, help="directory for sweep CSVs")
    p.add_argument("--scenes", nargs="*", help="restrict to these scene ids")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reference", help="build ground-truth ladders from sweeps")
    p.add_argument("--sweeps", required=True, help="directory of sweep CSVs")
    p.add_argument("--out", required=True, help="directory for reference artifacts")
    p.add_argument(
        "--target-vmaf",
        type=float,
        default=DEFAULT_HQ_VMAF,
        help=f"high-quality rung target (default {DEFAULT_HQ_VMAF:.0f})",
    )
    _add_walk_args(p)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("calibrate", help="fit cross-scene maps from swept scenes")
    p.add_argument("--sweeps", required=True, help="directory of sweep CSVs")
    p.add_argument("--out", required=True, help="output calibration JSON")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="build predicted ladders from entry CRFs")
    p.add_argument("--config", required=True, help="run config (.toml or .json)")
    p.add_argument("--predictions", required=True, help="predicted entry CRFs JSON")
    p.add_argument("--calibration", required=True, help="calibration JSON")
    p.add_argument("--out", required=True, help="directory for predicted ladders")
    p.add_argument("--scenes", nargs="*", help="restrict to these scene ids")
    p.add_argument(
        "--no-hq",
        action="store_true",
        help="treat the first slot as the 1080p entry CRF and back the "
        "first rung off it instead of using a high-quality CRF",
    )
    p.add_argument(
        "--fallback-step",
        type=int,
        default=DEFAULT_HQ_FALLBACK_STEP,
        help="CRF back-off for --no-hq (default %(default)s)",
    )
    _add_walk_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bd", help="rate/quality deltas between two ladder CSVs")
    p.add_argument("--test", required=True, help="ladder under test")
    p.add_argument("--reference", required=True, help="reference ladder")
    p.set_defaults(func=cmd_bd)

    p = sub.add_parser("report", help="assemble a run report with plot data")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--out", help="report directory (default <run>/report)")
    p.add_argument(
        "--target-vmaf",
        type=float,
        default=DEFAULT_HQ_VMAF,
        help=f"first-rung quality target (default {DEFAULT_HQ_VMAF:.0f})",
    )
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PredictionAborted, ToolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOOL
    except InsufficientAnchorsError as exc:
        print(f"no-overlap: {exc}", file=sys.stderr)
        return EXIT_NO_OVERLAP
    except (SchemaError, LadderError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
