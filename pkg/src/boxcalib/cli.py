"""Command-line interface.

Exit codes: 0 success, 1 usage / I-O / parse error, 2 calibration failure.
Progress goes to stderr; results only to the files named by the flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data_io
from .config import PRESETS, resolve_strategy
from .errors import CalibError, EmptyScene, IoError
from .evaluation import (
    SUCCESS_RTE_M,
    DifficultyRule,
    classify_difficulty,
    count_covisible,
    rre,
    rte,
    run_benchmark,
)
from .pipeline import calibrate
from .synth import PRNG_NAME, SynthParams, synth_dataset

log = logging.getLogger("boxcalib")

EXIT_OK, EXIT_USAGE, EXIT_CALIB = 0, 1, 2
JOBS_ENV = "BOXCALIB_JOBS"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for calibration failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _strategy(value: str):
    try:
        return resolve_strategy(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    except OSError as exc:
        raise argparse.ArgumentTypeError(f"cannot read strategy file {value}: {exc}") from exc
    except CalibError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def cmd_calibrate(args) -> int:
    scene_inf = data_io.load_scene(args.infra)
    scene_veh = data_io.load_scene(args.veh)
    gt = data_io.load_extrinsic(args.gt) if args.gt else None
    try:
        result = calibrate(scene_inf, scene_veh, args.strategy)
        out = result.to_dict(timings=not args.no_timings)
    except EmptyScene as exc:
        result = None
        out = {"status": "no_common_targets", "message": str(exc), "extrinsic": None,
               "strategy": args.strategy.to_dict()}
    status = out["status"]
    if gt is not None and status == "ok":
        out["rre_deg"] = rre(gt.rotation, result.extrinsic.rotation)
        out["rte_m"] = rte(gt.translation, result.extrinsic.translation)
        out["success"] = out["rte_m"] < SUCCESS_RTE_M
    data_io.write_text(args.out, data_io.dumps(out))
    if args.geometry and status == "ok":
        data_io.export_merged_geometry(result, scene_inf, scene_veh, args.geometry)
    log.info("status=%s matches=%d", status, len(result.matches) if result else 0)
    return EXIT_OK if status == "ok" else EXIT_CALIB


def cmd_benchmark(args) -> int:
    records = data_io.load_dataset(args.dataset)
    log.info("benchmarking %d frame pairs with strategy %s", len(records), args.strategy.name)
    report = run_benchmark(records, args.strategy, jobs=args.jobs, threshold=args.threshold)
    data_io.export_report(report, args.report, timings=not args.no_timings)
    for group, agg in report.aggregates.items():
        log.info("%s: %s", group, agg)
    return EXIT_OK


def _synth_params(args) -> SynthParams:
    if args.params:
        data = data_io.read_json(args.params)
        params = SynthParams.from_dict(data)
    else:
        params = SynthParams()
    overrides = {
        "n_common": args.n_common,
        "n_infra_only": args.n_infra_only,
        "n_vehicle_only": args.n_vehicle_only,
        "area": args.area,
        "translation_range": args.translation_range,
        "noise_center_sigma": args.noise_center,
        "noise_yaw_sigma": None if args.noise_yaw_deg is None else float(np.radians(args.noise_yaw_deg)),
        "noise_size_sigma": args.noise_size,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    overrides["seed"] = args.seed
    return dataclasses.replace(params, **overrides)


def _write_synth(params: SynthParams, n: int, out: Path):
    records = synth_dataset(params, n)
    header = {"prng": PRNG_NAME, "seed": params.seed, "params": params.to_dict()}
    data_io.save_dataset(records, out, header)


def cmd_synth(args) -> int:
    params = _synth_params(args)
    out = Path(args.out)
    if args.sweep_noise_center:
        for sigma in args.sweep_noise_center:
            sub = out / f"noise_center_{sigma:g}"
            _write_synth(dataclasses.replace(params, noise_center_sigma=sigma), args.n, sub)
            log.info("wrote %d pairs to %s", args.n, sub)
    else:
        _write_synth(params, args.n, out)
        log.info("wrote %d pairs to %s", args.n, out)
    return EXIT_OK


def cmd_classify(args) -> int:
    records = data_io.load_dataset(args.dataset)
    rule = DifficultyRule(args.min_common, args.max_translation)
    labels, counts = [], {"easy": 0, "hard": 0}
    for rec in records:
        label = classify_difficulty(rec, rule)
        counts[label] += 1
        labels.append({"id": rec.frame_id, "difficulty": label,
                       "covisible_pairs": count_covisible(rec, rule.covisible_iou)})
    data_io.write_text(args.out, data_io.dumps({"labels": labels, "counts": counts}))
    log.info("easy=%d hard=%d", counts["easy"], counts["hard"])
    return EXIT_OK


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boxcalib", description="Box-based infrastructure/vehicle LiDAR extrinsic calibration")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    presets = ", ".join(sorted(PRESETS))

    p = sub.add_parser("calibrate", parents=[common], help="calibrate one frame pair")
    p.add_argument("--infra", required=True, help="infrastructure scene file")
    p.add_argument("--veh", required=True, help="vehicle scene file")
    p.add_argument("--gt", help="ground-truth extrinsic file; adds rre_deg/rte_m to the output")
    p.add_argument("--strategy", type=_strategy, default="v1", help=f"preset ({presets}) or strategy JSON path")
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--geometry", help="optional PLY export of the merged boxes")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock timings from the output")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("benchmark", parents=[common], help="run a manifest dataset and write a report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--strategy", type=_strategy, default="v1", help=f"preset ({presets}) or strategy JSON path")
    p.add_argument("--report", required=True)
    p.add_argument("--jobs", type=int, default=_default_jobs(), help=f"worker threads (default ${JOBS_ENV} or 1)")
    p.add_argument("--threshold", type=float, default=SUCCESS_RTE_M, help="success RTE threshold in meters")
    p.add_argument("--no-timings", action="store_true", help="write time fields as null")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("synth", parents=[common], help="generate a seeded synthetic dataset")
    p.add_argument("--params", help="SynthParams JSON file; flags below override it")
    p.add_argument("--n", type=int, required=True, help="number of frame pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-common", type=int)
    p.add_argument("--n-infra-only", type=int)
    p.add_argument("--n-vehicle-only", type=int)
    p.add_argument("--area", type=float)
    p.add_argument("--translation-range", type=float)
    p.add_argument("--noise-center", type=float, help="center noise sigma, meters")
    p.add_argument("--noise-yaw-deg", type=float, help="yaw noise sigma, degrees")
    p.add_argument("--noise-size", type=float, help="size noise sigma, meters")
    p.add_argument("--sweep-noise-center", type=_floats,
                   help="comma-separated center-noise sigmas; one sub-directory each")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("classify", parents=[common], help="label frame pairs easy/hard")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-common", type=int, default=4)
    p.add_argument("--max-translation", type=float, default=60.0)
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(message)s")
    if isinstance(getattr(args, "strategy", None), str):
        args.strategy = resolve_strategy(args.strategy)
    try:
        return args.func(args)
    except (CalibError, ValueError) as exc:
        print(f"boxcalib: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"boxcalib: error: {IoError(str(exc))}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
