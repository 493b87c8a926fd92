"""Command-line interface.

Subcommands:

* ``scene gen`` / ``scene render`` - materialize scene files and frames
* ``bench run`` - full pipeline: render, estimate depth, reproject, score
* ``eval spatial`` / ``eval warp`` - standalone metric runs
* ``study score`` / ``study test`` - SSQ scoring and the statistics battery
* ``report diff`` - numeric comparison of two report JSONs

Exit codes: 0 success, 1 report difference found, 2 config/schema error,
3 pipeline error. Relative paths resolve against --workspace (or the
VSTBENCH_WORKSPACE environment variable, default: current directory).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_DIFF = 1
EXIT_CONFIG = 2
EXIT_PIPELINE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _workspace(args) -> Path:
    ws = args.workspace or os.environ.get("VSTBENCH_WORKSPACE") or "."
    return Path(ws)


def _resolve(args, path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    return p if p.is_absolute() else _workspace(args) / p


def cmd_scene_gen(args) -> int:
    from .scene import benchmark_suite, save_scene

    out = _resolve(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    suite = benchmark_suite()
    names = list(suite) if args.suite == "default" else [args.suite]
    for name in names:
        if name not in suite:
            raise CliError(f"unknown scene {name!r}; suite scenes: {sorted(suite)}", EXIT_CONFIG)
        save_scene(suite[name], out / f"{name}.json")
        print(f"wrote {out / (name + '.json')}")
    return EXIT_OK


def cmd_scene_render(args) -> int:
    from .bench import resolve_scene
    from .formats import write_depth, write_png_gray
    from .geometry import default_rig, load_rig
    from .scene import animate_rig, default_trajectory

    from .scene import SceneError

    scene_path = args.scene if args.scene in _suite_names() else _resolve(args, args.scene)
    try:
        scene = resolve_scene(str(scene_path))
        rig = load_rig(_resolve(args, args.rig)) if args.rig else default_rig()
    except (FileNotFoundError, SceneError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"scene/rig error: {exc}", EXIT_CONFIG) from exc
    out = _resolve(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    trajectory = default_trajectory(args.frames)
    frames = animate_rig(scene, rig, trajectory)
    for left, right in frames:
        for frame in (left, right):
            stem = f"{scene.name}_{frame.frame_index:04d}_{frame.viewpoint_id}"
            write_png_gray(frame.image, out / f"{stem}.png")
            write_depth(frame.depth, out / f"{stem}.depth")
    print(f"wrote {2 * len(frames)} frames to {out}")
    return EXIT_OK


def _suite_names():
    from .scene import benchmark_suite

    return set(benchmark_suite())


def _load_bench_config(args):
    from .bench import BenchmarkConfig

    try:
        if args.config:
            config = BenchmarkConfig.from_json(_resolve(args, args.config))
        else:
            config = BenchmarkConfig()
    except (FileNotFoundError, ValueError, TypeError) as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "modes", None):
        modes = tuple(args.modes)
        overrides["modes"] = modes
        from dataclasses import replace as _replace

        overrides["warping"] = _replace(
            config.warping,
            modes=tuple(m for m in config.warping.modes if m in modes),
        )
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    return config


def cmd_bench_run(args) -> int:
    from .bench import BenchError, run_bench

    config = _load_bench_config(args)
    out = _resolve(args, args.out)
    try:
        config.validate()
    except (FileNotFoundError, ValueError) as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    try:
        run_bench(config, out)
    except BenchError as exc:
        raise CliError(f"pipeline error: {exc}", EXIT_PIPELINE) from exc
    print(f"benchmark report written to {out}")
    return EXIT_OK


def cmd_eval_spatial(args) -> int:
    from .formats import FormatError, read_depth
    from .geometry import load_rig
    from .metrics import MetricError, spatial_reprojection_error

    try:
        d_est = read_depth(_resolve(args, args.d_est))
        d_gt = read_depth(_resolve(args, args.d_gt))
        rig = load_rig(_resolve(args, args.rig))
    except (FileNotFoundError, FormatError) as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    try:
        _, stats = spatial_reprojection_error(d_est, d_gt, rig, args.src, args.dst)
    except MetricError as exc:
        raise CliError(f"pipeline error: {exc}", EXIT_PIPELINE) from exc
    payload = json.dumps(stats.as_dict(), indent=2, sort_keys=True)
    if args.out:
        _resolve(args, args.out).write_text(payload + "\n")
    print(payload)
    return EXIT_OK


def cmd_eval_warp(args) -> int:
    from .bench import BenchError, run_warping_benchmark

    config = _load_bench_config(args)
    try:
        result = run_warping_benchmark(config)
    except BenchError as exc:
        raise CliError(f"pipeline error: {exc}", EXIT_PIPELINE) from exc
    except Exception as exc:
        raise CliError(f"pipeline error: {exc}", EXIT_PIPELINE) from exc
    payload = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        _resolve(args, args.out).write_text(payload + "\n")
    print(payload)
    return EXIT_OK


def _study_report(args) -> dict:
    from .study import StudySchemaError, read_study_csv, score_study

    try:
        records = read_study_csv(_resolve(args, args.csv))
        return score_study(records)
    except FileNotFoundError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    except StudySchemaError as exc:
        raise CliError(f"schema error: {exc}", EXIT_CONFIG) from exc


def cmd_study_score(args) -> int:
    report = _study_report(args)
    out = _resolve(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_study_tables(report, out)
    print(f"study report written to {out}")
    return EXIT_OK


def cmd_study_test(args) -> int:
    report = _study_report(args)
    rows = _battery_rows(report)
    print(f"{'variable':<26} {'test':<10} {'stat':>9} {'p':>12} {'p_adj':>12}  sig")
    for row in rows:
        stat = f"{row['statistic']:.3f}" if np.isfinite(row["statistic"]) else "nan"
        padj = "" if row["adjusted_p"] is None else f"{row['adjusted_p']:.6f}"
        print(
            f"{row['variable']:<26} {row['test']:<10} {stat:>9} "
            f"{row['p']:>12.6f} {padj:>12}  {'*' if row['significant'] else ''}"
        )
    return EXIT_OK


def _battery_rows(report: dict) -> list[dict]:
    rows = []

    def add_family(prefix: str, tests: dict):
        om = tests["omnibus"]
        rows.append({
            "variable": prefix,
            "test": om["statistic_name"],
            "statistic": om["statistic"],
            "p": om["p"],
            "adjusted_p": None,
            "significant": om["p"] < 0.05,
        })
        for pw in tests["pairwise"]:
            rows.append({
                "variable": f"{prefix}:{pw['pair']}",
                "test": pw["statistic_name"],
                "statistic": pw["statistic"],
                "p": pw["p"],
                "adjusted_p": pw["adjusted_p"],
                "significant": pw["significant"],
            })

    for scale, tests in report["ssq"]["tests"].items():
        add_family(f"ssq_{scale}", tests)
    for task, tests in report["discomfort"]["tests"].items():
        add_family(f"discomfort_{task}", tests)
    for dv, tests in report["performance"]["tests"].items():
        add_family(f"perf_{dv}", tests)
    return rows


def _write_study_tables(report: dict, out: Path) -> None:
    import csv as _csv

    with open(out / "ssq_deltas.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["scale", "condition", "mean", "sd", "median", "iqr"])
        for scale, conds in report["ssq"]["deltas"].items():
            for cond, stats in conds.items():
                w.writerow([scale, cond, f"{stats['mean']:.4f}", f"{stats['sd']:.4f}",
                            f"{stats['median']:.4f}", f"{stats['iqr']:.4f}"])

    with open(out / "symptoms.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow([
            "symptom", "groups",
            "nv_mean", "nv_sd", "nv_pct",
            "dp_mean", "dp_sd", "dp_pct",
            "gap_mean", "gap_sd", "gap_pct",
            "dp_and_gap_intersection_pct", "dp_and_gap_mean_of_means",
            "dp_and_gap_pct_mean_of_means",
        ])
        for item, entry in report["symptoms"].items():
            w.writerow(
                [item, "".join(entry["groups"])]
                + [f"{entry[c][k]:.4f}" for c in ("NV", "DP", "GAP")
                   for k in ("mean", "sd", "pct_positive")]
                + [
                    f"{entry['dp_and_gap']['intersection_pct_positive']:.4f}",
                    f"{entry['dp_and_gap']['mean_of_means']:.4f}",
                    f"{entry['dp_and_gap']['pct_mean_of_means']:.4f}",
                ]
            )

    with open(out / "discomfort.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["task", "condition", "mean", "sd"])
        for task, conds in report["discomfort"]["scores"].items():
            for cond, stats in conds.items():
                w.writerow([task, cond, f"{stats['mean']:.4f}", f"{stats['sd']:.4f}"])

    with open(out / "test_battery.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["variable", "test", "statistic", "dof", "p", "adjusted_p", "significant"])
        for row in _battery_rows(report):
            w.writerow([
                row["variable"], row["test"], row["statistic"], "",
                row["p"], "" if row["adjusted_p"] is None else row["adjusted_p"],
                int(row["significant"]),
            ])


def _flatten(prefix: str, obj, sink: dict) -> None:
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], sink)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, sink)
    else:
        sink[prefix] = obj


def cmd_report_diff(args) -> int:
    a_path = _resolve(args, args.a)
    b_path = _resolve(args, args.b)
    for p in (a_path, b_path):
        if not p.exists():
            raise CliError(f"config error: report not found: {p}", EXIT_CONFIG)
    flat_a: dict = {}
    flat_b: dict = {}
    _flatten("", json.loads(a_path.read_text()), flat_a)
    _flatten("", json.loads(b_path.read_text()), flat_b)

    diffs = []
    for key in sorted(set(flat_a) | set(flat_b)):
        if key not in flat_a:
            diffs.append(f"only in {args.b}: {key}")
        elif key not in flat_b:
            diffs.append(f"only in {args.a}: {key}")
        else:
            va, vb = flat_a[key], flat_b[key]
            if isinstance(va, (int, float)) and isinstance(vb, (int, float)):
                if not (va == vb or abs(va - vb) <= args.tol):
                    diffs.append(f"{key}: {va} != {vb}")
            elif va != vb:
                diffs.append(f"{key}: {va!r} != {vb!r}")
    if diffs:
        for d in diffs[: args.limit]:
            print(d)
        if len(diffs) > args.limit:
            print(f"... and {len(diffs) - args.limit} more differences")
        return EXIT_DIFF
    print("reports identical" + (f" (tol={args.tol})" if args.tol else ""))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vstbench",
        description="Synthetic benchmarking toolkit for video see-through passthrough modes.",
    )
    parser.add_argument("--workspace", help="base directory for relative paths "
                        "(or set VSTBENCH_WORKSPACE)")
    sub = parser.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene generation and rendering")
    scene_sub = scene.add_subparsers(dest="scene_command", required=True)
    gen = scene_sub.add_parser("gen", help="write scene description files")
    gen.add_argument("--suite", default="default", help="'default' or one scene name")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_scene_gen)
    rend = scene_sub.add_parser("render", help="render PNG frames + depth sidecars")
    rend.add_argument("--scene", required=True, help="suite scene name or scene JSON path")
    rend.add_argument("--rig", help="rig JSON (default: built-in rig)")
    rend.add_argument("--frames", type=int, default=1)
    rend.add_argument("--out", required=True)
    rend.set_defaults(func=cmd_scene_render)

    bench = sub.add_parser("bench", help="benchmark pipeline")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    brun = bench_sub.add_parser("run", help="full pipeline run")
    brun.add_argument("--config", help="benchmark config JSON (default: built-in defaults)")
    brun.add_argument("--out", required=True)
    brun.add_argument("--seed", type=int)
    brun.add_argument("--modes", nargs="+")
    brun.set_defaults(func=cmd_bench_run)

    ev = sub.add_parser("eval", help="standalone metric evaluation")
    ev_sub = ev.add_subparsers(dest="eval_command", required=True)
    evs = ev_sub.add_parser("spatial", help="spatial reprojection error of two depth maps")
    evs.add_argument("--d-est", required=True)
    evs.add_argument("--d-gt", required=True)
    evs.add_argument("--rig", required=True)
    evs.add_argument("--src", default="left_camera")
    evs.add_argument("--dst", default="left_eye")
    evs.add_argument("--out")
    evs.set_defaults(func=cmd_eval_spatial)
    evw = ev_sub.add_parser("warp", help="warping-error clip evaluation")
    evw.add_argument("--config")
    evw.add_argument("--seed", type=int)
    evw.add_argument("--out")
    evw.set_defaults(func=cmd_eval_warp)

    study = sub.add_parser("study", help="user-study scoring and statistics")
    study_sub = study.add_subparsers(dest="study_command", required=True)
    ssc = study_sub.add_parser("score", help="full study report from a CSV")
    ssc.add_argument("--csv", required=True)
    ssc.add_argument("--out", required=True)
    ssc.set_defaults(func=cmd_study_score)
    sts = study_sub.add_parser("test", help="print the statistical test battery")
    sts.add_argument("--csv", required=True)
    sts.set_defaults(func=cmd_study_test)

    rep = sub.add_parser("report", help="report utilities")
    rep_sub = rep.add_subparsers(dest="report_command", required=True)
    diff = rep_sub.add_parser("diff", help="compare two report JSONs")
    diff.add_argument("a")
    diff.add_argument("b")
    diff.add_argument("--tol", type=float, default=0.0)
    diff.add_argument("--limit", type=int, default=50)
    diff.set_defaults(func=cmd_report_diff)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
