"""Benchmark pipeline: render -> estimate depth -> reproject -> score -> report.

One run produces:

* a spatial table (per scene and per mode, both eyes: spatial reprojection
  error and depth MAE),
* a depth-error-by-range table (the range axis of the depth-error figure),
* a warping table (per mode residual warping error over a 45-frame clip of
  the fiducial-target scene).

Everything is seeded; a config plus seed fully determines every output byte.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .depth import (
    DepthCorruptionSpec,
    DepthMap,
    SmoothingSpec,
    corrupt_depth,
    smooth_depth,
    warp_depth_left_to_right,
)
from .formats import write_depth, write_error_heatmap
from .geometry import RigCalibration, default_rig, lateral_rig, load_rig
from .metrics import (
    RansacParams,
    WarpingParams,
    depth_error_by_range,
    spatial_reprojection_error,
    warping_error,
)
from .passthrough import MODE_NAMES, PlaneSpec, dp_reproject, gap_reproject
from .scene import (
    Scene,
    benchmark_suite,
    camera_in_world,
    default_trajectory,
    load_scene,
    raycast_depth,
    render,
)


class BenchError(RuntimeError):
    """Pipeline-stage failure; message carries the stage tag."""


GAP_VARIANTS = {"gap-raw": "raw", "gap-smooth": "smooth", "gap-oversmooth": "oversmooth"}


@dataclass(frozen=True)
class WarpingClipConfig:
    """The planar-target clip scored by the warping metric.

    The clip uses a wider, purely lateral camera-eye offset and a harsher
    corruption than the spatial benchmark so that depth errors crossing the
    discontinuity behind the target edge show up as measurable bending;
    direct passthrough of a planar target is an exact homography under any
    rig, so it stays at the detection-noise floor. GAP variants differ only
    in the smoothing applied to the clip's estimated depth (raw keeps the
    full estimation noise, which dominates the bending signal).
    """

    scene: str = "fiducial"
    n_frames: int = 45
    modes: tuple[str, ...] = ("dp", "gap-raw")
    camera_eye_offset: float = 0.05
    corruption: DepthCorruptionSpec = field(
        default_factory=lambda: DepthCorruptionSpec(
            boundary_dilation_px=3, noise_sigma_rel=0.08, disparity_levels=128, seed=0
        )
    )
    smoothing_sigma: float = 3.0
    oversmoothing_sigma: float = 8.0
    localization_noise_sigma: float = 0.3
    min_matches: int = 100
    confidence_threshold: float = 0.3
    detection_mode: str = "detect"
    residuals_over: str = "all"

    def sigma_for_mode(self, mode: str) -> float:
        return {"gap-raw": 0.0, "gap-smooth": self.smoothing_sigma,
                "gap-oversmooth": self.oversmoothing_sigma}[mode]


@dataclass(frozen=True)
class BenchmarkConfig:
    rig_file: str | None = None
    scenes: tuple[str, ...] = ("plane_2m", "two_plane", "cluttered", "fiducial")
    n_frames: int = 45
    spatial_frame_stride: int = 11
    translation_amplitude: float = 0.02
    rotation_amplitude_deg: float = 1.5
    modes: tuple[str, ...] = MODE_NAMES
    plane_distance: float = 2.0
    mesh_stride: int = 4
    corruption: DepthCorruptionSpec = field(default_factory=DepthCorruptionSpec)
    smoothing_sigmas: tuple[tuple[str, float], ...] = (
        ("raw", 0.0),
        ("smooth", 2.0),
        ("oversmooth", 8.0),
    )
    depth_lag_frames: int = 0
    range_bin_mm: float = 250.0
    range_max_mm: float = 4000.0
    ransac: RansacParams = field(default_factory=RansacParams)
    warping: WarpingClipConfig = field(default_factory=WarpingClipConfig)
    seed: int = 0
    emit_error_maps: bool = False

    def validate(self) -> None:
        if self.rig_file is not None and not Path(self.rig_file).exists():
            raise FileNotFoundError(f"rig file not found: {self.rig_file}")
        for name in self.scenes:
            if name not in benchmark_suite() and not Path(name).exists():
                raise FileNotFoundError(f"scene not found (suite name or file): {name}")
        unknown = [m for m in self.modes if m not in MODE_NAMES]
        if unknown:
            raise ValueError(f"unknown modes: {unknown}; expected subset of {MODE_NAMES}")
        if self.spatial_frame_stride < 1 or self.n_frames < 1:
            raise ValueError("frame counts must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        data = dict(data)
        if "corruption" in data:
            data["corruption"] = DepthCorruptionSpec(**data["corruption"])
        if "ransac" in data:
            data["ransac"] = RansacParams(**data["ransac"])
        if "warping" in data:
            wd = dict(data["warping"])
            if "corruption" in wd:
                wd["corruption"] = DepthCorruptionSpec(**wd["corruption"])
            if "modes" in wd:
                wd["modes"] = tuple(wd["modes"])
            data["warping"] = WarpingClipConfig(**wd)
        for key in ("scenes", "modes"):
            if key in data:
                data[key] = tuple(data[key])
        if "smoothing_sigmas" in data:
            data["smoothing_sigmas"] = tuple(
                (str(k), float(v)) for k, v in data["smoothing_sigmas"]
            )
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "BenchmarkConfig":
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        return cls.from_dict(json.loads(p.read_text()))


def resolve_scene(name: str) -> Scene:
    suite = benchmark_suite()
    if name in suite:
        return suite[name]
    return load_scene(name)


def resolve_rig(config: BenchmarkConfig) -> RigCalibration:
    return load_rig(config.rig_file) if config.rig_file else default_rig()


def _mix_seed(*parts: int) -> int:
    out = 0x9E3779B9
    for p in parts:
        out = (out * 1000003 + int(p) + 0x7F4A7C15) % (2**63)
    return out


class _RunningStats:
    """Streaming mean/std plus histogram-based median and p90."""

    def __init__(self, hist_max: float = 64.0, hist_bins: int = 6400):
        self.n = 0
        self.total = 0.0
        self.total_sq = 0.0
        self.hist = np.zeros(hist_bins + 1, dtype=np.int64)
        self.hist_max = hist_max
        self.hist_bins = hist_bins

    def add(self, values: np.ndarray) -> None:
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size == 0:
            return
        self.n += v.size
        self.total += float(v.sum())
        self.total_sq += float((v * v).sum())
        idx = np.minimum(
            (v / self.hist_max * self.hist_bins).astype(np.int64), self.hist_bins
        )
        np.add.at(self.hist, idx, 1)

    def _quantile(self, q: float) -> float:
        target = q * (self.n - 1)
        cum = np.cumsum(self.hist)
        k = int(np.searchsorted(cum, target + 1))
        return min(k, self.hist_bins) / self.hist_bins * self.hist_max

    def summary(self) -> dict:
        if self.n == 0:
            return {"mean": float("nan"), "std": float("nan"), "median": float("nan"),
                    "p90": float("nan"), "count": 0}
        mean = self.total / self.n
        var = max(self.total_sq / self.n - mean * mean, 0.0)
        return {
            "mean": mean,
            "std": float(np.sqrt(var)),
            "median": self._quantile(0.5),
            "p90": self._quantile(0.9),
            "count": self.n,
        }


def _estimated_depths(
    d_gt_left: DepthMap,
    rig: RigCalibration,
    config: BenchmarkConfig,
    frame_seed: int,
    sigmas: dict[str, float],
) -> dict[str, tuple[DepthMap, DepthMap]]:
    """Left and right estimated depth per GAP variant.

    Depth is estimated (corrupted) on the left camera and forward-warped to
    the right camera; each eye's map then receives the variant's Gaussian
    smoothing. The warp scatters the estimation noise (nearest-wins
    splatting amplifies it around discontinuities), which is why the right
    eye benefits from smoothing more than the left.
    """
    corrupted = corrupt_depth(d_gt_left, replace(config.corruption, seed=frame_seed))
    warped = warp_depth_left_to_right(corrupted, rig)
    out = {}
    for variant, sigma in sigmas.items():
        spec = SmoothingSpec(sigma)
        out[variant] = (smooth_depth(corrupted, spec), smooth_depth(warped, spec))
    return out


def run_spatial_benchmark(config: BenchmarkConfig, rig: RigCalibration,
                          out_dir: Path | None = None) -> dict:
    """Spatial reprojection error, depth MAE, and depth-by-range tables."""
    sigmas = dict(config.smoothing_sigmas)
    gap_modes = [m for m in config.modes if m in GAP_VARIANTS]
    bins = np.arange(config.range_bin_mm, config.range_max_mm + 1, config.range_bin_mm)

    eyes = (("left_camera", "left_eye", "left"), ("right_camera", "right_eye", "right"))
    per_scene: dict = {}
    range_tables: dict = {}

    for scene_idx, scene_name in enumerate(config.scenes):
        scene = resolve_scene(scene_name)
        trajectory = default_trajectory(
            config.n_frames, config.translation_amplitude, config.rotation_amplitude_deg
        )
        poses = trajectory[:: config.spatial_frame_stride]

        stats = {
            mode: {eye: _RunningStats() for _, _, eye in eyes} for mode in config.modes
        }
        mae_stats = {
            mode: {eye: _RunningStats(hist_max=16.0) for _, _, eye in eyes}
            for mode in config.modes
        }
        frame_means = {mode: {eye: [] for _, _, eye in eyes} for mode in config.modes}
        range_acc = {
            mode: (np.zeros(len(bins) - 1), np.zeros(len(bins) - 1, dtype=np.int64))
            for mode in config.modes
        }

        for fi, pose in enumerate(poses):
            d_gt_left = _raycast(scene, rig, pose, "left_camera")
            d_gt_right = _raycast(scene, rig, pose, "right_camera")
            gt = {"left": d_gt_left, "right": d_gt_right}

            frame_seed = _mix_seed(config.seed, scene_idx, fi)
            variants = _estimated_depths(d_gt_left, rig, config, frame_seed, sigmas)

            est: dict[str, dict[str, DepthMap]] = {}
            if "dp" in config.modes:
                h, w = d_gt_left.values.shape
                plane = DepthMap.constant(config.plane_distance, w, h)
                est["dp"] = {"left": plane, "right": plane}
            for mode in gap_modes:
                left, right = variants[GAP_VARIANTS[mode]]
                est[mode] = {"left": left, "right": right}

            for mode in config.modes:
                for cam_name, eye_name, eye in eyes:
                    emap, _ = spatial_reprojection_error(
                        est[mode][eye], gt[eye], rig, cam_name, eye_name
                    )
                    vals = emap.errors[emap.valid]
                    stats[mode][eye].add(vals)
                    frame_means[mode][eye].append(float(vals.mean()))

                    m = est[mode][eye].valid & gt[eye].valid
                    mae_vals = np.abs(est[mode][eye].values[m] - gt[eye].values[m])
                    mae_stats[mode][eye].add(mae_vals)

                    table = depth_error_by_range(est[mode][eye], gt[eye], bins)
                    sums, counts = range_acc[mode]
                    for b, (mae_mm, cnt) in enumerate(zip(table.mae_mm, table.counts)):
                        if cnt:
                            sums[b] += mae_mm * cnt
                            counts[b] += cnt

                    if config.emit_error_maps and out_dir is not None and fi == 0:
                        stem = f"{scene_name}_{mode}_{eye}"
                        write_error_heatmap(
                            np.where(emap.valid, emap.errors, 0.0),
                            out_dir / f"{stem}_error.png",
                        )
                        write_depth(
                            DepthMap(np.maximum(emap.errors, 1e-9), emap.valid),
                            out_dir / f"{stem}_error.depth",
                        )

        per_scene[scene_name] = {
            mode: {
                eye: {
                    "spatial": stats[mode][eye].summary()
                    | {"std_across_frames": float(np.std(frame_means[mode][eye]))},
                    "depth_mae_m": mae_stats[mode][eye].summary(),
                }
                for _, _, eye in eyes
            }
            for mode in config.modes
        }
        range_tables[scene_name] = {
            mode: {
                "bin_edges_mm": bins.tolist(),
                "mae_mm": [
                    float(s / c) if c else None
                    for s, c in zip(range_acc[mode][0], range_acc[mode][1])
                ],
                "counts": range_acc[mode][1].tolist(),
            }
            for mode in config.modes
        }

    # suite-level aggregate: mean of scene means, std across scenes
    suite = {}
    for mode in config.modes:
        suite[mode] = {}
        for _, _, eye in eyes:
            scene_means = [per_scene[s][mode][eye]["spatial"]["mean"] for s in config.scenes]
            mae_means = [per_scene[s][mode][eye]["depth_mae_m"]["mean"] for s in config.scenes]
            suite[mode][eye] = {
                "spatial_mean": float(np.mean(scene_means)),
                "spatial_std_across_scenes": float(np.std(scene_means)),
                "depth_mae_m_mean": float(np.mean(mae_means)),
                "depth_mae_m_std_across_scenes": float(np.std(mae_means)),
            }

    return {"per_scene": per_scene, "suite": suite, "depth_by_range": range_tables}


def _raycast(scene: Scene, rig: RigCalibration, pose, cam_name: str) -> DepthMap:
    return raycast_depth(scene, camera_in_world(rig, pose, cam_name))


def run_warping_benchmark(config: BenchmarkConfig) -> dict:
    """Residual warping error of the fiducial clip per passthrough mode."""
    wc = config.warping
    if not wc.modes:
        return {}
    scene = resolve_scene(wc.scene)
    if not scene.targets:
        raise BenchError(f"warping: scene {wc.scene!r} has no fiducial target")
    target = scene.targets[0]
    rig = lateral_rig(wc.camera_eye_offset)

    trajectory = default_trajectory(
        wc.n_frames, config.translation_amplitude, config.rotation_amplitude_deg
    )
    frames = []
    cameras = []
    for i, pose in enumerate(trajectory):
        cam = camera_in_world(rig, pose, "left_camera")
        frames.append(render(scene, cam, "left_camera", i))
        cameras.append(cam)

    lag = max(0, config.depth_lag_frames)
    corrupted_clip = []
    for i, frame in enumerate(frames):
        src = frames[max(0, i - lag)]
        seed = _mix_seed(config.seed, 1009, i)
        corrupted_clip.append(corrupt_depth(src.depth, replace(wc.corruption, seed=seed)))

    params = WarpingParams(
        confidence_threshold=wc.confidence_threshold,
        min_matches=wc.min_matches,
        detection_mode=wc.detection_mode,
        residuals_over=wc.residuals_over,
        localization_noise_sigma=wc.localization_noise_sigma,
        noise_seed=_mix_seed(config.seed, 4242),
        ransac=config.ransac,
    )

    out = {}
    for mode in wc.modes:
        views = []
        if mode != "dp":
            spec = SmoothingSpec(wc.sigma_for_mode(mode))
            est_clip = [smooth_depth(d, spec) for d in corrupted_clip]
        for i, frame in enumerate(frames):
            if mode == "dp":
                views.append(
                    dp_reproject(frame, rig, "left_eye", PlaneSpec(config.plane_distance),
                                 stride=config.mesh_stride)
                )
            else:
                views.append(
                    gap_reproject(frame, est_clip[i], rig, "left_eye",
                                  stride=config.mesh_stride, mode=mode)
                )
        report = warping_error(views, target, cameras, params)
        out[mode] = report.as_dict()
    return out


def run_bench(config: BenchmarkConfig, output_dir: str | Path) -> dict:
    """Full benchmark; writes report.json plus the CSV tables, returns the report."""
    config.validate()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rig = resolve_rig(config)

    try:
        spatial = run_spatial_benchmark(config, rig, out)
    except BenchError:
        raise
    except Exception as exc:
        raise BenchError(f"spatial stage failed: {exc}") from exc
    try:
        warping = run_warping_benchmark(config)
    except BenchError:
        raise
    except Exception as exc:
        raise BenchError(f"warping stage failed: {exc}") from exc

    report = {
        "config": _config_to_dict(config),
        "spatial": spatial,
        "warping": warping,
    }

    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_spatial_table(report, out / "spatial_errors.csv", config)
    _write_depth_by_range(report, out / "depth_by_range.csv", config)
    _write_warping_table(report, out / "warping_errors.csv")
    _write_flat(report, out / "report_flat.csv", config)
    return report


def _config_to_dict(config: BenchmarkConfig) -> dict:
    def enc(obj):
        if isinstance(obj, (DepthCorruptionSpec, RansacParams, WarpingClipConfig)):
            return {k: enc(v) for k, v in vars(obj).items()}
        if isinstance(obj, tuple):
            return [enc(x) for x in obj]
        return obj

    return {k: enc(v) for k, v in vars(config).items()}


def _write_spatial_table(report: dict, path: Path, config: BenchmarkConfig) -> None:
    rows = []
    scenes = list(config.scenes) + ["suite"]
    for scene in scenes:
        for mode in config.modes:
            if scene == "suite":
                entry = report["spatial"]["suite"][mode]
                rows.append([
                    scene, mode,
                    f"{entry['left']['spatial_mean']:.6f}",
                    f"{entry['left']['spatial_std_across_scenes']:.6f}",
                    f"{entry['right']['spatial_mean']:.6f}",
                    f"{entry['right']['spatial_std_across_scenes']:.6f}",
                    f"{entry['left']['depth_mae_m_mean']:.6f}",
                    f"{entry['right']['depth_mae_m_mean']:.6f}",
                ])
            else:
                entry = report["spatial"]["per_scene"][scene][mode]
                rows.append([
                    scene, mode,
                    f"{entry['left']['spatial']['mean']:.6f}",
                    f"{entry['left']['spatial']['std']:.6f}",
                    f"{entry['right']['spatial']['mean']:.6f}",
                    f"{entry['right']['spatial']['std']:.6f}",
                    f"{entry['left']['depth_mae_m']['mean']:.6f}",
                    f"{entry['right']['depth_mae_m']['mean']:.6f}",
                ])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([
            "scene", "mode",
            "spatial_left_mean_px", "spatial_left_std_px",
            "spatial_right_mean_px", "spatial_right_std_px",
            "depth_mae_left_m", "depth_mae_right_m",
        ])
        w.writerows(rows)


def _write_depth_by_range(report: dict, path: Path, config: BenchmarkConfig) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "mode", "range_lo_mm", "range_hi_mm", "mae_mm", "count"])
        for scene, modes in report["spatial"]["depth_by_range"].items():
            for mode, table in modes.items():
                edges = table["bin_edges_mm"]
                for i, (mae, cnt) in enumerate(zip(table["mae_mm"], table["counts"])):
                    w.writerow([
                        scene, mode, edges[i], edges[i + 1],
                        "" if mae is None else f"{mae:.3f}", cnt,
                    ])


def _write_warping_table(report: dict, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "mean_px", "std_px", "median_px", "p90_px",
                    "frames_used", "min_matches_per_frame"])
        for mode, entry in report["warping"].items():
            w.writerow([
                mode,
                f"{entry['mean']:.6f}", f"{entry['std']:.6f}",
                f"{entry['median']:.6f}", f"{entry['p90']:.6f}",
                entry["frames_used"],
                min(entry["matches_per_frame"] or [0]),
            ])


def _write_flat(report: dict, path: Path, config: BenchmarkConfig) -> None:
    """Flat rows: scene, mode, eye, metric, statistic, value."""
    rows = []
    for scene, modes in report["spatial"]["per_scene"].items():
        for mode, eyes in modes.items():
            for eye, metrics_entry in eyes.items():
                for metric, stats in metrics_entry.items():
                    for stat_name, value in stats.items():
                        rows.append([scene, mode, eye, metric, stat_name, value])
    for mode, entry in report["warping"].items():
        for stat_name in ("mean", "std", "median", "p90", "frames_used"):
            rows.append(["warping_clip", mode, "left", "warping", stat_name, entry[stat_name]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "mode", "eye", "metric", "statistic", "value"])
        w.writerows(rows)
