import json
import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from vstbench.bench import (
    BenchmarkConfig,
    WarpingClipConfig,
    resolve_rig,
    resolve_scene,
    run_bench,
    run_spatial_benchmark,
    run_warping_benchmark,
)
from vstbench.depth import DepthCorruptionSpec
from vstbench.geometry import CameraIntrinsics, Pose, RigCalibration, Viewpoint, save_rig

GOLDEN = Path(__file__).parent / "data" / "golden_tiny_report.json"


def tiny_rig_file(tmp_path) -> str:
    k = CameraIntrinsics(160.0, 160.0, 99.5, 74.5, 200, 150)
    rig = RigCalibration(
        left_camera=Viewpoint(Pose.from_translation(-0.0435, 0, 0.032), k),
        right_camera=Viewpoint(Pose.from_translation(0.0435, 0, 0.032), k),
        left_eye=Viewpoint(Pose.from_translation(-0.0315, 0, 0), k),
        right_eye=Viewpoint(Pose.from_translation(0.0315, 0, 0), k),
    )
    path = tmp_path / "tiny_rig.json"
    save_rig(rig, path)
    return str(path)


def tiny_config(tmp_path) -> BenchmarkConfig:
    return BenchmarkConfig(
        rig_file=tiny_rig_file(tmp_path),
        scenes=("plane_2m", "two_plane"),
        n_frames=3,
        spatial_frame_stride=3,
        warping=WarpingClipConfig(modes=()),
        seed=7,
    )


class TestConfig:
    def test_from_dict_round_trip(self):
        config = BenchmarkConfig(
            corruption=DepthCorruptionSpec(1, 0.05, 64, seed=3),
            scenes=("plane_2m",),
        )
        from vstbench.bench import _config_to_dict

        back = BenchmarkConfig.from_dict(_config_to_dict(config))
        assert back == config

    def test_validate_missing_rig(self):
        config = BenchmarkConfig(rig_file="/nonexistent/rig.json")
        with pytest.raises(FileNotFoundError, match="rig"):
            config.validate()

    def test_validate_unknown_scene(self):
        config = BenchmarkConfig(scenes=("no_such_scene",))
        with pytest.raises(FileNotFoundError, match="scene"):
            config.validate()

    def test_validate_unknown_mode(self):
        config = BenchmarkConfig(modes=("dp", "warp-o-matic"))
        with pytest.raises(ValueError, match="unknown modes"):
            config.validate()


class TestSpatialBenchmark:
    def test_report_shape_and_orderings(self, tmp_path):
        config = tiny_config(tmp_path)
        res = run_spatial_benchmark(config, resolve_rig(config))
        assert set(res["per_scene"]) == {"plane_2m", "two_plane"}
        for scene in res["per_scene"].values():
            assert set(scene) == set(config.modes)
            for mode in scene.values():
                assert set(mode) == {"left", "right"}
                assert "spatial" in mode["left"] and "depth_mae_m" in mode["left"]
        # DP dominates geometry-aware modes wherever depth is off the plane
        two = res["per_scene"]["two_plane"]
        for gap_mode in ("gap-raw", "gap-smooth", "gap-oversmooth"):
            assert two["dp"]["right"]["spatial"]["mean"] > two[gap_mode]["right"]["spatial"]["mean"]

    def test_dp_depth_by_range_v_shape(self, tmp_path):
        config = tiny_config(tmp_path)
        res = run_spatial_benchmark(config, resolve_rig(config))
        table = res["depth_by_range"]["two_plane"]["dp"]
        edges = np.asarray(table["bin_edges_mm"])
        centers = 0.5 * (edges[:-1] + edges[1:])
        for center, mae, count in zip(centers, table["mae_mm"], table["counts"]):
            if count:
                assert mae == pytest.approx(abs(center - 2000.0), abs=130.0)


class TestWarpingBenchmark:
    def test_disabled_when_no_modes(self, tmp_path):
        config = tiny_config(tmp_path)
        assert run_warping_benchmark(config) == {}

    def test_short_clip_orderings(self):
        config = replace(
            BenchmarkConfig(),
            warping=replace(BenchmarkConfig().warping, n_frames=4),
        )
        res = run_warping_benchmark(config)
        assert res["dp"]["mean"] <= 0.6
        assert res["gap-raw"]["mean"] >= 2.0 * res["dp"]["mean"]
        assert all(m >= 100 for m in res["dp"]["matches_per_frame"])


class TestDepthLag:
    def test_stale_depth_config_changes_results_deterministically(self):
        base = replace(
            BenchmarkConfig(),
            warping=replace(BenchmarkConfig().warping, n_frames=3, modes=("gap-raw",)),
        )
        lagged = replace(base, depth_lag_frames=1)
        r0 = run_warping_benchmark(base)
        r1 = run_warping_benchmark(lagged)
        r1_again = run_warping_benchmark(lagged)
        assert r1 == r1_again
        assert r0["gap-raw"]["mean"] != r1["gap-raw"]["mean"]


class TestRunBench:
    def test_outputs_and_golden(self, tmp_path):
        config = tiny_config(tmp_path)
        out = tmp_path / "out"
        report = run_bench(config, out)
        for name in ("report.json", "spatial_errors.csv", "depth_by_range.csv",
                     "warping_errors.csv", "report_flat.csv"):
            assert (out / name).exists(), name

        # flat CSV schema
        header = (out / "report_flat.csv").read_text().splitlines()[0]
        assert header == "scene,mode,eye,metric,statistic,value"

        # the spatial table has one row per scene x mode plus the suite aggregate
        lines = (out / "spatial_errors.csv").read_text().splitlines()
        assert len(lines) == 1 + len(config.modes) * (len(config.scenes) + 1)

        # golden regression: byte-stable spatial section pinned to a fixture,
        # regenerated only with VSTBENCH_REGEN_GOLDEN=1
        spatial_bytes = json.dumps(report["spatial"], indent=2, sort_keys=True)
        if os.environ.get("VSTBENCH_REGEN_GOLDEN") == "1":
            GOLDEN.parent.mkdir(parents=True, exist_ok=True)
            GOLDEN.write_text(spatial_bytes + "\n")
        assert GOLDEN.exists(), "golden fixture missing; run with VSTBENCH_REGEN_GOLDEN=1"
        assert spatial_bytes + "\n" == GOLDEN.read_text()

    def test_run_twice_byte_identical(self, tmp_path):
        config = tiny_config(tmp_path)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        run_bench(config, out1)
        run_bench(config, out2)
        for name in ("report.json", "spatial_errors.csv", "depth_by_range.csv",
                     "warping_errors.csv", "report_flat.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
