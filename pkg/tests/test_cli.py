import json

from vstbench.cli import main
from vstbench.geometry import default_rig, save_rig
from vstbench.study import generate_example_cohort, write_study_csv


class TestSceneCommands:
    def test_gen_default_suite_writes_four_files(self, tmp_path, capsys):
        assert main(["scene", "gen", "--suite", "default", "--out", str(tmp_path)]) == 0
        files = sorted(p.name for p in tmp_path.glob("*.json"))
        assert files == ["cluttered.json", "fiducial.json", "plane_2m.json", "two_plane.json"]

    def test_gen_twice_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        main(["scene", "gen", "--suite", "default", "--out", str(a)])
        main(["scene", "gen", "--suite", "default", "--out", str(b)])
        for name in ("plane_2m.json", "fiducial.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_gen_unknown_scene_exit_2(self, tmp_path, capsys):
        code = main(["scene", "gen", "--suite", "atlantis", "--out", str(tmp_path)])
        assert code == 2

    def test_render_missing_rig_exit_2(self, tmp_path, capsys):
        code = main([
            "scene", "render", "--scene", "plane_2m",
            "--rig", str(tmp_path / "missing_rig.json"), "--out", str(tmp_path),
        ])
        assert code == 2
        assert "missing_rig.json" in capsys.readouterr().err

    def test_render_malformed_scene_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "broken.json"
        bad.write_text('{"patches": [{"patch_id": "p"}]}')
        code = main(["scene", "render", "--scene", str(bad), "--out", str(tmp_path)])
        assert code == 2

    def test_render_writes_png_and_depth(self, tmp_path):
        code = main(["scene", "render", "--scene", "plane_2m", "--frames", "1",
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "plane_2m_0000_left_camera.png").exists()
        assert (tmp_path / "plane_2m_0000_right_camera.depth").exists()


class TestEvalCommands:
    def test_eval_spatial_roundtrip(self, tmp_path, capsys):
        from vstbench.depth import DepthMap
        from vstbench.formats import write_depth

        rig_path = tmp_path / "rig.json"
        save_rig(default_rig(), rig_path)
        write_depth(DepthMap.constant(1.0, 640, 480), tmp_path / "gt.depth")
        write_depth(DepthMap.constant(2.0, 640, 480), tmp_path / "est.depth")
        code = main([
            "eval", "spatial",
            "--d-est", str(tmp_path / "est.depth"),
            "--d-gt", str(tmp_path / "gt.depth"),
            "--rig", str(rig_path),
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["mean"] > 0
        assert payload["count"] > 0

    def test_eval_spatial_missing_file_exit_2(self, tmp_path, capsys):
        rig_path = tmp_path / "rig.json"
        save_rig(default_rig(), rig_path)
        code = main([
            "eval", "spatial", "--d-est", str(tmp_path / "no.depth"),
            "--d-gt", str(tmp_path / "no.depth"), "--rig", str(rig_path),
        ])
        assert code == 2


class TestStudyCommands:
    def test_score_writes_tables(self, tmp_path, capsys):
        csv_path = tmp_path / "cohort.csv"
        write_study_csv(generate_example_cohort(n=6), csv_path)
        out = tmp_path / "study"
        assert main(["study", "score", "--csv", str(csv_path), "--out", str(out)]) == 0
        for name in ("report.json", "ssq_deltas.csv", "symptoms.csv",
                     "discomfort.csv", "test_battery.csv"):
            assert (out / name).exists(), name

    def test_score_deterministic_bytes(self, tmp_path):
        csv_path = tmp_path / "cohort.csv"
        write_study_csv(generate_example_cohort(n=6), csv_path)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["study", "score", "--csv", str(csv_path), "--out", str(out1)])
        main(["study", "score", "--csv", str(csv_path), "--out", str(out2)])
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_empty_csv_exit_2(self, tmp_path, capsys):
        csv_path = tmp_path / "empty.csv"
        csv_path.write_text("")
        code = main(["study", "test", "--csv", str(csv_path)])
        assert code == 2
        assert "schema" in capsys.readouterr().err

    def test_battery_printed(self, tmp_path, capsys):
        csv_path = tmp_path / "cohort.csv"
        write_study_csv(generate_example_cohort(n=8), csv_path)
        assert main(["study", "test", "--csv", str(csv_path)]) == 0
        out = capsys.readouterr().out
        assert "ssq_nausea" in out
        assert "perf_nav_time" in out


class TestReportDiff:
    def test_identical_exit_0(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"x": 1.0, "y": [1, 2]}))
        b.write_text(json.dumps({"x": 1.0, "y": [1, 2]}))
        assert main(["report", "diff", str(a), str(b)]) == 0

    def test_difference_exit_1(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"x": 1.0}))
        b.write_text(json.dumps({"x": 1.5}))
        assert main(["report", "diff", str(a), str(b)]) == 1
        assert "x" in capsys.readouterr().out

    def test_tolerance(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"x": 1.0}))
        b.write_text(json.dumps({"x": 1.0 + 1e-9}))
        assert main(["report", "diff", str(a), str(b), "--tol", "1e-6"]) == 0

    def test_missing_report_exit_2(self, tmp_path):
        a = tmp_path / "a.json"
        a.write_text("{}")
        assert main(["report", "diff", str(a), str(tmp_path / "nope.json")]) == 2


class TestWorkspace:
    def test_workspace_flag_resolves_relative_paths(self, tmp_path):
        code = main(["--workspace", str(tmp_path), "scene", "gen",
                     "--suite", "plane_2m", "--out", "scenes"])
        assert code == 0
        assert (tmp_path / "scenes" / "plane_2m.json").exists()

    def test_workspace_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("VSTBENCH_WORKSPACE", str(tmp_path))
        code = main(["scene", "gen", "--suite", "plane_2m", "--out", "via_env"])
        assert code == 0
        assert (tmp_path / "via_env" / "plane_2m.json").exists()
