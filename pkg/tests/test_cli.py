import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cubegt import io
from cubegt.cli import main

DATA = os.path.join(os.path.dirname(__file__), "data")
MANIFEST = os.path.join(DATA, "manifest.json")
GOLDEN = os.path.join(DATA, "golden", "gt.jsonl")


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestIouCommand:
    def test_identical_boxes_print_one(self, capsys):
        box = "0,0,1,1,1,1,0.3"
        code, out, _ = run_cli(["iou", "--a", box, "--b", box], capsys)
        assert code == 0
        assert out.splitlines()[0] == "iou 1"

    def test_monte_carlo_line(self, capsys):
        code, out, _ = run_cli(
            ["iou", "--a", "0,0,0,1,1,1,0", "--b", "0.5,0,0,1,1,1,0",
             "--mc-samples", "200000", "--seed", "3"],
            capsys,
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == f"iou {io.format_float(1.0 / 3.0)}"
        assert lines[1].startswith("iou_mc 0.33")

    def test_malformed_box_is_validation_error(self, capsys):
        code, _, err = run_cli(["iou", "--a", "1,2,3", "--b", "0,0,0,1,1,1,0"], capsys)
        assert code == 1
        assert "7 values" in err


class TestUsageErrors:
    def test_unknown_flag_exits_1(self, capsys):
        code, _, err = run_cli(["iou", "--a", "0,0,0,1,1,1,0", "--b", "0,0,0,1,1,1,0",
                                "--bogus"], capsys)
        assert code == 1
        assert "usage" in err.lower()

    def test_missing_subcommand_exits_1(self, capsys):
        code, _, _ = run_cli([], capsys)
        assert code == 1

    def test_missing_manifest_is_io_error(self, capsys, tmp_path):
        code, _, err = run_cli(
            ["render-gt", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path)],
            capsys,
        )
        assert code == 2


class TestRenderGt:
    def test_reproduces_golden_byte_for_byte(self, capsys, tmp_path):
        code, _, _ = run_cli(
            ["render-gt", "--manifest", MANIFEST, "--out", str(tmp_path)], capsys
        )
        assert code == 0
        got = (tmp_path / "gt.jsonl").read_bytes()
        with open(GOLDEN, "rb") as fh:
            assert got == fh.read()

    @pytest.mark.parametrize("threads", [1, 4, 16])
    def test_byte_identical_across_thread_counts(self, capsys, tmp_path, threads):
        out = tmp_path / f"t{threads}"
        code, _, _ = run_cli(
            ["render-gt", "--manifest", MANIFEST, "--out", str(out),
             "--threads", str(threads)],
            capsys,
        )
        assert code == 0
        with open(GOLDEN, "rb") as fh:
            assert (out / "gt.jsonl").read_bytes() == fh.read()

    def test_golden_matches_on_python_backend(self, tmp_path):
        # The fallback kernels are bit-identical to the compiled ones, so
        # the golden bytes must not depend on which backend is installed.
        out = tmp_path / "py"
        result = subprocess.run(
            [sys.executable, "-m", "cubegt.cli", "render-gt", "--manifest", MANIFEST,
             "--out", str(out)],
            env=dict(os.environ, CUBEGT_BACKEND="python"),
            capture_output=True,
        )
        assert result.returncode == 0, result.stderr
        with open(GOLDEN, "rb") as fh:
            assert (out / "gt.jsonl").read_bytes() == fh.read()

    def test_env_var_overrides_threads(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("CUBIFY_THREADS", "2")
        out = tmp_path / "env"
        code, _, _ = run_cli(
            ["render-gt", "--manifest", MANIFEST, "--out", str(out), "--threads", "1"],
            capsys,
        )
        assert code == 0
        with open(GOLDEN, "rb") as fh:
            assert (out / "gt.jsonl").read_bytes() == fh.read()


class TestEvalCommand:
    def _gt_as_detections(self, tmp_path):
        gt = io.load_frame_gt(os.path.join(DATA, "golden"))
        from cubegt.evaluation import Detection

        dets = {
            fid: [
                Detection(frame_id=fid, score=1.0, box=inst.box, det_id=i)
                for i, inst in enumerate(frame.instances)
            ]
            for fid, frame in gt.items()
        }
        path = tmp_path / "dets.jsonl"
        io.save_detections(dets, path)
        return path

    def test_gt_vs_itself_is_perfect(self, capsys, tmp_path):
        dets = self._gt_as_detections(tmp_path)
        code, out, _ = run_cli(
            ["eval", "--gt", os.path.join(DATA, "golden"), "--dets", str(dets),
             "--class-agnostic", "--out", str(tmp_path / "report")],
            capsys,
        )
        assert code == 0
        lines = dict(
            line.split() for line in out.splitlines() if line and not line.startswith("#")
        )
        assert lines["AP25"] == "1"
        assert lines["AR25"] == "1"
        assert lines["AP50"] == "1"
        assert lines["AR50"] == "1"
        assert (tmp_path / "report" / "report.txt").exists()
        assert (tmp_path / "report" / "report.csv").exists()

    def test_report_files_deterministic(self, capsys, tmp_path):
        dets = self._gt_as_detections(tmp_path)
        texts = []
        for name in ("r1", "r2"):
            code, _, _ = run_cli(
                ["eval", "--gt", os.path.join(DATA, "golden"), "--dets", str(dets),
                 "--class-agnostic", "--out", str(tmp_path / name)],
                capsys,
            )
            assert code == 0
            texts.append((tmp_path / name / "report.csv").read_bytes())
        assert texts[0] == texts[1]

    def test_unknown_frame_id_validation_error(self, capsys, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"frame_id":"ghost","score":0.5,"center":[0,0,1],"dims":[1,1,1],"yaw":0}\n'
        )
        code, _, err = run_cli(
            ["eval", "--gt", os.path.join(DATA, "golden"), "--dets", str(path)], capsys
        )
        assert code == 1
        assert "unknown frame_id" in err


class TestDecodeCommand:
    def _preds_file(self, tmp_path, z=0.5):
        path = tmp_path / "preds.jsonl"
        rows = [
            {"frame_id": "frame000", "u": 160.0, "v": 120.0, "z": z,
             "dims": [0.4, 0.4, 0.4], "yaw": 0.2, "score": 0.9},
            {"frame_id": "frame002", "u": 200.0, "v": 100.0, "z": z,
             "dims": [0.3, 0.5, 0.4], "yaw": -0.4, "score": 0.7},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return path

    def test_rgb_mode_decodes_metric(self, capsys, tmp_path):
        preds = self._preds_file(tmp_path, z=2.0)
        out = tmp_path / "dets.jsonl"
        code, msg, _ = run_cli(
            ["decode", "--preds", str(preds), "--manifest", MANIFEST, "--out", str(out)],
            capsys,
        )
        assert code == 0
        assert "decoded 2 detections" in msg
        loaded = io.load_detections(out)
        det = loaded["frame000"][0]
        # Principal-point prediction at z = 2 sits 2 m along the camera axis;
        # in the gravity frame of frame000 (camera 0.5 m up, looking along
        # world +y) that is (0, 2, 0) relative to the camera origin.
        assert np.allclose(det.box.center, [0.0, 2.0, 0.0], atol=1e-9)
        assert np.allclose(det.box.dims, [0.4, 0.4, 0.4])

    def test_sensor_stats_mode_rescales(self, capsys, tmp_path):
        from cubegt.decode import depth_stats

        preds = self._preds_file(tmp_path, z=0.5)
        out = tmp_path / "dets.jsonl"
        code, _, _ = run_cli(
            ["decode", "--preds", str(preds), "--manifest", MANIFEST,
             "--depth-stats", "from-sensor", "--out", str(out)],
            capsys,
        )
        assert code == 0
        stats = depth_stats(io.load_depth_png(os.path.join(DATA, "depth_sensor.png")))
        expected_dims = stats.sigma * np.array([0.4, 0.4, 0.4])
        det = io.load_detections(out)["frame000"][0]
        assert np.allclose(det.box.dims, expected_dims, atol=1e-8)
        expected_z = stats.sigma * 0.5 + stats.mu
        assert np.linalg.norm(det.box.center) == pytest.approx(expected_z, abs=1e-8)

    def test_unknown_frame_rejected(self, capsys, tmp_path):
        path = tmp_path / "preds.jsonl"
        path.write_text(
            '{"frame_id":"ghost","u":1,"v":1,"z":1,"dims":[1,1,1],"yaw":0,"score":0.5}\n'
        )
        code, _, err = run_cli(
            ["decode", "--preds", str(path), "--manifest", MANIFEST,
             "--out", str(tmp_path / "o.jsonl")],
            capsys,
        )
        assert code == 1
        assert "unknown frame_id" in err


class TestDecodeEvalLoop:
    def test_predictions_built_from_gt_score_perfectly(self, capsys, tmp_path):
        # Full loop: invert each golden GT box into a raw prediction, decode
        # it through the CLI, then evaluate against the same ground truth.
        from cubegt.camera import project

        gt = io.load_frame_gt(os.path.join(DATA, "golden"))
        manifest = io.load_manifest(MANIFEST)
        cameras = {f.frame_id: f.camera for f in manifest.frames}

        rows = []
        for fid, frame in gt.items():
            camera = cameras[fid]
            for inst in frame.instances:
                center_cam = camera.gravity_to_camera @ inst.box.center
                u, v = project(camera, center_cam)
                rows.append(
                    {
                        "frame_id": fid,
                        "u": u,
                        "v": v,
                        "z": center_cam[2],
                        "dims": list(inst.box.dims),
                        "yaw": inst.box.yaw,
                        "score": 1.0,
                    }
                )
        preds = tmp_path / "preds.jsonl"
        preds.write_text("\n".join(json.dumps(r) for r in rows) + "\n")

        dets = tmp_path / "dets.jsonl"
        code, _, _ = run_cli(
            ["decode", "--preds", str(preds), "--manifest", MANIFEST, "--out", str(dets)],
            capsys,
        )
        assert code == 0
        code, out, _ = run_cli(
            ["eval", "--gt", os.path.join(DATA, "golden"), "--dets", str(dets),
             "--class-agnostic"],
            capsys,
        )
        assert code == 0
        lines = dict(
            line.split() for line in out.splitlines() if line and not line.startswith("#")
        )
        assert lines["AP25"] == "1" and lines["AR50"] == "1"


class TestConsoleEntryPoint:
    def test_module_invocation(self):
        result = subprocess.run(
            [sys.executable, "-m", "cubegt.cli", "iou",
             "--a", "0,0,0,1,1,1,0", "--b", "0,0,0,1,1,1,0"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert result.stdout.splitlines()[0] == "iou 1"
