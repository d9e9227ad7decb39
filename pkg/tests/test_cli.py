import json

import numpy as np
import pytest

from liddense.cli import main
from liddense.depth_io import (
    DepthMap,
    RgbImage,
    decode_depth_png,
    encode_depth_png,
    encode_rgb_png,
)


@pytest.fixture
def calib_file(tmp_path):
    p = tmp_path / "calib.txt"
    p.write_text("100.0 100.0 50.0 40.0\n")
    return p


def write_sparse_map(path, seed, h=48, w=64):
    rng = np.random.default_rng(seed)
    data = np.where(rng.uniform(size=(h, w)) < 0.25, rng.uniform(1, 80, (h, w)), 0.0)
    m = DepthMap.from_array(np.rint(data * 256) / 256.0)
    path.write_bytes(encode_depth_png(m))
    return m


class TestConvert:
    def test_single_mode_end_to_end(self, tmp_path, calib_file, capsys):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_sparse_map(in_dir / "frame.png", 0)
        report = tmp_path / "summary.json"
        code = main([
            "convert", "--mode", "single", "--theta-top", "auto",
            "--calib", str(calib_file),
            "--in", str(in_dir), "--out", str(tmp_path / "out"),
            "--report", str(report),
        ])
        assert code == 0
        out_map = decode_depth_png((tmp_path / "out" / "frame.png").read_bytes())
        src_map = decode_depth_png((in_dir / "frame.png").read_bytes())
        assert (out_map.data > 0).sum() <= (src_map.data > 0).sum()
        payload = json.loads(report.read_text())
        assert payload["n_files"] == 1 and payload["n_failed"] == 0

    def test_sixteen_and_explicit_modes(self, tmp_path, calib_file):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_sparse_map(in_dir / "a.png", 1)
        assert main([
            "convert", "--mode", "16", "--theta-top", "auto",
            "--calib", str(calib_file), "--in", str(in_dir),
            "--out", str(tmp_path / "o16"),
        ]) == 0
        assert main([
            "convert", "--mode", "lines=0,31,63", "--theta-top", "auto",
            "--calib", str(calib_file), "--in", str(in_dir),
            "--out", str(tmp_path / "olist"),
        ]) == 0

    def test_empty_dir_succeeds(self, tmp_path, calib_file):
        (tmp_path / "empty").mkdir()
        assert main([
            "convert", "--mode", "single", "--calib", str(calib_file),
            "--in", str(tmp_path / "empty"), "--out", str(tmp_path / "out"),
        ]) == 0

    def test_bad_calib_fails_with_message(self, tmp_path, capsys):
        (tmp_path / "in").mkdir()
        bad = tmp_path / "calib.txt"
        bad.write_text("only two numbers\n")
        code = main([
            "convert", "--mode", "single", "--calib", str(bad),
            "--in", str(tmp_path / "in"), "--out", str(tmp_path / "out"),
        ])
        assert code != 0
        assert "calibration" in capsys.readouterr().err

    def test_idempotent_outputs(self, tmp_path, calib_file):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        write_sparse_map(in_dir / "a.png", 2)
        args = [
            "convert", "--mode", "single", "--theta-top", "auto",
            "--calib", str(calib_file), "--in", str(in_dir),
        ]
        assert main(args + ["--out", str(tmp_path / "o1")]) == 0
        assert main(args + ["--out", str(tmp_path / "o2")]) == 0
        b1 = (tmp_path / "o1" / "a.png").read_bytes()
        b2 = (tmp_path / "o2" / "a.png").read_bytes()
        assert b1 == b2


class TestEval:
    def test_identical_dirs_give_zero_metrics(self, tmp_path):
        d = tmp_path / "maps"
        d.mkdir()
        write_sparse_map(d / "x.png", 3)
        report = tmp_path / "report.json"
        code = main(["eval", "--pred", str(d), "--gt", str(d), "--report", str(report)])
        assert code == 0
        payload = json.loads(report.read_text())
        for key in ("rmse", "mae", "irmse", "imae", "sq_error_rel", "abs_error_rel"):
            assert payload[key] == 0.0
        assert payload["n_valid"] > 0
        assert payload["format_version"] == 1

    def test_dimension_mismatch_fails_per_file(self, tmp_path, capsys):
        pred_dir, gt_dir = tmp_path / "pred", tmp_path / "gt"
        pred_dir.mkdir(), gt_dir.mkdir()
        write_sparse_map(pred_dir / "x.png", 4, h=32, w=32)
        write_sparse_map(gt_dir / "x.png", 4, h=16, w=16)
        code = main(["eval", "--pred", str(pred_dir), "--gt", str(gt_dir)])
        assert code != 0
        assert "x.png" in capsys.readouterr().err

    def test_single_file_pair(self, tmp_path):
        p = tmp_path / "p.png"
        g = tmp_path / "g.png"
        gt = DepthMap.from_array(np.full((4, 4), 2.0))
        pred = DepthMap.from_array(np.full((4, 4), 2.5))
        p.write_bytes(encode_depth_png(pred))
        g.write_bytes(encode_depth_png(gt))
        report = tmp_path / "r.json"
        assert main(["eval", "--pred", str(p), "--gt", str(g), "--report", str(report)]) == 0
        payload = json.loads(report.read_text())
        assert payload["rmse"] == pytest.approx(500.0)
        assert payload["abs_error_rel"] == pytest.approx(25.0)


class TestGradcheckCommand:
    def test_scoped_run_passes(self, capsys):
        code = main(["gradcheck", "--seed", "0", "--op", "elementwise", "--op", "fuse"])
        assert code == 0
        out = capsys.readouterr().out
        assert "elementwise" in out and "PASS" in out

    def test_fault_injection_detected(self, capsys):
        code = main([
            "gradcheck", "--seed", "0", "--op", "nonbottleneck1d",
            "--inject-fault", "relu",
        ])
        assert code != 0
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_op_rejected(self):
        with pytest.raises(SystemExit):
            main(["gradcheck", "--seed", "0", "--op", "nope"])


class TestTrainToyCommand:
    def args(self, out_dir, extra=()):
        return [
            "train-toy", "--steps", "2", "--seed", "0", "--height", "8",
            "--width", "8", "--vnl-groups", "4", "--eval-every", "1",
            "--out", str(out_dir), *extra,
        ]

    def test_run_writes_log_and_checkpoint(self, tmp_path):
        out = tmp_path / "run"
        assert main(self.args(out)) == 0
        records = [json.loads(line) for line in (out / "log.jsonl").read_text().splitlines()]
        assert records[0]["type"] == "meta"
        assert any(r["type"] == "step" for r in records)
        assert any(r["type"] == "eval" for r in records)
        assert (out / "checkpoint.json").exists()

    def test_byte_identical_reruns(self, tmp_path):
        assert main(self.args(tmp_path / "r1")) == 0
        assert main(self.args(tmp_path / "r2")) == 0
        assert (tmp_path / "r1" / "log.jsonl").read_bytes() == (
            tmp_path / "r2" / "log.jsonl"
        ).read_bytes()
        assert (tmp_path / "r1" / "checkpoint.json").read_bytes() == (
            tmp_path / "r2" / "checkpoint.json"
        ).read_bytes()

    def test_no_gc_flag_changes_result(self, tmp_path):
        assert main(self.args(tmp_path / "gc")) == 0
        assert main(self.args(tmp_path / "nogc", extra=("--no-gc",))) == 0
        assert (tmp_path / "gc" / "checkpoint.json").read_bytes() != (
            tmp_path / "nogc" / "checkpoint.json"
        ).read_bytes()


class TestOverlayCommand:
    def test_overlay_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        rgb = RgbImage.from_array(rng.integers(0, 256, size=(16, 16, 3)))
        depth = np.zeros((16, 16))
        depth[8, :] = np.linspace(2, 60, 16)
        (tmp_path / "rgb.png").write_bytes(encode_rgb_png(rgb))
        (tmp_path / "d.png").write_bytes(
            encode_depth_png(DepthMap.from_array(depth))
        )
        out = tmp_path / "fused.png"
        code = main([
            "overlay", "--rgb", str(tmp_path / "rgb.png"),
            "--depth", str(tmp_path / "d.png"), "--out", str(out),
        ])
        assert code == 0 and out.exists()
        # idempotent
        first = out.read_bytes()
        assert main([
            "overlay", "--rgb", str(tmp_path / "rgb.png"),
            "--depth", str(tmp_path / "d.png"), "--out", str(out),
        ]) == 0
        assert out.read_bytes() == first
