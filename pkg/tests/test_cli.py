import hashlib
import json

import numpy as np
import pytest

from specrecon import cli as C
from specrecon import data as D
from specrecon import training as TR
from specrecon.errors import ConfigError


def make_config(tmp_path, data_dir, out, **train_kw):
    train = dict(bands=4, levels=2, refs=2, batch=1, patch=8, total_steps=2, seed=0)
    train.update(train_kw)
    cfg = {
        "train": train,
        "model": {"base_width": 4, "depth": 1, "d_state": 2},
        "data": {"dir": str(data_dir)},
        "out": str(out),
    }
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def synth(tmp_path, name="data", scenes=1, bands=4, size=16, seed=0):
    out = tmp_path / name
    rc = C.main(["synth", "--scenes", str(scenes), "--bands", str(bands), "--size", str(size), "--seed", str(seed), "--out", str(out)])
    assert rc == 0
    return out


def read_pgm(path):
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n")
    header, _, rest = raw.partition(b"65535\n")
    dims = header.split(b"\n")[1].split()
    w, h = int(dims[0]), int(dims[1])
    return np.frombuffer(rest, dtype=">u2").reshape(h, w)


class TestSynth:
    def test_layout_and_shapes(self, tmp_path):
        out = synth(tmp_path, scenes=2)
        cubes = sorted(out.glob("scene_*[0-9].frnc"))
        rgbs = sorted(out.glob("*_rgb.frnc"))
        assert len(cubes) == 2 and len(rgbs) == 2
        assert (out / "crf.csv").exists()
        cube = D.load_cube(cubes[0])
        assert cube.data.shape == (4, 16, 16)
        assert D.load_cube(rgbs[0]).data.shape == (3, 16, 16)

    def test_seed_checksum_stable(self, tmp_path):
        a = synth(tmp_path, "a", seed=3)
        b = synth(tmp_path, "b", seed=3)
        for fa in sorted(a.iterdir()):
            fb = b / fa.name
            assert hashlib.sha256(fa.read_bytes()).digest() == hashlib.sha256(fb.read_bytes()).digest()

    def test_rgb_companion_matches_projection(self, tmp_path):
        out = synth(tmp_path)
        cube = D.load_cube(out / "scene_000.frnc")
        crf = D.load_crf_csv(out / "crf.csv")
        rgb = D.load_cube(out / "scene_000_rgb.frnc").data
        assert np.abs(rgb - D.crf_project(cube, crf)).max() < 1e-6


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        data = synth(tmp_path)
        cfg = make_config(tmp_path, data, tmp_path / "run")
        rc = C.main(["train", "--config", str(cfg), "--train.bogus", "1"])
        assert rc == 2
        assert "train.bogus" in capsys.readouterr().err

    def test_override_types(self):
        cfg = C.apply_overrides(C.default_config(), ["--train.alpha", "0.3", "--train.batch", "4", "--train.use_rgb", "false"])
        assert cfg["train"]["alpha"] == 0.3
        assert cfg["train"]["batch"] == 4
        assert cfg["train"]["use_rgb"] is False

    def test_bad_bool(self):
        with pytest.raises(ConfigError):
            C.apply_overrides(C.default_config(), ["--train.use_rgb", "maybe"])

    def test_unknown_section_in_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"nope": {"x": 1}}))
        with pytest.raises(ConfigError, match="nope"):
            C.load_config(p)


class TestTrainCommand:
    def test_smoke_run_layout(self, tmp_path):
        data = synth(tmp_path)
        run = tmp_path / "run"
        cfg = make_config(tmp_path, data, run)
        assert C.main(["train", "--config", str(cfg)]) == 0
        assert (run / "config.json").exists()
        log = [json.loads(s) for s in (run / "log.jsonl").read_text().splitlines()]
        assert [e["step"] for e in log] == [0, 1]
        assert (run / "ckpt" / "final.frnw").exists()
        report = json.loads((run / "report.json").read_text())
        for key in ("psnr_db", "rmse_255", "ssim", "uiqi"):
            assert key in report
        # echoed config reproduces the run when fed back
        echoed = json.loads((run / "config.json").read_text())
        assert echoed["train"]["bands"] == 4

    def test_alpha_zero_unmasked(self, tmp_path):
        data = synth(tmp_path)
        cfg = make_config(tmp_path, data, tmp_path / "run0", alpha=0.0)
        assert C.main(["train", "--config", str(cfg)]) == 0
        log = [json.loads(s) for s in (tmp_path / "run0" / "log.jsonl").read_text().splitlines()]
        assert all(e == 0.0 for e in log[0]["epsilon"])

    def test_levels_one_is_one_shot(self, tmp_path):
        data = synth(tmp_path)
        cfg = make_config(tmp_path, data, tmp_path / "run1")
        assert C.main(["train", "--config", str(cfg), "--train.levels", "1"]) == 0
        step, blobs, _, conf = TR.load_checkpoint(tmp_path / "run1" / "ckpt" / "final.frnw")
        assert conf["train"]["levels"] == 1
        assert not any(name.startswith("gen1.") for name in blobs)
        assert blobs["gen0.head.w"].shape[0] == 4  # all K bands from one generator

    def test_missing_data_dir_exit_3(self, tmp_path):
        cfg = make_config(tmp_path, tmp_path / "nowhere", tmp_path / "run")
        assert C.main(["train", "--config", str(cfg)]) == 3

    def test_numeric_failure_exit_4(self, tmp_path, monkeypatch):
        from specrecon.errors import NumericError

        data = synth(tmp_path)
        cfg = make_config(tmp_path, data, tmp_path / "run")

        def boom(*a, **kw):
            raise NumericError("non-finite training state at step 0")

        monkeypatch.setattr(TR, "train_loop", boom)
        assert C.main(["train", "--config", str(cfg)]) == 4


class TestEvalCommand:
    def _checkpoint(self, tmp_path):
        data = synth(tmp_path)
        run = tmp_path / "run"
        cfg = make_config(tmp_path, data, run)
        assert C.main(["train", "--config", str(cfg)]) == 0
        return data, run / "ckpt" / "final.frnw"

    def test_report_images_and_curves(self, tmp_path):
        data, ckpt = self._checkpoint(tmp_path)
        out = tmp_path / "eval"
        assert C.main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        for key in ("psnr_db", "rmse_255", "ssim", "uiqi"):
            assert key in report["aggregate"]
        assert len(report["per_scene"]) == 1
        imgs = sorted((out / "img").iterdir())
        kinds = {p.name.split("_")[-1] for p in imgs}
        assert kinds == {"pred.pgm", "gt.pgm", "residual.pgm"}
        assert read_pgm(out / "img" / "scene00_band00_gt.pgm").shape == (16, 16)
        curves = sorted(out.glob("curve_*.csv"))
        assert curves
        lines = curves[0].read_text().splitlines()
        assert lines[0] == "wavelength_nm,gt,pred"
        assert len(lines) == 1 + 4

    def test_residual_of_identical_is_zero(self, tmp_path):
        x = np.random.default_rng(0).uniform(0, 1, size=(8, 8))
        C._save_pgm(tmp_path / "r.pgm", np.abs(x - x))
        assert read_pgm(tmp_path / "r.pgm").max() == 0

    def test_band_mismatch_exit_3(self, tmp_path):
        data, ckpt = self._checkpoint(tmp_path)
        other = synth(tmp_path, "other", bands=8)
        assert C.main(["eval", "--checkpoint", str(ckpt), "--data", str(other), "--out", str(tmp_path / "e")]) == 3


class TestAblateCommand:
    def test_alpha_axis_rows(self, tmp_path):
        data = synth(tmp_path)
        cfg = make_config(tmp_path, data, tmp_path / "abl", total_steps=1)
        assert C.main(["ablate", "--axis", "alpha", "--values", "0.2,0.5", "--config", str(cfg)]) == 0
        csv = (tmp_path / "abl" / "ablation.csv").read_text().splitlines()
        assert csv[0] == "setting,psnr_db,rmse_255,ssim,uiqi"
        assert [r.split(",")[0] for r in csv[1:]] == ["alpha=0.2", "alpha=0.5", "w/o mask"]
        md = (tmp_path / "abl" / "ablation.md").read_text()
        assert md.startswith("| setting |")

    def test_levels_axis_has_one_shot_row(self, tmp_path):
        data = synth(tmp_path)
        cfg = make_config(tmp_path, data, tmp_path / "abl2", total_steps=1)
        assert C.main(["ablate", "--axis", "levels", "--values", "2", "--config", str(cfg)]) == 0
        csv = (tmp_path / "abl2" / "ablation.csv").read_text().splitlines()
        assert [r.split(",")[0] for r in csv[1:]] == ["levels=2", "one-shot"]

    def test_refs_axis_has_wo_rgb_row(self, tmp_path):
        data = synth(tmp_path)
        cfg = make_config(tmp_path, data, tmp_path / "abl3", total_steps=1)
        assert C.main(["ablate", "--axis", "refs", "--values", "2,3", "--config", str(cfg)]) == 0
        csv = (tmp_path / "abl3" / "ablation.csv").read_text().splitlines()
        assert [r.split(",")[0] for r in csv[1:]] == ["refs=2", "refs=3", "w/o RGB"]

    def test_invalid_axis_exit_2(self, capsys):
        rc = C.main(["ablate", "--axis", "widths", "--values", "1"])
        assert rc == 2
        assert "axis" in capsys.readouterr().err
