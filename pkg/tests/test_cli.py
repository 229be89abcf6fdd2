import subprocess
import sys

import numpy as np
import pytest

from latenthdr import imageio
from latenthdr.cli import main
from latenthdr.metrics import relative_errors


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def scenes(tmp_path, capsys):
    d = tmp_path / "scenes"
    code, out, _ = run(capsys, "gen-scenes", "--out-dir", d, "--count", 2, "--base-seed", 3,
                       "--width", 32, "--height", 32)
    assert code == 0
    return d


class TestGenScenes:
    def test_manifest(self, scenes):
        lines = (scenes / "manifest.txt").read_text().splitlines()
        assert lines[0].startswith("file\tseed")
        assert [l.split("\t")[1] for l in lines[1:]] == ["4", "5"]
        assert len(list(scenes.glob("*.pfm"))) == 2

    def test_banner_first(self, tmp_path, capsys):
        _, out, _ = run(capsys, "gen-scenes", "--out-dir", tmp_path, "--count", 1, "--width", 8,
                        "--height", 8)
        assert out.splitlines()[0].startswith("# latenthdr gen-scenes ")
        assert "seed=0" in out.splitlines()[0]


class TestBracketMerge:
    def test_round_trip(self, scenes, tmp_path, capsys):
        src = scenes / "scene0000.pfm"
        bdir = tmp_path / "b"
        assert run(capsys, "bracket", "--input", src, "--evs", "-7:5:1", "--out-dir", bdir)[0] == 0
        assert (bdir / "ev-7.0.ppm").exists() and (bdir / "ev+5.0.ppm").exists()
        out = tmp_path / "r.pfm"
        assert run(capsys, "merge", "--bracket-dir", bdir, "--out", out)[0] == 0
        rel = relative_errors(imageio.load_pfm(out), imageio.load_pfm(src))
        assert np.median(rel) <= 0.02

        code, text, _ = run(capsys, "stats", "--bracket-dir", bdir)
        rows = [l.split("\t") for l in text.splitlines()[2:]]
        assert len(rows) == 13
        hi = [float(r[2]) for r in rows]
        assert hi == sorted(hi)

        blended = tmp_path / "v1.pfm"
        code, _, _ = run(capsys, "merge", "--bracket-dir", bdir, "--out", blended,
                         "--blend", bdir / "ev+0.0.ppm")
        assert code == 0 and blended.exists()

        code, text, _ = run(capsys, "stops", "--input", out)
        header, row = text.splitlines()[1:3]
        assert header == "p_low\tp_high\tstops\tclamped"
        assert 5 < float(row.split("\t")[2]) < 15

    def test_merge_threads_identical(self, scenes, tmp_path, capsys):
        bdir = tmp_path / "b"
        run(capsys, "bracket", "--input", scenes / "scene0001.pfm", "--out-dir", bdir)
        run(capsys, "merge", "--bracket-dir", bdir, "--out", tmp_path / "a.pfm", "--threads", 1)
        run(capsys, "merge", "--bracket-dir", bdir, "--out", tmp_path / "b.pfm", "--threads", 4)
        assert (tmp_path / "a.pfm").read_bytes() == (tmp_path / "b.pfm").read_bytes()


class TestModelCommands:
    def test_train_and_use(self, scenes, tmp_path, capsys):
        model = tmp_path / "m.bin"
        code, out, _ = run(capsys, "train", "--data-dir", scenes, "--evs", "-2:2:2", "--steps", 4,
                           "--base-width", 4, "--seed", 2, "--out", model)
        assert code == 0
        trace = (tmp_path / "m.bin.trace.txt").read_text().splitlines()
        assert trace[0] == "step\tloss" and len(trace) == 5

        ldr = tmp_path / "in.ppm"
        from latenthdr.bracket import expose
        imageio.save_ppm(ldr, expose(imageio.load_pfm(scenes / "scene0000.pfm"), 0.0))
        assert run(capsys, "l2h", "--input", ldr, "--model", model, "--out", tmp_path / "o.pfm")[0] == 0
        assert imageio.load_pfm(tmp_path / "o.pfm").width == 32

        code, text, _ = run(capsys, "trajectory", "--model", model, "--input", ldr,
                            "--gt-hdr", scenes / "scene0000.pfm", "--out", tmp_path / "t.txt")
        assert code == 0
        lines = (tmp_path / "t.txt").read_text().splitlines()
        assert lines[0] == "ev\td_gt\td_pred" and len(lines) == 5

        code, text, _ = run(capsys, "eval", "--data-dir", scenes, "--model", model, "--blend")
        rows = [l for l in text.splitlines()[2:] if not l.startswith("#")]
        assert code == 0 and len(rows) == 2

    def test_no_film_train(self, scenes, tmp_path, capsys):
        model = tmp_path / "n.bin"
        code, _, _ = run(capsys, "train", "--data-dir", scenes, "--evs", "-1:1:1", "--steps", 2,
                         "--base-width", 4, "--no-film", "--out", model)
        assert code == 0
        from latenthdr.head import ExposureHead
        assert ExposureHead.load(model).cfg.ev_grid == (-1.0, 0.0, 1.0)

    def test_posterior_stats(self, scenes, capsys):
        code, text, _ = run(capsys, "posterior-stats", "--data-dir", scenes, "--sigma0", 0)
        header, row = text.splitlines()[1:3]
        assert header.split("\t")[0] == "sigma_mean"
        assert float(row.split("\t")[2]) == 0.0


class TestErrors:
    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "stops", "--input", tmp_path / "nope.pfm")
        assert code != 0
        assert err.startswith("error:") and len(err.strip().splitlines()) == 1

    def test_missing_ev_zero(self, scenes, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--data-dir", scenes, "--evs", "1:2:1", "--steps", 1,
                           "--out", tmp_path / "m.bin")
        assert code == 1 and "EV 0" in err

    def test_model_shape_mismatch(self, scenes, tmp_path, capsys):
        from latenthdr.head import ExposureHead, tiny_config
        bad = tmp_path / "bad.bin"
        tensors = ExposureHead.init(tiny_config(), 0).to_tensors()
        tensors["param/stem.w"] = np.zeros((1, 1, 3, 3))
        from latenthdr.neural import weights
        weights.save(bad, tensors)
        code, _, err = run(capsys, "l2h", "--input", scenes / "x.ppm", "--model", bad,
                           "--out", tmp_path / "o.pfm")
        assert code == 1 and "shape" in err

    def test_unknown_subcommand(self):
        proc = subprocess.run([sys.executable, "-m", "latenthdr", "frobnicate"],
                              capture_output=True, text=True)
        assert proc.returncode != 0
        assert "usage:" in proc.stderr

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["stops", "--input", "x", "--bogus"])
        assert exc.value.code != 0
