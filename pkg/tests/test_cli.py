import json

import numpy as np
import pytest

from dewater.cli import EXIT_FATAL, EXIT_OK, EXIT_WARN, cmd_dewater, cmd_evaluate, cmd_prepare_data, main
from dewater.config import ENV_VAR, RunConfig, load_config, parse_config_text
from dewater.data import SampleCache
from dewater.errors import RejectedInputError
from dewater.imageio import read_image, write_png
from dewater.synth import make_clean_images, parse_params, synthesize_dataset
from dewater.training import Networks, TrainConfig, save_checkpoint


def write_images(directory, images, prefix="img"):
    for k, img in enumerate(images):
        write_png(directory / f"{prefix}{k}.png", img)


@pytest.fixture
def clean_dir(tmp_path):
    d = tmp_path / "clean"
    write_images(d, make_clean_images(3, 32, seed=1))
    return d


class TestSynthesize:
    def test_zero_attenuation_is_identity(self, clean_dir, tmp_path):
        synthesize_dataset(clean_dir, ({"beta": (0.0,) * 3, "veiling": (0.3,) * 3}, {}), tmp_path / "out")
        for k in range(3):
            uw = read_image(tmp_path / "out" / "synthetic" / "underwater" / f"img{k}.png")
            np.testing.assert_array_equal(uw, read_image(clean_dir / f"img{k}.png"))

    def test_heavy_attenuation_gives_veiling_light(self, clean_dir, tmp_path):
        glob = {"beta": (50.0,) * 3, "veiling": (0.2, 0.4, 0.6)}
        synthesize_dataset(clean_dir, (glob, {}), tmp_path / "out")
        uw = read_image(tmp_path / "out" / "synthetic" / "underwater" / "img0.png")
        assert np.abs(uw - np.array([0.2, 0.4, 0.6])).max() <= 1 / 255

    def test_hand_evaluated_pixels(self, tmp_path):
        # beta = ln 2 at depth 1 gives T = 0.5, so I = 0.5 J + 0.5 * 0.2
        j = np.array([0.2, 0.8, 0.0, 1.0, 0.4])
        clean = np.repeat(np.repeat(j[None, :, None], 3, axis=2), 2, axis=0)
        write_png(tmp_path / "c" / "row.png", clean)
        synthesize_dataset(tmp_path / "c", ({"beta": (0.6931471805599453,) * 3, "veiling": (0.2,) * 3}, {}),
                           tmp_path / "o")
        uw = read_image(tmp_path / "o" / "synthetic" / "underwater" / "row.png")
        np.testing.assert_allclose(uw[0, :, 1], [0.2, 0.5, 0.1, 0.6, 0.3], atol=1 / 255)

    def test_per_image_override_and_category(self, clean_dir, tmp_path):
        glob, per = parse_params("category = reef\nbeta = 0, 0, 0\nimg1.beta = 50, 50, 50\nveiling = 0.5, 0.5, 0.5")
        synthesize_dataset(clean_dir, (glob, per), tmp_path / "o")
        uw0 = read_image(tmp_path / "o" / "reef" / "underwater" / "img0.png")
        uw1 = read_image(tmp_path / "o" / "reef" / "underwater" / "img1.png")
        np.testing.assert_array_equal(uw0, read_image(clean_dir / "img0.png"))
        assert np.abs(uw1 - 0.5).max() <= 1 / 255

    def test_duntley_mode(self, clean_dir, tmp_path):
        text = "mode = duntley\nalpha = 0.5, 0.5, 0.5\nk = 0, 0, 0\nr = 100\ntheta = 0\nbackground = 0.3, 0.3, 0.3"
        synthesize_dataset(clean_dir, parse_params(text), tmp_path / "o")
        uw = read_image(tmp_path / "o" / "synthetic" / "underwater" / "img2.png")
        assert np.abs(uw - 0.3).max() <= 1 / 255

    @pytest.mark.parametrize(
        "text",
        ["beta = 1, 2", "colour = 1", "just words", "depth = deep", "ghost.beta = 1, 1, 1"],
    )
    def test_bad_params(self, clean_dir, tmp_path, text):
        with pytest.raises(RejectedInputError):
            synthesize_dataset(clean_dir, parse_params(text), tmp_path / "o")

    def test_error_names_line(self):
        with pytest.raises(RejectedInputError, match="p.txt:2"):
            parse_params("beta = 1, 1, 1\nbogus = 3", "p.txt")

    def test_round_trip_transmission(self, tmp_path):
        clean = make_clean_images(1, 32, seed=3)[0]
        write_png(tmp_path / "c" / "scene.png", clean)
        j = read_image(tmp_path / "c" / "scene.png")
        a = j.mean(axis=(0, 1))
        beta = np.array([0.9, 0.35, 0.2])
        params = ({"beta": tuple(beta), "veiling": tuple(a), "depth": 1.0}, {})
        synthesize_dataset(tmp_path / "c", params, tmp_path / "data")
        code, prep = cmd_prepare_data(tmp_path / "data", tmp_path / "cache", 0, 32, False, 0.5)
        assert code == EXIT_OK
        sample = SampleCache(prep.directory)["synthetic/scene"]
        np.testing.assert_allclose(sample.a[0, 0], a, atol=2 / 255)
        ok = np.abs(j - a) >= 0.2
        t_true = np.broadcast_to(np.exp(-beta), j.shape)
        assert ok.sum() > 100
        assert np.abs(sample.t[ok] - t_true[ok]).max() < 0.05


class TestPrepareData:
    def test_empty_root_warns(self, tmp_path):
        (tmp_path / "root").mkdir()
        code, prep = cmd_prepare_data(tmp_path / "root", tmp_path / "cache", size=32)
        assert code == EXIT_WARN and prep.report["samples"] == 0

    def test_missing_root_is_fatal(self, tmp_path):
        assert main(["prepare-data", "--root", str(tmp_path / "nope"), "--cache", str(tmp_path / "c")]) == EXIT_FATAL

    def test_rerun_hits_cache(self, clean_dir, tmp_path, capsys):
        synthesize_dataset(clean_dir, ({"beta": (0.5,) * 3, "veiling": (0.3,) * 3}, {}), tmp_path / "data")
        args = ["prepare-data", "--root", str(tmp_path / "data"), "--cache", str(tmp_path / "cache")]
        assert main(args) == EXIT_OK
        assert main(args) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert "cache written" in out[0] and "cache hit" in out[1]
        assert "12 samples from 3 pairs" in out[1]


@pytest.fixture
def deep_checkpoint(tmp_path):
    cfg = TrainConfig(image_size=256, depth=8, base_width=2, disc_width=2)
    return save_checkpoint(tmp_path / "deep.pt", Networks(cfg), 0)


class TestDewater:
    def test_preserves_dimensions(self, tmp_path, deep_checkpoint):
        img = np.random.default_rng(0).uniform(size=(300, 200, 3))
        write_png(tmp_path / "in" / "photo.png", img)
        assert cmd_dewater(deep_checkpoint, tmp_path / "in", tmp_path / "out") == EXIT_OK
        out = read_image(tmp_path / "out" / "photo_dewatered.png")
        assert out.shape == (300, 200, 3)

    def test_undecodable_input_warns(self, tmp_path, deep_checkpoint):
        write_png(tmp_path / "in" / "ok.png", np.zeros((16, 16, 3)))
        (tmp_path / "in" / "broken.png").write_bytes(b"garbage")
        assert cmd_dewater(deep_checkpoint, tmp_path / "in", tmp_path / "out") == EXIT_WARN
        assert (tmp_path / "out" / "ok_dewatered.png").exists()

    def test_missing_checkpoint_fatal(self, tmp_path):
        write_png(tmp_path / "x.png", np.zeros((8, 8, 3)))
        args = ["dewater", "--checkpoint", str(tmp_path / "none.pt"), str(tmp_path / "x.png")]
        assert main(args) == EXIT_FATAL


class TestEvaluate:
    @pytest.fixture
    def images(self, tmp_path):
        imgs = make_clean_images(2, 32, seed=5)
        write_images(tmp_path / "ref", imgs)
        write_images(tmp_path / "pred", imgs)
        return tmp_path

    def test_identical(self, images):
        assert cmd_evaluate(images / "pred", images / "ref", images / "m" / "report", "toy", "id") == EXIT_OK
        obj = json.loads((images / "m" / "report.json").read_text())
        assert obj["aggregate"]["psnr_db"] == 100.0 and obj["aggregate"]["ed_avg"] == 0.0
        assert (images / "m" / "report.csv").read_text().splitlines()[-1].startswith("MEAN,")

    def test_no_reference(self, images):
        assert cmd_evaluate(images / "pred", None, images / "m") == EXIT_OK
        obj = json.loads((images / "m.json").read_text())
        assert obj["aggregate"]["ssim"] is None and obj["aggregate"]["uiqm"] is not None

    def test_suffix_matching_and_leftovers(self, images):
        (images / "pred" / "img0.png").rename(images / "pred" / "img0_dewatered.png")
        write_png(images / "pred" / "extra.png", np.zeros((16, 16, 3)))
        assert cmd_evaluate(images / "pred", images / "ref", images / "m") == EXIT_WARN
        rows = json.loads((images / "m.json").read_text())["per_image"]
        assert [r["image_id"] for r in rows] == ["img0", "img1"]

    def test_nothing_to_compare(self, images, tmp_path):
        (tmp_path / "empty").mkdir()
        assert cmd_evaluate(tmp_path / "empty", images / "ref", tmp_path / "m") == EXIT_FATAL


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert isinstance(cfg, RunConfig) and cfg.epochs == 850 and cfg.lambda1 == 100.0

    def test_unknown_key(self):
        with pytest.raises(RejectedInputError, match="unknown key"):
            parse_config_text("learning_rate = 0.1")

    def test_coercion(self):
        vals = parse_config_text("epochs = 3\nlr = 1e-3\nsplit_quadrants = no\n# comment\n")
        assert vals == {"epochs": 3, "lr": 1e-3, "split_quadrants": False}

    @pytest.mark.parametrize("text", ["epochs = many", "resume = maybe", "no equals sign"])
    def test_bad_values(self, text):
        with pytest.raises(RejectedInputError):
            parse_config_text(text)

    def test_precedence(self, tmp_path, monkeypatch):
        env = tmp_path / "env.cfg"
        env.write_text("epochs = 5\nseed = 9\n")
        local = tmp_path / "local.cfg"
        local.write_text("epochs = 7\n")
        monkeypatch.setenv(ENV_VAR, str(env))
        cfg = load_config(local, seed=None, out_dir="x")
        assert (cfg.epochs, cfg.seed, cfg.out_dir) == (7, 9, "x")
        assert load_config(local, seed=1).seed == 1

    def test_help_lists_keys(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
        out = capsys.readouterr().out
        assert "lambda2" in out and "prepare-data" in out

    def test_bad_config_file_fatal(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense = 1\n")
        assert main(["evaluate", str(tmp_path), "--config", str(bad)]) == EXIT_FATAL


def test_end_to_end(tmp_path, clean_dir):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"image_size = 32\ndepth = 4\nbase_width = 4\ndisc_width = 4\nbatch_size = 4\nepochs = 1\n"
        f"cache_dir = {tmp_path / 'cache'}\n"
    )
    params = tmp_path / "p.txt"
    params.write_text("beta = 0.8, 0.3, 0.2\nveiling = 0.1, 0.4, 0.5\n")
    c = ["--config", str(cfg)]
    assert main(["synthesize", str(clean_dir), str(params), "--out", str(tmp_path / "data"), *c]) == EXIT_OK
    assert main(["prepare-data", "--root", str(tmp_path / "data"), *c]) == EXIT_OK
    assert main(["train", "--out", str(tmp_path / "run"), *c]) == EXIT_OK
    assert (tmp_path / "run" / "checkpoint_0001.pt").exists()
    ckpt = str(tmp_path / "run" / "latest.pt")
    uw = tmp_path / "data" / "synthetic" / "underwater"
    assert main(["dewater", "--checkpoint", ckpt, str(uw), "--out", str(tmp_path / "restored"), *c]) == EXIT_OK
    ref = str(tmp_path / "data" / "synthetic" / "reference")
    assert main(["evaluate", str(tmp_path / "restored"), "--ref", ref, "--out", str(tmp_path / "ev"), *c]) == EXIT_OK
    rows = json.loads((tmp_path / "ev" / "metrics.json").read_text())["per_image"]
    assert len(rows) == 3 and all(r["psnr_db"] > 0 for r in rows)
