import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_image
from dewater.errors import RejectedInputError
from dewater.metrics import COLUMNS, PSNR_CAP, build_report, euclidean_distance, psnr, ssim, uiqm
from oracles import ssim_oracle, uiqm_oracle


class TestEuclideanDistance:
    def test_identical(self, rng):
        a = random_image(rng, 5, 5)
        assert euclidean_distance(a, a) == (0.0, 0.0, 0.0, 0.0)

    def test_maximal(self):
        assert euclidean_distance(np.ones((3, 4, 3)), np.zeros((3, 4, 3))) == (1.0, 1.0, 1.0, 1.0)

    def test_per_channel_rms(self, rng):
        a, b = random_image(rng, 6, 7), random_image(rng, 6, 7)
        r, g, bb, avg = euclidean_distance(a, b)
        for c, v in enumerate((r, g, bb)):
            n = a.shape[0] * a.shape[1]
            assert v == pytest.approx(np.linalg.norm((a[..., c] - b[..., c]).ravel()) / math.sqrt(n), abs=1e-12)
        assert avg == pytest.approx((r + g + bb) / 3)

    def test_shape_mismatch(self):
        with pytest.raises(RejectedInputError):
            euclidean_distance(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_symmetry_and_triangle(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = (r.uniform(size=(5, 6, 3)) for _ in range(3))
        ab, ba = euclidean_distance(a, b), euclidean_distance(b, a)
        assert ab == pytest.approx(ba, abs=1e-15)
        ac, bc = euclidean_distance(a, c), euclidean_distance(b, c)
        for k in range(3):
            assert ac[k] <= ab[k] + bc[k] + 1e-12


class TestPSNR:
    def test_cap(self, rng):
        a = random_image(rng, 4, 4)
        assert psnr(a, a) == PSNR_CAP

    def test_mse_001(self):
        ref = np.zeros((4, 4, 3))
        assert psnr(ref + 0.1, ref) == pytest.approx(20.0, abs=1e-9)

    def test_decreasing_with_noise_amplitude(self):
        r = np.random.default_rng(0)
        ref = r.uniform(0.25, 0.75, size=(32, 32, 3))
        noise = r.uniform(-1, 1, size=ref.shape)
        amps = np.linspace(0.01, 0.25, 24)
        vals = [psnr(ref + a * noise, ref) for a in amps]
        assert all(x > y for x, y in zip(vals, vals[1:]))


class TestSSIM:
    def test_self(self, rng):
        a = random_image(rng, 16, 20)
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_uniform_constants(self):
        a = np.full((12, 12, 3), 0.5)
        assert ssim(a, a.copy()) == 1.0

    def test_too_small(self):
        with pytest.raises(RejectedInputError):
            ssim(np.zeros((10, 16, 3)), np.zeros((10, 16, 3)))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_bruteforce(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.uniform(size=(16, 16, 3)), r.uniform(size=(16, 16, 3))
        assert ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-6)

    def test_matches_scikit_image(self):
        skm = pytest.importorskip("skimage.metrics")
        r = np.random.default_rng(9)
        a = r.uniform(size=(40, 33, 3))
        b = np.clip(a + r.normal(0, 0.1, a.shape), 0, 1)
        ref = skm.structural_similarity(
            a, b, channel_axis=2, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
        )
        assert ssim(a, b) == pytest.approx(ref, abs=1e-9)

    def test_shift_invariance_of_structure_term(self, rng):
        a = rng.uniform(0, 0.9, size=(24, 24, 3))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 0.9)
        _, cs = ssim(a, b, return_cs=True)
        _, cs_shift = ssim(a + 0.1, b + 0.1, return_cs=True)
        assert abs(cs - cs_shift) < 1e-6
        assert abs(ssim(a + 0.1, a + 0.1) - ssim(a, a)) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_self_similarity_property(self, seed):
        a = np.random.default_rng(seed).uniform(size=(13, 15, 3))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def checkerboard(n):
    c = (np.indices((n, n)).sum(axis=0) % 2).astype(float)
    return np.repeat(c[..., None], 3, axis=2)


class TestUIQM:
    def test_uniform_gray_is_zero(self):
        score, (cm, sm, conm) = uiqm(np.full((32, 32, 3), 0.5), components=True)
        assert cm == 0.0 and sm == 0.0 and conm == 0.0 and score == 0.0

    def test_checkerboard_matches_oracle(self):
        img = checkerboard(64)
        assert uiqm(img) == pytest.approx(uiqm_oracle(img), abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_matches_oracle(self, seed):
        img = np.random.default_rng(seed).uniform(size=(16, 16, 3))
        assert uiqm(img) == pytest.approx(uiqm_oracle(img), abs=1e-6)

    def test_partial_blocks_dropped(self, rng):
        img = random_image(rng, 21, 19)
        assert uiqm(img) == pytest.approx(uiqm_oracle(img), abs=1e-6)

    def test_too_small(self):
        with pytest.raises(RejectedInputError):
            uiqm(np.zeros((7, 20, 3)))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), blocks=st.integers(1, 4))
    def test_mirror_invariant(self, seed, blocks):
        img = np.random.default_rng(seed).uniform(size=(16, 8 * blocks, 3))
        assert uiqm(img[:, ::-1]) == pytest.approx(uiqm(img), abs=1e-9)

    def test_more_colourful_scores_higher_uicm(self, rng):
        gray = np.repeat(rng.uniform(size=(32, 32, 1)), 3, axis=2)
        colour = random_image(rng, 32, 32)
        assert uiqm(colour, components=True)[1][0] > uiqm(gray, components=True)[1][0]


class TestReport:
    def test_identical_pair_row(self, rng):
        a = random_image(rng, 16, 16)
        rep = build_report([("x", a, a)])
        row = rep.rows[0]
        assert (row["ed_avg"], row["psnr_db"], row["ssim"]) == (0.0, 100.0, pytest.approx(1.0))
        assert row["uiqm"] == pytest.approx(uiqm(a))

    def test_aggregate_is_mean(self, rng, monkeypatch):
        import dewater.metrics as m

        vals = iter([10.0, 20.0, 30.0])
        monkeypatch.setattr(m, "psnr", lambda p, r: next(vals))
        imgs = [random_image(rng, 16, 16) for _ in range(3)]
        rep = build_report([(f"i{k}", im, im * 0.9) for k, im in enumerate(imgs)])
        assert rep.aggregate["psnr_db"] == pytest.approx(20.0)
        for col in COLUMNS[1:]:
            assert rep.aggregate[col] == pytest.approx(np.mean([r[col] for r in rep.rows]), abs=1e-9)

    def test_two_identical_rows(self, rng):
        a, b = random_image(rng, 16, 16), random_image(rng, 16, 16)
        rep = build_report([("p", a, b), ("q", a, b)])
        for col in COLUMNS[1:]:
            assert rep.aggregate[col] == pytest.approx(rep.rows[0][col], abs=1e-12)

    def test_sorted_and_nulls(self, rng):
        a = random_image(rng, 16, 16)
        rep = build_report([("b", a, None), ("a", a, a)], dataset_id="d", method_id="m")
        assert [r["image_id"] for r in rep.rows] == ["a", "b"]
        assert rep.rows[1]["psnr_db"] is None
        lines = rep.to_csv().splitlines()
        assert lines[0] == ",".join(COLUMNS)
        assert lines[2].startswith("b,,,,,,,")
        assert lines[-1].startswith("MEAN,")
        obj = json.loads(rep.to_json())
        assert obj["per_image"][1]["ssim"] is None and obj["dataset_id"] == "d" and obj["method_id"] == "m"

    def test_empty_rejected(self):
        with pytest.raises(RejectedInputError):
            build_report([])

    def test_deterministic_serialisation(self, rng):
        a, b = random_image(rng, 16, 16), random_image(rng, 16, 16)
        r1 = build_report([("z", a, b), ("y", b, a)])
        r2 = build_report([("y", b, a), ("z", a, b)])
        assert r1.to_csv() == r2.to_csv() and r1.to_json() == r2.to_json()
