import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage import data as skdata
from skimage.metrics import structural_similarity

from bread.errors import FormatError, ModelError, ShapeError, SizeError
from bread.metrics import (
    MetricReport,
    NiqeModel,
    ciede2000,
    delta_e,
    fit_niqe_model,
    gamma_align,
    load_default_model,
    loe,
    mse,
    niqe,
    psnr,
    srgb_to_lab,
    ssim,
)
from bread.metrics.fullref import ssim_plane
from bread.metrics.loe import lightness_map

from .conftest import LOL8
from .oracles import SHARMA_PAIRS, ciede2000_scalar, loe_pairs, mse_loop, srgb_to_lab_pixel, ssim_loop


# -- PSNR ------------------------------------------------------------------------


def test_psnr_examples(rng):
    a = rng.random((3, 8, 8))
    assert psnr(a, a) == 99.0
    assert psnr(np.full((3, 4, 4), 0.5), np.full((3, 4, 4), 0.6)) == pytest.approx(20.0)
    b = rng.random((3, 8, 8))
    assert mse(a, b) == pytest.approx(mse_loop(a, b), rel=1e-12)
    assert psnr(a, b) == pytest.approx(10 * math.log10(1 / mse_loop(a, b)), abs=1e-9)
    with pytest.raises(ShapeError):
        psnr(a, b[:, :4])


# -- SSIM ------------------------------------------------------------------------


def test_ssim_identity_and_oracle(rng):
    a = rng.random((16, 20))
    assert ssim_plane(a, a) == pytest.approx(1.0)
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ssim_plane(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-6)


def test_ssim_binary_inverse(rng):
    a = (rng.random((16, 16)) > 0.5).astype(np.float64)
    got = ssim_plane(a, 1 - a)
    assert got < -0.5
    assert got == pytest.approx(ssim_loop(a, 1 - a), abs=1e-6)


def test_ssim_cross_check_with_skimage(rng):
    a = rng.random((3, 40, 48))
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
    want = np.mean(
        [
            structural_similarity(
                a[c], b[c], data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
            )
            for c in range(3)
        ]
    )
    assert ssim(a, b) == pytest.approx(want, abs=1e-6)


def test_ssim_too_small():
    with pytest.raises(SizeError):
        ssim_plane(np.zeros((8, 8)), np.zeros((8, 8)))


# -- colour difference -----------------------------------------------------------


@pytest.mark.parametrize("lab1, lab2, want", SHARMA_PAIRS)
def test_ciede2000_verification_pairs(lab1, lab2, want):
    assert float(ciede2000(np.array(lab1), np.array(lab2))) == pytest.approx(want, abs=1e-4)
    assert ciede2000_scalar(lab1, lab2) == pytest.approx(want, abs=1e-4)


def test_ciede2000_vectorised_matches_scalar(rng):
    lab1 = np.stack([rng.uniform(0, 100, 200), rng.uniform(-80, 80, 200), rng.uniform(-80, 80, 200)], -1)
    lab2 = np.stack([rng.uniform(0, 100, 200), rng.uniform(-80, 80, 200), rng.uniform(-80, 80, 200)], -1)
    got = ciede2000(lab1, lab2)
    want = [ciede2000_scalar(p, q) for p, q in zip(lab1, lab2)]
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_lab_conversion_matches_pixel_oracle(rng):
    img = rng.random((3, 4, 5))
    lab = srgb_to_lab(img)
    for i in range(4):
        for j in range(5):
            np.testing.assert_allclose(lab[i, j], srgb_to_lab_pixel(*img[:, i, j]), atol=1e-9)


def test_delta_e_examples(rng):
    a = rng.random((3, 6, 6))
    assert delta_e(a, a) == 0
    black, white = np.zeros((3, 4, 4)), np.ones((3, 4, 4))
    per_pixel = ciede2000(srgb_to_lab(black), srgb_to_lab(white))
    assert np.all(per_pixel == per_pixel[0, 0]) and per_pixel[0, 0] > 50
    want = ciede2000_scalar(srgb_to_lab_pixel(0, 0, 0), srgb_to_lab_pixel(1, 1, 1))
    assert delta_e(black, white) == pytest.approx(want, abs=1e-6)


# -- LOE -------------------------------------------------------------------------


def test_loe_examples(rng):
    img = rng.random((3, 30, 40))
    assert loe(img, img) == 0
    assert loe(img, img**0.4) == 0
    two = np.zeros((3, 1, 2))
    two[:, 0, 0], two[:, 0, 1] = 0.2, 0.8
    swapped = two[..., ::-1]
    # 4 ordered pairs, 2 of them flip: the most a 2-pixel image can score
    assert loe(two, swapped) == pytest.approx(500.0)
    assert loe(two, swapped) == pytest.approx(loe_pairs(two.max(0), swapped.max(0)))


def test_loe_downsampled_oracle(rng):
    a, b = rng.random((3, 120, 90)), rng.random((3, 120, 90))
    la, lb = lightness_map(a), lightness_map(b)
    assert la.shape == (50, 50)
    # nearest sampling picks the centre of each cell
    assert la[0, 0] == a.max(0)[1, 0]
    assert loe(a, b) == pytest.approx(loe_pairs(la, lb))


# -- NIQE ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus():
    return [np.asarray(getattr(skdata, n)(), dtype=np.float64).transpose(2, 0, 1) / 255 for n in ("astronaut", "coffee")]


@pytest.fixture(scope="module")
def model(corpus):
    return fit_niqe_model(corpus)


def test_niqe_model_shape_and_psd(model):
    assert model.mean.shape == (36,)
    model.check()


def test_niqe_fit_is_deterministic(corpus, model):
    again = fit_niqe_model(corpus)
    np.testing.assert_array_equal(again.mean, model.mean)
    np.testing.assert_array_equal(again.cov, model.cov)


def test_niqe_noise_ordering(corpus, model):
    img = corpus[0]
    noisy = np.clip(img + 0.1 * np.random.default_rng(0).standard_normal(img.shape), 0, 1)
    assert niqe(img, model) < niqe(noisy, model)
    assert niqe(img, model) == niqe(img, model)


def test_niqe_bundled_model_on_fixture_images():
    from bread.dataprep import load_paired_dataset

    m = load_default_model()
    assert m.mean.shape == (36,)
    for s in load_paired_dataset(LOL8):
        for img in (s.low, s.high):
            score = niqe(img, m)
            assert math.isfinite(score) and score >= 0


def test_niqe_model_file_round_trip(tmp_path, model):
    model.save(tmp_path / "m.niqe")
    back = NiqeModel.load(tmp_path / "m.niqe")
    np.testing.assert_array_equal(back.mean, model.mean)
    np.testing.assert_array_equal(back.cov, model.cov)
    blob = (tmp_path / "m.niqe").read_bytes()
    (tmp_path / "cut.niqe").write_bytes(blob[:-8])
    with pytest.raises(FormatError):
        NiqeModel.load(tmp_path / "cut.niqe")
    (tmp_path / "bad.niqe").write_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError):
        NiqeModel.load(tmp_path / "bad.niqe")


def test_niqe_errors(model):
    with pytest.raises(ModelError):
        fit_niqe_model([])
    with pytest.raises(ModelError):
        fit_niqe_model([np.full((3, 200, 200), 0.5)])
    with pytest.raises(SizeError):
        niqe(np.random.default_rng(0).random((3, 100, 100)), model)
    bad = NiqeModel(model.mean, -np.eye(36))
    with pytest.raises(ModelError):
        bad.check()


# -- gamma alignment -------------------------------------------------------------


def test_gamma_identity(rng):
    y = rng.uniform(0.05, 1, (16, 16))
    g, aligned = gamma_align(y, y)
    assert g == pytest.approx(1.0, abs=1e-3)
    np.testing.assert_allclose(aligned, y, atol=1e-3)


def test_gamma_recovers_square_root(rng):
    y = rng.uniform(0.05, 1, (32, 32))
    g, aligned = gamma_align(y**2, y)
    assert g == pytest.approx(0.5, abs=1e-3)
    np.testing.assert_allclose(aligned, y, atol=1e-3)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.integers(0, 1000))
def test_gamma_beats_grid_search(true_gamma, seed):
    rng = np.random.default_rng(seed)
    ref = rng.uniform(0.02, 1, (12, 12))
    out = np.clip(ref ** (1 / true_gamma) + 0.02 * rng.standard_normal(ref.shape), 0, 1)
    g, aligned = gamma_align(out, ref)
    best = min(np.mean((out**gg - ref) ** 2) for gg in np.linspace(0.1, 10, 200))
    assert np.mean((aligned - ref) ** 2) <= best + 1e-8


# -- report ----------------------------------------------------------------------


def test_report_outputs(tmp_path):
    r = MetricReport()
    r.add("a", {"psnr": 10.0, "ssim": 0.5})
    r.add("b", {"psnr": 20.0, "ssim": 0.7})
    r.errors["c"] = "unreadable"
    assert r.aggregate == {"psnr": 15.0, "ssim": pytest.approx(0.6)}
    csv_path, json_path = r.write(tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "image,psnr,ssim" and len(lines) == 3
    import json

    blob = json.loads(json_path.read_text())
    assert blob["count"] == 2 and blob["errors"] == {"c": "unreadable"}
