"""MSE, PSNR and SSIM over the disk mask."""

import math

import numpy as np
import pytest

from fbspca import basis as basis_mod
from fbspca import data, metrics


@pytest.fixture(scope="module")
def phantoms():
    return data.generate_phantoms(6, 8, seed=1)


@pytest.fixture(scope="module")
def grid8():
    return basis_mod.GridSpec(8)


# ------------------------------------------------------------------- mse

def test_mse_zero_for_identical(phantoms, grid8):
    assert metrics.mse(phantoms, phantoms, grid8) == 0.0


def test_mse_of_constant_offset(phantoms, grid8):
    shifted = phantoms.pixels + 0.3
    assert metrics.mse(phantoms, shifted, grid8) == pytest.approx(0.09)


def test_mse_quadratic_scaling(phantoms, grid8):
    rng = np.random.default_rng(2)
    d = rng.standard_normal(phantoms.pixels.shape)
    base = metrics.mse(phantoms, phantoms.pixels + d, grid8)
    tripled = metrics.mse(phantoms, phantoms.pixels + 3 * d, grid8)
    assert tripled == pytest.approx(9 * base, rel=1e-12)


def test_mse_ignores_pixels_outside_mask(phantoms, grid8):
    junk = phantoms.pixels.copy()
    junk[:, ~grid8.mask] = 1e6
    ref = phantoms.pixels + 0.1
    junk_ref = junk + 0.1
    assert metrics.mse(phantoms.pixels, ref, grid8) == \
        pytest.approx(metrics.mse(junk, junk_ref, grid8), rel=1e-12)


def test_mse_accepts_stacks_and_arrays(phantoms, grid8):
    noisy = data.add_noise(phantoms, snr=1.0, seed=3)
    a = metrics.mse(phantoms, noisy, grid8)
    b = metrics.mse(phantoms.pixels, noisy.pixels, grid8)
    assert a == b


def test_shape_mismatch_raises(phantoms, grid8):
    with pytest.raises(ValueError, match="shape"):
        metrics.mse(phantoms.pixels, phantoms.pixels[:, :5, :5], grid8)


# ------------------------------------------------------------------ psnr

def test_psnr_infinite_for_identical(phantoms, grid8):
    assert metrics.psnr(phantoms, phantoms, grid8) == math.inf


def test_psnr_gains_3db_when_mse_halves(phantoms, grid8):
    rng = np.random.default_rng(4)
    d = rng.standard_normal(phantoms.pixels.shape)
    p1 = metrics.psnr(phantoms, phantoms.pixels + d, grid8)
    p2 = metrics.psnr(phantoms, phantoms.pixels + d / math.sqrt(2), grid8)
    assert p2 - p1 == pytest.approx(10 * math.log10(2), abs=1e-9)


def test_psnr_hand_oracle():
    # 13 masked pixels at L=2; the test image differs at three of them by
    # 1, 2 and 3, so mse = (1+4+9)/13, peak |clean| = 2, and
    # psnr = 10 log10(4 * 13 / 14) = 5.698753079565612 dB.
    grid = basis_mod.GridSpec(2)
    assert grid.n_mask == 13
    clean = np.zeros((1, 5, 5))
    clean[0, 2, 2] = 2.0
    test = clean.copy()
    test[0, 1, 2] = 1.0
    test[0, 2, 1] = 2.0
    test[0, 2, 3] = 3.0
    assert metrics.mse(clean, test, grid) == pytest.approx(14 / 13)
    assert metrics.psnr(clean, test, grid) == \
        pytest.approx(5.698753079565612, abs=1e-12)


def test_psnr_orders_like_mse(phantoms, grid8):
    rng = np.random.default_rng(5)
    small = phantoms.pixels + 0.1 * rng.standard_normal(phantoms.pixels.shape)
    large = phantoms.pixels + 0.9 * rng.standard_normal(phantoms.pixels.shape)
    assert metrics.mse(phantoms, small, grid8) < metrics.mse(phantoms, large, grid8)
    assert metrics.psnr(phantoms, small, grid8) > metrics.psnr(phantoms, large, grid8)


# ------------------------------------------------------------------ ssim

def test_ssim_one_for_identical(phantoms, grid8):
    assert metrics.ssim(phantoms, phantoms, grid8) == pytest.approx(1.0, abs=1e-12)


def test_ssim_low_for_inverted_contrast(grid8):
    # Sign inversion destroys structural similarity wherever the window
    # mean is near zero (an alternating pattern makes it exactly zero on
    # interior windows), so the score drops far below the identical-image
    # value of 1.
    i, j = np.indices((grid8.side, grid8.side))
    pattern = np.where(grid8.mask, (-1.0) ** (i + j), 0.0)[None]
    assert metrics.ssim(pattern, -pattern, grid8) < 0.1


def test_ssim_symmetric_with_external_dynamic_range(phantoms, grid8):
    noisy = data.add_noise(phantoms, snr=0.5, seed=6)
    f = metrics.ssim(phantoms, noisy, grid8, dynamic_range=2.0)
    b = metrics.ssim(noisy, phantoms, grid8, dynamic_range=2.0)
    assert f == pytest.approx(b, abs=1e-12)


def test_ssim_decreases_with_noise(phantoms, grid8):
    rng = np.random.default_rng(7)
    shape = phantoms.pixels.shape
    mild = phantoms.pixels + 0.05 * rng.standard_normal(shape)
    harsh = phantoms.pixels + 0.8 * rng.standard_normal(shape)
    dyn = float(np.ptp(phantoms.pixels[:, grid8.mask]))
    assert metrics.ssim(phantoms, mild, grid8, dynamic_range=dyn) > \
        metrics.ssim(phantoms, harsh, grid8, dynamic_range=dyn)


def test_ssim_rejects_window_larger_than_image():
    grid = basis_mod.GridSpec(3)  # side 7 < default 8x8 window
    stack = np.zeros((2, 7, 7))
    with pytest.raises(ValueError, match="window"):
        metrics.ssim(stack, stack, grid)


def test_ssim_per_image_shape(phantoms, grid8):
    noisy = data.add_noise(phantoms, snr=1.0, seed=8)
    vals = metrics.ssim_per_image(phantoms, noisy, grid8)
    assert vals.shape == (phantoms.n,)
    assert np.all(vals <= 1.0)


# --------------------------------------------------------------- reports

def test_quality_report_row_parses(phantoms, grid8):
    noisy = data.add_noise(phantoms, snr=1.0, seed=9)
    rep = metrics.QualityReport("noisy", phantoms, noisy, grid8)
    fields = rep.row().split(",")
    assert fields[0] == "noisy"
    assert float(fields[1]) == pytest.approx(rep.mse)
    assert float(fields[2]) == pytest.approx(rep.psnr, rel=1e-5)
    assert float(fields[3]) == pytest.approx(1.0 - rep.ssim)


def test_save_quality_csv(tmp_path, phantoms, grid8):
    noisy = data.add_noise(phantoms, snr=1.0, seed=10)
    reports = [metrics.QualityReport("noisy", phantoms, noisy, grid8),
               metrics.QualityReport("clean", phantoms, phantoms, grid8)]
    path = tmp_path / "q.csv"
    metrics.save_quality_csv(path, reports)
    lines = path.read_text().splitlines()
    assert lines[0] == "method,mse,psnr_db,one_minus_ssim"
    assert len(lines) == 3
    assert lines[2].startswith("clean,0,inf,")
