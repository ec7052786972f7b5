import numpy as np
import pytest
from skimage.metrics import structural_similarity

from rainhaze.metrics import C1, gaussian_window, psnr, ssim
from rainhaze.scene_io import ClearImage


def const(v, h=16, w=16):
    return ClearImage(np.full((h, w, 3), v))


def test_psnr_examples():
    assert psnr(const(0.0), const(0.5)) == pytest.approx(6.02059991327962390, abs=1e-12)
    assert psnr(const(0.0), const(1.0)) == 0.0
    assert psnr(const(0.3), const(0.3)) == 100.0


def test_psnr_tiny_error_still_capped():
    a = np.zeros((4, 4, 3))
    b = a.copy()
    b[0, 0, 0] = 1e-9
    assert psnr(a, b) == 100.0


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(const(0, 4, 4), const(0, 4, 5))


def test_symmetry(rng):
    a = ClearImage(rng.uniform(size=(20, 24, 3)))
    b = ClearImage(rng.uniform(size=(20, 24, 3)))
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == ssim(b, a)


def test_ssim_identity(rng):
    a = ClearImage(rng.uniform(size=(20, 24, 3)))
    assert ssim(a, a) == 1.0


def test_ssim_anticorrelated_binary(rng):
    a = (rng.uniform(size=(32, 32, 3)) < 0.5).astype(float)
    a[..., 1] = a[..., 2] = a[..., 0]
    assert ssim(a, 1 - a) < -0.5


def test_ssim_constant_shift_closed_form(rng):
    x = np.clip(rng.uniform(0.2, 0.6, (11, 11, 3)), 0, 1)
    y = x + 0.1
    g = gaussian_window()
    w = np.outer(g, g)
    mu = float((w * x.mean(axis=2)).sum())
    expected = (2 * mu * (mu + 0.1) + C1) / (mu ** 2 + (mu + 0.1) ** 2 + C1)
    assert ssim(x, y) == pytest.approx(expected, abs=1e-12)


def test_ssim_matches_scikit_image(rng):
    a = rng.uniform(size=(40, 50))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    ref = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False)
    # scikit-image averages over its own cropped region; compare the per-pixel map instead
    _, full = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, full=True)
    assert ssim(a, b) == pytest.approx(full[5:-5, 5:-5].mean(), abs=1e-10)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-2)


def test_ssim_too_small():
    with pytest.raises(ValueError, match="at least"):
        ssim(const(0.5, 10, 40), const(0.5, 10, 40))


def test_psnr_decreases_with_noise(rng):
    a = rng.uniform(0.3, 0.7, (32, 32, 3))
    noise = rng.normal(size=a.shape)
    values = [psnr(a, a + s * noise) for s in (0.01, 0.02, 0.05, 0.1)]
    assert all(x > y for x, y in zip(values, values[1:]))
