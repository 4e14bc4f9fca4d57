"""Image-quality metrics over the disk mask: MSE, PSNR and SSIM.

All three see only masked pixels (or windows touching the mask), matching
the support both denoising methods operate on.  SSIM uses a uniform 8x8
sliding window with the standard constants K1=0.01, K2=0.03 and the
dynamic range taken from the clean stack; window statistics come from
integral images so whole stacks are processed without materializing the
window tensor.
"""

import math

import numpy as np


def _pixels(stack):
    return stack.pixels if hasattr(stack, "pixels") else np.asarray(stack, dtype=float)


def _check_pair(clean, test):
    clean = _pixels(clean)
    test = _pixels(test)
    if clean.ndim == 2:
        clean = clean[None]
    if test.ndim == 2:
        test = test[None]
    if clean.shape != test.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {test.shape}")
    return clean, test


def mse(clean, test, grid):
    """Mean squared error over images and masked pixels."""
    clean, test = _check_pair(clean, test)
    d = (clean - test)[:, grid.mask]
    return float(np.mean(d * d))


def mse_per_image(clean, test, grid):
    clean, test = _check_pair(clean, test)
    d = (clean - test)[:, grid.mask]
    return np.mean(d * d, axis=1)


def psnr(clean, test, grid):
    """Peak signal-to-noise ratio in dB; peak is max |clean| over the stack."""
    clean, test = _check_pair(clean, test)
    err = mse(clean, test, grid)
    if err == 0.0:
        return math.inf
    peak = float(np.max(np.abs(clean[:, grid.mask])))
    return 10.0 * math.log10(peak * peak / err)


def _window_sums(x, w):
    """Sliding-window sums of an (n, s, s) stack via integral images."""
    c = np.cumsum(np.cumsum(x, axis=1), axis=2)
    c = np.pad(c, ((0, 0), (1, 0), (1, 0)))
    return (c[:, w:, w:] - c[:, :-w, w:] - c[:, w:, :-w] + c[:, :-w, :-w])


def ssim(clean, test, grid, window=8, k1=0.01, k2=0.03, dynamic_range=None):
    """Mean structural similarity over windows intersecting the disk mask.

    dynamic_range defaults to max - min of the masked clean stack; passing
    it explicitly makes the metric symmetric in its two arguments.
    """
    return float(np.mean(
        ssim_per_image(clean, test, grid, window, k1, k2, dynamic_range)))


def ssim_per_image(clean, test, grid, window=8, k1=0.01, k2=0.03,
                   dynamic_range=None):
    clean, test = _check_pair(clean, test)
    w = window
    if clean.shape[1] < w:
        raise ValueError(f"images smaller than the {w}x{w} window")
    area = float(w * w)
    if dynamic_range is None:
        masked = clean[:, grid.mask]
        dyn = float(np.max(masked) - np.min(masked))
    else:
        dyn = float(dynamic_range)
    if dyn == 0.0:
        dyn = 1.0
    c1 = (k1 * dyn) ** 2
    c2 = (k2 * dyn) ** 2
    mu_x = _window_sums(clean, w) / area
    mu_y = _window_sums(test, w) / area
    sxx = _window_sums(clean * clean, w) / area - mu_x * mu_x
    syy = _window_sums(test * test, w) / area - mu_y * mu_y
    sxy = _window_sums(clean * test, w) / area - mu_x * mu_y
    val = ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)
           / ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)))
    keep = _window_sums(grid.mask[None].astype(float), w)[0] > 0
    return np.mean(val[:, keep], axis=1)


class QualityReport:
    """MSE / PSNR / SSIM of one method against the clean stack."""

    def __init__(self, method, clean, test, grid):
        self.method = method
        self.per_image_mse = mse_per_image(clean, test, grid)
        self.per_image_ssim = ssim_per_image(clean, test, grid)
        self.mse = float(np.mean(self.per_image_mse))
        self.psnr = psnr(clean, test, grid)
        self.ssim = float(np.mean(self.per_image_ssim))

    def row(self):
        return (f"{self.method},{self.mse:.10g},{self.psnr:.6g},"
                f"{1.0 - self.ssim:.10g}")


def save_quality_csv(path, reports):
    """Method-comparison CSV: method, mse, psnr_db, one_minus_ssim."""
    with open(path, "w") as fh:
        fh.write("method,mse,psnr_db,one_minus_ssim\n")
        for rep in reports:
            fh.write(rep.row() + "\n")
