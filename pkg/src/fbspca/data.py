"""Synthetic image stacks: phantom generation, noise injection at a target
SNR, and the FBI1 binary stack format.

Phantoms are sums of anisotropic Gaussian blobs confined to radius 0.9.
Each emitted image picks one of a few base classes, a uniform random
in-plane rotation and a fair-coin reflection; the rotation is applied in
coefficient space (expand, steer, reconstruct), so rotated copies live
exactly in the truncated basis and rotation is exact rather than an
interpolation artifact.

SNR is defined as disk-masked signal variance over noise variance.
"""

import struct

import numpy as np

from . import basis as basis_mod
from . import expansion


class ImageStack:
    """A stack of real images plus the metadata needed to reproduce it."""

    def __init__(self, pixels, L, metadata=None):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[1] != pixels.shape[2]:
            raise ValueError(f"expected (n, side, side) pixels, got {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("stack contains non-finite pixels")
        self.pixels = pixels
        self.L = int(L)
        self.metadata = dict(metadata or {})

    @property
    def n(self):
        return self.pixels.shape[0]

    @property
    def side(self):
        return self.pixels.shape[1]


def _blob_classes(grid, rng, class_count):
    """Base images: 5-15 anisotropic Gaussian blobs inside radius 0.9."""
    x = grid.x
    y = grid.y
    out = np.zeros((class_count, grid.side, grid.side))
    for c in range(class_count):
        n_blobs = rng.integers(5, 16)
        for _ in range(n_blobs):
            rho = 0.9 * np.sqrt(rng.uniform(0.0, 0.5))
            ang = rng.uniform(0, 2 * np.pi)
            cx, cy = rho * np.cos(ang), rho * np.sin(ang)
            sx = rng.uniform(0.06, 0.22)
            sy = rng.uniform(0.06, 0.22)
            tilt = rng.uniform(0, np.pi)
            amp = rng.uniform(0.4, 1.0) * rng.choice([-1.0, 1.0])
            ct, st = np.cos(tilt), np.sin(tilt)
            u = (x - cx) * ct + (y - cy) * st
            v = -(x - cx) * st + (y - cy) * ct
            out[c] += amp * np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
        # hard support: the blobs decay fast but the model wants exact zero
        # outside the disk
        out[c][~grid.mask] = 0.0
    return out


def generate_phantoms(n, L, seed, class_count=4, rotations=True):
    """Deterministic stack of rotated/reflected blob phantoms.

    Rotation/reflection are exact in the truncated basis by construction;
    the base classes are projected into the basis first for the same
    reason.
    """
    if n < 1 or class_count < 1:
        raise ValueError("need n >= 1 and class_count >= 1")
    rng = np.random.default_rng(seed)
    grid = basis_mod.GridSpec(L)
    b = basis_mod.truncate_basis(L)
    design = basis_mod.build_design_matrix(grid, b)
    ex = expansion.Expander(design)
    bases = ex.expand(_blob_classes(grid, rng, class_count))
    labels = rng.integers(0, class_count, size=n)
    coeffs = expansion.Coeffs(b, bases.matrix[labels])
    if rotations:
        angles = rng.uniform(0, 2 * np.pi, size=n)
        coeffs = expansion.steer(coeffs, angles)
        flips = rng.random(n) < 0.5
        coeffs = expansion.reflect(coeffs, which=flips)
    pixels = expansion.reconstruct(coeffs, design)
    meta = {"L": L, "seed": seed, "class_count": class_count,
            "kind": "phantom", "rotations": int(bool(rotations))}
    return ImageStack(pixels, L, meta)


def add_noise(stack, snr, seed):
    """Additive white Gaussian noise at a target disk-masked SNR.

    sigma^2 = (mean per-image signal variance over the mask) / snr; the
    realized sigma^2 is recorded in the metadata.  Noise covers the whole
    frame, matching detector noise, while SNR is budgeted on the disk.
    """
    if snr <= 0:
        raise ValueError("snr must be positive")
    grid = basis_mod.GridSpec(stack.L, side=stack.side)
    masked = stack.pixels[:, grid.mask]
    signal_var = float(np.mean(np.var(masked, axis=1)))
    sigma2 = signal_var / snr
    rng = np.random.default_rng(seed)
    noisy = stack.pixels + np.sqrt(sigma2) * rng.standard_normal(stack.pixels.shape)
    meta = dict(stack.metadata)
    meta.update({"snr": snr, "noise_seed": seed, "sigma2": sigma2,
                 "signal_var": signal_var})
    return ImageStack(noisy, stack.L, meta)


_STACK_MAGIC = b"FBI1"


def save_stack(path, stack):
    """FBI1 format: magic, (n, side, L) header, float32 pixels row-major."""
    with open(path, "wb") as fh:
        fh.write(_STACK_MAGIC)
        fh.write(struct.pack("<III", stack.n, stack.side, stack.L))
        fh.write(stack.pixels.astype("<f4").tobytes())
    sidecar = str(path) + ".meta"
    with open(sidecar, "w") as fh:
        for key in sorted(stack.metadata):
            fh.write(f"{key}={stack.metadata[key]}\n")


def load_stack(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _STACK_MAGIC:
            raise ValueError(f"not an image stack file (magic {magic!r})")
        n, side, L = struct.unpack("<III", fh.read(12))
        raw = fh.read(n * side * side * 4)
        if len(raw) != n * side * side * 4:
            raise ValueError("truncated stack file")
        pixels = np.frombuffer(raw, dtype="<f4")
        pixels = pixels.reshape(n, side, side).astype(np.float64)
    meta = {}
    try:
        with open(str(path) + ".meta") as fh:
            for line in fh:
                if "=" in line:
                    key, val = line.rstrip("\n").split("=", 1)
                    meta[key] = _parse_meta_value(val)
    except FileNotFoundError:
        pass
    return ImageStack(pixels, L, meta)


def _parse_meta_value(val):
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            continue
    return val


def save_grayscale_png(path, image):
    """16-bit grayscale export of one image, for visual inspection.

    The full value range maps linearly onto [0, 65535]; a constant image
    maps to mid-gray.
    """
    from PIL import Image

    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"expected a single 2D image, got shape {image.shape}")
    lo, hi = float(image.min()), float(image.max())
    if hi > lo:
        scaled = (image - lo) / (hi - lo)
    else:
        scaled = np.full_like(image, 0.5)
    Image.fromarray(np.round(scaled * 65535.0).astype(np.uint16)).save(path)
