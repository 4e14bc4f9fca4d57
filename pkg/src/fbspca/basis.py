"""Truncated Fourier-Bessel basis and its design matrix on a pixel grid.

The basis functions on the unit disk are

    psi_kq(r, theta) = N_kq * J_k(R_kq * r) * exp(i*k*theta),   r <= 1
                     = 0,                                        r > 1

with R_kq the q-th positive root of J_k and N_kq = 1/(sqrt(pi)*|J_{k+1}(R_kq)|),
so that each psi_kq has unit L2 norm on the disk.  Images live on a Cartesian
grid with pixel spacing 1/L; pixels whose centers fall inside the closed unit
disk form the support mask.

Conventions used throughout the package:

- Only k >= 0 columns are stored.  For real images the negative orders follow
  from a_{-k,q} = (-1)**k * conj(a_{k,q}), so materializing them would double
  memory for no information.
- The default grid side is odd (2L+1) with integer pixel centers (i-L)/L; even
  sides get half-integer centers.  Both masks are exactly 4-fold symmetric, so
  90-degree rotations and axis reflections are exact pixel permutations.
- Quadrature weight: sums over masked pixels approximate disk integrals with
  the equal-weight rule  integral ~ (pi/n_live) * sum,  where n_live counts
  pixels strictly inside the disk (centers at r == 1 evaluate to zero in every
  basis function and carry no information).  This weight reproduces the disk
  area exactly and keeps the Gram spectrum centered at 1.
"""

import functools
import math
import struct

import numpy as np

from . import bessel


class GridSpec:
    """Cartesian sampling geometry: side, pixel centers, unit-disk mask.

    Parameters
    ----------
    L : int
        Bandlimit / resolution parameter; pixel spacing is 1/L.
    side : int, optional
        Pixels per axis.  Defaults to 2L+1 (odd, center pixel at the
        origin).  Even values (e.g. 2L) use half-integer centers.  Must be
        at least 2L so the mask contains the full disk.
    """

    def __init__(self, L, side=None):
        if L < 2:
            raise ValueError("L must be at least 2")
        if side is None:
            side = 2 * L + 1
        if side < 2 * L:
            raise ValueError("side must be at least 2L to cover the unit disk")
        self.L = int(L)
        self.side = int(side)
        c = (self.side - 1) / 2.0
        coords = (np.arange(self.side) - c) / float(L)
        self.coords = coords
        # rows index y, columns index x; y increases with row index
        self.x = coords[None, :] * np.ones((self.side, 1))
        self.y = coords[:, None] * np.ones((1, self.side))
        self.r = np.hypot(self.x, self.y)
        self.theta = np.arctan2(self.y, self.x)
        self.mask = self.r <= 1.0
        self.n_mask = int(np.count_nonzero(self.mask))
        # pixels exactly on the rim contribute zero in every basis function
        self.n_live = int(np.count_nonzero(self.r < 1.0))
        self.weight = math.pi / self.n_live
        self.r_masked = self.r[self.mask]
        self.theta_masked = self.theta[self.mask]

    @property
    def pixel_coords(self):
        """List of (x, y) centers for the masked pixels, row-major order."""
        return list(zip(self.x[self.mask].tolist(), self.y[self.mask].tolist()))

    def mask_image(self, image):
        """Extract the masked pixels of a (side, side) image as a vector."""
        image = np.asarray(image)
        if image.shape[-2:] != (self.side, self.side):
            raise ValueError(
                f"image shape {image.shape} does not match grid side {self.side}"
            )
        return image[..., self.mask]

    def unmask_vector(self, vec):
        """Scatter masked-pixel vectors back to full images, zero outside."""
        vec = np.asarray(vec)
        out = np.zeros(vec.shape[:-1] + (self.side, self.side), dtype=vec.dtype)
        out[..., self.mask] = vec
        return out


def rotate90(image, times=1):
    """Rotate an image by 90 degrees counterclockwise (in the x, y plane).

    With y increasing along the row index, a counterclockwise quarter turn
    sends pixel value I(x, y) to I'(−y, x), which is an exact permutation of
    the symmetric mask.
    """
    return np.rot90(image, k=-times, axes=(-2, -1))


def reflect_image(image):
    """Mirror an image across the vertical axis (theta -> pi - theta)."""
    return np.asarray(image)[..., ::-1]


class BasisIndexSet:
    """Ordered truncated index set {(k, q)} with roots and normalizations.

    pairs are sorted by ascending k then ascending q; only k >= 0 is listed.
    """

    def __init__(self, L, pairs, roots, norms, rule):
        self.L = int(L)
        self.pairs = list(pairs)
        self.roots = np.asarray(roots, dtype=float)
        self.norms = np.asarray(norms, dtype=float)
        self.rule = rule
        self.p = {}
        for k, _q in self.pairs:
            self.p[k] = self.p.get(k, 0) + 1
        self.ks = sorted(self.p)
        self.slices = {}
        start = 0
        for k in self.ks:
            self.slices[k] = slice(start, start + self.p[k])
            start += self.p[k]
        self.n_pairs = len(self.pairs)
        self.k_max = self.ks[-1] if self.ks else -1

    @property
    def count_with_negatives(self):
        """Total number of basis functions counting +-k separately."""
        return 2 * self.n_pairs - self.p.get(0, 0)

    def root(self, k, q):
        return float(self.roots[self.slices[k]][q - 1])

    def norm(self, k, q):
        return float(self.norms[self.slices[k]][q - 1])


def _roots_first_m(k, m):
    """First m positive roots of J_k (McMahon-guided sweep, extends if short)."""
    x_hi = bessel.mcmahon_guess(k, m) + math.pi
    roots = bessel.bessel_roots(k, x_hi)
    while len(roots) < m:
        x_hi *= 1.3
        roots = bessel.bessel_roots(k, x_hi)
    return roots[:m]


@functools.lru_cache(maxsize=8)
def truncate_basis(L, rule="sampling"):
    """Build the truncated index set for bandlimit L.

    rule="sampling" (default) keeps pairs with k + 2q <= 2L + 1/2, the
    aliasing criterion expressed through the large-argument behavior of the
    roots (R_kq ~ pi*(k + 2q - 1/2)/2 <= pi*L).  rule="exact" keeps pairs
    with R_kq <= pi*L literally.  The sampling form is the default because
    it tracks the nominal 2L^2 budget uniformly in L.

    Results are cached per (L, rule); treat the returned index set as
    immutable.
    """
    if L < 2:
        raise ValueError("L must be at least 2")
    pairs = []
    roots = []
    if rule == "sampling":
        k = 0
        while True:
            q_max = int(math.floor((2 * L + 0.5 - k) / 2.0))
            if q_max < 1:
                break
            rs = _roots_first_m(k, q_max)
            pairs.extend((k, q) for q in range(1, q_max + 1))
            roots.extend(rs)
            k += 1
    elif rule == "exact":
        x_max = math.pi * L
        k = 0
        while True:
            rs = bessel.bessel_roots(k, x_max)
            if not rs:
                break
            pairs.extend((k, q) for q in range(1, len(rs) + 1))
            roots.extend(rs)
            k += 1
    else:
        raise ValueError(f"unknown truncation rule {rule!r}")
    roots = np.asarray(roots, dtype=float)
    ks = np.asarray([k for k, _ in pairs], dtype=int)
    norms = np.empty_like(roots)
    for k in np.unique(ks):
        sel = ks == k
        norms[sel] = 1.0 / (math.sqrt(math.pi) * np.abs(bessel.bessel_j(k + 1, roots[sel])))
    return BasisIndexSet(L, pairs, roots, norms, rule)


class DesignMatrix:
    """Sampled basis evaluations: rows = masked pixels, columns = (k,q) pairs.

    entries holds the raw values N_kq * J_k(R_kq r) * exp(i k theta); the
    quadrature weight is applied by consumers (weighted_entries).
    """

    def __init__(self, grid, basis, entries):
        self.grid = grid
        self.basis = basis
        self.entries = entries

    @property
    def normalization(self):
        return self.basis.norms

    def weighted_entries(self):
        """Entries scaled by sqrt(pi/n_live), so Gram ~ identity."""
        return math.sqrt(self.grid.weight) * self.entries


def build_design_matrix(grid, basis):
    """Evaluate every basis function at the masked pixel centers.

    The radial parts are computed on the distinct radii only; the lattice
    is highly degenerate (eightfold symmetry plus coincidences of i^2+j^2),
    which cuts the Bessel work by roughly that factor.
    """
    if grid.L != basis.L:
        raise ValueError("grid and basis were built for different L")
    r_unique, inv = np.unique(grid.r_masked, return_inverse=True)
    th = grid.theta_masked
    entries = np.empty((grid.n_mask, basis.n_pairs), dtype=complex)
    for k in basis.ks:
        sl = basis.slices[k]
        rk = basis.roots[sl]
        radial = bessel.bessel_j(k, np.outer(r_unique, rk))[inv, :]
        radial *= basis.norms[sl][None, :]
        if k == 0:
            entries[:, sl] = radial
        else:
            entries[:, sl] = radial * np.exp(1j * k * th)[:, None]
    return DesignMatrix(grid, basis, entries)


def gram_matrix(design):
    """Quadrature-weighted Gram (pi/n_live) * Psi^H Psi of the stored columns."""
    psi = design.entries
    return design.grid.weight * (psi.conj().T @ psi)


def gram_spectrum(design):
    """Descending eigenvalues of the inverse of the weighted Gram matrix.

    The basis is orthonormal on the continuous disk, so with the equal-area
    pixel weight the Gram is close to the identity and the spectrum of its
    inverse concentrates near 1 as L grows.  Computed from the singular
    values of the weighted design so rank deficiency is detected at the
    stated 1e-8 singular-value-ratio tolerance (Gram eigenvalues would bury
    an exact zero in roundoff at that scale).
    """
    s = np.linalg.svd(design.weighted_entries(), compute_uv=False)
    ratio = s[-1] / s[0] if s[0] > 0 else 0.0
    if ratio < 1e-8:
        raise np.linalg.LinAlgError(
            f"design matrix is rank deficient: singular-value ratio {ratio:.3e}"
        )
    return np.sort(1.0 / (s * s))[::-1]


def analytic_ft(basis, k, q, k0, phi0=0.0):
    """Continuous 2D Fourier transform of psi_kq at polar frequency (k0, phi0).

    F(psi_kq)(k0, phi0) = 2 sqrt(pi) (-1)^q (-i)^k R_kq
                          * J_k(2 pi k0) / ((2 pi k0)^2 - R_kq^2) * e^{i k phi0}

    The ring 2 pi k0 = R_kq is a removable singularity; there the limit
    sqrt(pi) (-1)^q (-i)^k J_k'(R_kq) e^{i k phi0} is returned.
    """
    rkq = basis.root(k, q)
    x = 2.0 * math.pi * k0
    phase = ((-1) ** q) * ((-1j) ** k) * np.exp(1j * k * phi0)
    denom = x * x - rkq * rkq
    if abs(denom) < 1e-9 * rkq * rkq:
        return complex(math.sqrt(math.pi) * bessel.bessel_jprime(k, rkq) * phase)
    val = 2.0 * math.sqrt(math.pi) * rkq * bessel.bessel_j(k, x) / denom
    return complex(val * phase)


_CACHE_MAGIC = b"FBB1"


def save_basis_cache(path, basis):
    """Write the basis scalars (roots, normalizations) in FBB1 format."""
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<II", basis.L, basis.n_pairs))
        for (k, q), rkq, nkq in zip(basis.pairs, basis.roots, basis.norms):
            fh.write(struct.pack("<IIdd", k, q, rkq, nkq))


def load_basis_cache(path):
    """Read an FBB1 file back into a BasisIndexSet (rule recorded as None)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CACHE_MAGIC:
            raise ValueError(f"not a basis cache file (magic {magic!r})")
        L, n = struct.unpack("<II", fh.read(8))
        pairs = []
        roots = np.empty(n)
        norms = np.empty(n)
        for i in range(n):
            k, q, rkq, nkq = struct.unpack("<IIdd", fh.read(24))
            pairs.append((k, q))
            roots[i] = rkq
            norms[i] = nkq
    return BasisIndexSet(L, pairs, roots, norms, rule=None)
