"""Steerable eigenimages, Wiener-type coefficient shrinkage, and the
traditional pixel-space PCA baseline used for benchmarking.

The Wiener filter acts per angular order: coefficients are projected onto
the selected eigenvectors of C^(k) and each component is attenuated by
w_l = l_hat/(l_hat + sigma^2), where l_hat estimates the clean-signal
eigenvalue from the observed one.  Because the filter only mixes radial
indices within an order, it commutes with steering.
"""

import numpy as np

from . import expansion
from . import spectrum as spectrum_mod


class EigenimageSet:
    """Selected eigenimages V^{kl} as complex pixel maps."""

    def __init__(self, images, L, n, noise_variance):
        self.images = images  # (k, l) -> complex (side, side)
        self.L = L
        self.n = n
        self.noise_variance = noise_variance

    def __len__(self):
        return len(self.images)


def synthesize_eigenimages(model, design):
    """Eigenimages of the selected components: V^{kl} = Psi^(k) h_k^l.

    Columns are the raw sampled basis functions, so each V^{kl} is close to
    unit norm under the quadrature-weighted pixel inner product.
    """
    basis = design.basis
    if sorted(model.eigvals) != list(basis.ks) or any(
            model.eigvals[k].size != basis.p[k] for k in basis.ks):
        raise ValueError("model and design matrix use different index sets")
    if model.selected is None:
        raise ValueError("model has no selected components")
    images = {}
    for k in model.ks:
        nsel = model.selected[k]
        if nsel == 0:
            continue
        cols = design.entries[:, basis.slices[k]] @ model.eigvecs[k][:, :nsel]
        for l in range(nsel):
            images[(k, l + 1)] = design.grid.unmask_vector(cols[:, l])
    return EigenimageSet(images, model.L, model.n, model.noise_variance)


def signal_eigenvalue(lam, gamma, sigma2, debias="linear"):
    """Estimated clean eigenvalue behind an observed sample eigenvalue.

    linear: max(lam - sigma^2 (1 + gamma), 0), the first-order bias
    correction.  spiked: invert the spiked-model forward map
    lam = (l + sigma^2)(1 + gamma sigma^2 / l) for l above the
    detectability threshold sigma^2 sqrt(gamma).
    """
    lam = np.asarray(lam, dtype=float)
    if debias == "linear":
        return np.maximum(lam - sigma2 * (1.0 + gamma), 0.0)
    if debias == "spiked":
        x = lam - sigma2 * (1.0 + gamma)
        disc = np.maximum(x * x - 4.0 * gamma * sigma2 * sigma2, 0.0)
        ell = 0.5 * (x + np.sqrt(disc))
        edge = sigma2 * (1.0 + np.sqrt(gamma)) ** 2
        return np.where(lam > edge, np.maximum(ell, 0.0), 0.0)
    raise ValueError(f"unknown debias mode {debias!r}")


def wiener_denoise(coeffs, model, debias="linear"):
    """Shrink a coefficient stack toward the fitted low-rank model.

    Per block: center (k=0 only), project onto the selected eigenvectors,
    attenuate each component by l_hat/(l_hat + sigma^2), discard the
    unselected directions, and reinsert the k=0 mean.
    """
    if model.selected is None or model.noise_variance is None:
        raise ValueError("model is missing selection or noise variance")
    b = coeffs.basis
    if sorted(model.eigvals) != list(b.ks) or any(
            model.eigvals[k].size != b.p[k] for k in b.ks):
        raise ValueError("model and coefficients use different index sets")
    sigma2 = model.noise_variance
    out = np.zeros_like(coeffs.matrix)
    for k in b.ks:
        nsel = model.selected[k]
        a = coeffs.block(k)
        if k == 0 and model.mean_a0 is not None:
            a = a - model.mean_a0
        if nsel > 0:
            h = model.eigvecs[k][:, :nsel]
            ell = signal_eigenvalue(model.eigvals[k][:nsel], model.gamma[k],
                                    sigma2, debias)
            w = ell / (ell + sigma2) if sigma2 > 0 else np.ones_like(ell)
            filt = ((a @ h) * w) @ h.T
        else:
            filt = 0.0
        sl = b.slices[k]
        out[:, sl] = filt
        if k == 0 and model.mean_a0 is not None:
            out[:, sl] += model.mean_a0
    return expansion.Coeffs(b, out)


class PixelPCA:
    """Classical PCA on disk-masked pixels, with the analogous Wiener step.

    rank=None selects components with the same Marchenko-Pastur rule the
    steerable path uses (the pixel covariance is a single block with
    aspect ratio N_mask/n).
    """

    def __init__(self, images, grid, rank=None, rule="mp"):
        x = grid.mask_image(np.asarray(images, dtype=float))
        n, npix = x.shape
        if n < 2:
            raise ValueError("need at least two images")
        if rank is not None and rank > npix:
            raise ValueError(f"rank {rank} exceeds masked pixel count {npix}")
        self.grid = grid
        self.n = n
        self.mean = x.mean(axis=0)
        xc = x - self.mean
        cov = (xc.T @ xc) / n
        vals, vecs = np.linalg.eigh(cov)
        self.eigvals = vals[::-1].copy()
        self.eigvecs = vecs[:, ::-1].copy()
        self.gamma = npix / n
        self.noise_variance = self._estimate_noise()
        if rank is None:
            thr = spectrum_mod.selection_threshold(
                self.gamma, self.noise_variance, n, rule)
            floor = self.eigvals[0] * npix * np.finfo(float).eps
            rank = int(np.sum(self.eigvals > max(thr, floor)))
        self.rank = rank

    def _estimate_noise(self, max_iter=50):
        # Match the median of the positive eigenvalues to the median of the
        # continuous MP part.  A bulk mean would need the full (possibly
        # rank-deficient) spectrum and is badly biased by edge truncation
        # when gamma > 1; the median barely moves when the top eigenvalues
        # are excluded, so the iteration is stable in both regimes.
        # the covariance has rank <= n-1 after centering; everything past
        # that, and anything at roundoff level, is numerical zero
        npix = self.eigvals.size
        lam = self.eigvals[: min(self.n - 1, npix)]
        lam = lam[lam > self.eigvals[0] * npix * np.finfo(float).eps]
        if lam.size == 0:
            return 0.0
        m_half = spectrum_mod.mp_quantile(0.5, self.gamma)
        sigma2 = float(np.median(lam)) / m_half
        excluded = None
        for _ in range(max_iter):
            new_excluded = lam > sigma2 * (1 + np.sqrt(self.gamma)) ** 2
            if excluded is not None and np.array_equal(new_excluded, excluded):
                return sigma2
            excluded = new_excluded
            bulk = lam[~excluded]
            if bulk.size == 0:
                raise RuntimeError("pixel noise estimate excluded everything")
            sigma2 = float(np.median(bulk)) / m_half
        raise RuntimeError("pixel noise estimate did not stabilize")

    def eigenimages(self):
        """Top-rank eigenvectors as full images."""
        return self.grid.unmask_vector(self.eigvecs[:, :self.rank].T)

    def denoise(self, images):
        """Project onto the retained components and shrink, per image."""
        x = self.grid.mask_image(np.asarray(images, dtype=float))
        xc = x - self.mean
        if self.rank == 0:
            return self.grid.unmask_vector(
                np.broadcast_to(self.mean, x.shape).copy())
        h = self.eigvecs[:, :self.rank]
        ell = signal_eigenvalue(self.eigvals[:self.rank], self.gamma,
                                self.noise_variance)
        w = ell / (ell + self.noise_variance) if self.noise_variance > 0 \
            else np.ones_like(ell)
        filt = ((xc @ h) * w) @ h.T
        return self.grid.unmask_vector(filt + self.mean)


def traditional_pca(images, grid, rank=None, rule="mp"):
    """Eigenvalues, eigenimages and a Wiener denoiser for pixel-space PCA."""
    pca = PixelPCA(images, grid, rank=rank, rule=rule)
    return pca.eigvals, pca.eigenimages(), pca
