"""Block-diagonal covariance of expansion coefficients, per-block
eigenanalysis, Marchenko-Pastur noise modeling, noise-variance estimation
and component selection.

Averaging over all in-plane rotations and reflections decouples the image
covariance across angular orders: C = direct_sum_k C^(k) with
C^(k)_{qq'} = (1/n) sum_i Re{ a^i_{k,q} conj(a^i_{k,q'}) }.  Pure white
pixel noise makes each block (2n or n samples of p_k real degrees of
freedom) a white Wishart matrix, so its eigenvalues follow the
Marchenko-Pastur law with aspect ratio gamma_0 = p_0/n, gamma_k = p_k/(2n);
that law drives both the noise-variance estimator and the component
selection threshold.
"""

import math
import struct

import numpy as np

from . import expansion

# 99.9% quantile of the Tracy-Widom beta=1 distribution; the finite-sample
# allowance added to the asymptotic bulk edge when testing eigenvalues
_TW_QUANTILE = 3.27


class BlockCovariance:
    """Per-angular-order real covariance blocks of a coefficient stack."""

    def __init__(self, blocks, n):
        self.blocks = dict(blocks)
        self.n = int(n)

    @property
    def ks(self):
        return sorted(self.blocks)


class SpectralModel:
    """Eigenstructure of the block covariance plus the fitted noise model.

    eigvals[k] descending, eigvecs[k] orthonormal columns, gamma[k] the
    Wishart aspect ratio, selected[k] the retained count, mean_a0 the k=0
    coefficient mean removed before covariance estimation (reinserted by
    the Wiener filter).
    """

    def __init__(self, L, n, eigvals, eigvecs, gamma,
                 noise_variance=None, selected=None, mean_a0=None):
        self.L = int(L)
        self.n = int(n)
        self.eigvals = eigvals
        self.eigvecs = eigvecs
        self.gamma = gamma
        self.noise_variance = noise_variance
        self.selected = selected
        self.mean_a0 = mean_a0

    @property
    def ks(self):
        return sorted(self.eigvals)

    def pooled(self, include_k0=False):
        """All block eigenvalues and matching gammas as flat arrays."""
        lams, gams, korder = [], [], []
        for k in self.ks:
            if k == 0 and not include_k0:
                continue
            lams.append(self.eigvals[k])
            gams.append(np.full(self.eigvals[k].size, self.gamma[k]))
            korder.append(np.full(self.eigvals[k].size, k))
        return (np.concatenate(lams), np.concatenate(gams),
                np.concatenate(korder).astype(int))

    def total_selected(self):
        return sum(self.selected.values())

    def count_with_negatives(self):
        """Selected eigenimages counting +-k pairs separately."""
        return sum(c if k == 0 else 2 * c for k, c in self.selected.items())


def build_blocks(coeffs, center=False):
    """Second-moment blocks C^(k) of a (centered) coefficient stack.

    The pipeline centers via expansion.subtract_mean before calling this;
    center=True is a convenience that does it here.
    """
    if coeffs.n == 0:
        raise ValueError("empty coefficient stack")
    if center:
        coeffs, _ = expansion.subtract_mean(coeffs)
    n = coeffs.n
    blocks = {}
    for k in coeffs.basis.ks:
        a = coeffs.block(k)
        c = (a.conj().T @ a).real / n
        blocks[k] = 0.5 * (c + c.T)
    return BlockCovariance(blocks, n)


def gammas_for(basis, n):
    """Wishart aspect ratios: the k=0 coefficients are real (n samples of
    p_0 reals), k>0 are complex (2n real samples per radial vector)."""
    g = {}
    for k in basis.ks:
        g[k] = basis.p[k] / n if k == 0 else basis.p[k] / (2.0 * n)
    return g


def eig_blocks(cov, basis):
    """Eigendecompose every block; descending order, deterministic signs."""
    eigvals, eigvecs = {}, {}
    for k in cov.ks:
        try:
            vals, vecs = np.linalg.eigh(cov.blocks[k])
        except np.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError(
                f"eigendecomposition failed for block k={k}: {err}"
            )
        vals = vals[::-1]
        vecs = vecs[:, ::-1]
        # sign convention: largest-magnitude entry of each vector positive
        idx = np.argmax(np.abs(vecs), axis=0)
        signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
        signs[signs == 0] = 1.0
        eigvals[k] = vals
        eigvecs[k] = vecs * signs
    return SpectralModel(basis.L, cov.n, eigvals, eigvecs,
                         gammas_for(basis, cov.n))


def mp_edges(gamma, sigma2):
    """Support endpoints of the Marchenko-Pastur law."""
    return (sigma2 * (1 - math.sqrt(gamma)) ** 2,
            sigma2 * (1 + math.sqrt(gamma)) ** 2)


def mp_pdf(x, gamma, sigma2=1.0):
    """Marchenko-Pastur density sqrt((b-x)(x-a)) / (2 pi sigma^2 gamma x)."""
    if gamma <= 0 or sigma2 <= 0:
        raise ValueError("gamma and sigma2 must be positive")
    x = np.asarray(x, dtype=float)
    a, b = mp_edges(gamma, sigma2)
    out = np.zeros_like(x)
    inside = (x > a) & (x < b)
    xi = x[inside]
    out[inside] = np.sqrt((b - xi) * (xi - a)) / (2 * math.pi * sigma2 * gamma * xi)
    return out if out.ndim else float(out)


def _mp_cont_table(gamma, sigma2):
    """Abscissae and normalized cumulative mass of the continuous MP part.

    The substitution x = a + (b-a) sin^2(t) removes both square-root
    endpoint singularities, so a plain trapezoid rule converges fast.
    """
    a, b = mp_edges(gamma, sigma2)
    t = np.linspace(0.0, 0.5 * math.pi, 2001)
    u = a + (b - a) * np.sin(t) ** 2
    # pdf(u) * du/dt, finite at both ends
    du = (b - a) * 2 * np.sin(t) * np.cos(t)
    f = mp_pdf(u, gamma, sigma2) * du
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
    cum /= cum[-1]  # normalize (removes ~1e-8 quadrature error; for
    # gamma > 1 this also rescales the 1/gamma continuous mass to 1)
    return u, cum


def mp_cdf(x, gamma, sigma2=1.0):
    """Distribution function of the MP law (gamma <= 1), by quadrature."""
    if gamma <= 0 or gamma > 1 or sigma2 <= 0:
        raise ValueError("need 0 < gamma <= 1 and sigma2 > 0")
    x = np.asarray(x, dtype=float)
    u, cum = _mp_cont_table(gamma, sigma2)
    out = np.interp(x, u, cum, left=0.0, right=1.0)
    return out if out.ndim else float(out)


def mp_quantile(p, gamma, sigma2=1.0):
    """Quantile of the continuous (nonzero) part of the MP law.

    For gamma <= 1 this is the ordinary quantile function; for gamma > 1 it
    is the quantile of the positive sample eigenvalues (the law then also
    carries an atom at zero of mass 1 - 1/gamma, which the positive
    eigenvalues never sample).
    """
    if gamma <= 0 or sigma2 <= 0:
        raise ValueError("gamma and sigma2 must be positive")
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("quantile levels must lie in [0, 1]")
    u, cum = _mp_cont_table(gamma, sigma2)
    out = np.interp(p, cum, u)
    return out if out.ndim else float(out)


def ks_distance(sample, gamma, sigma2=1.0):
    """Kolmogorov-Smirnov distance between a sample and the MP law."""
    s = np.sort(np.asarray(sample, dtype=float))
    n = s.size
    if n == 0:
        raise ValueError("empty sample")
    f = mp_cdf(s, gamma, sigma2)
    up = np.max(np.arange(1, n + 1) / n - f)
    dn = np.max(f - np.arange(0, n) / n)
    return float(max(up, dn))


def estimate_noise_variance(eigvals, gamma, max_iter=50):
    """Iterative bulk estimate of the noise variance from k>0 eigenvalues.

    eigvals/gamma: mappings k -> values as in SpectralModel.  Starts from
    the pooled median, then alternates between excluding eigenvalues above
    the per-block MP edge sigma^2 (1+sqrt(gamma_k))^2 and re-estimating
    sigma^2 as the mean of the remaining bulk (the MP law has mean sigma^2
    regardless of gamma), until the excluded set stabilizes.
    """
    lams, gams = [], []
    for k, vals in eigvals.items():
        if k == 0:
            continue
        lams.append(np.asarray(vals, dtype=float))
        gams.append(np.full(len(vals), gamma[k]))
    if not lams:
        raise ValueError("no k>0 eigenvalues to pool")
    lams = np.concatenate(lams)
    gams = np.concatenate(gams)
    sigma2 = float(np.median(lams))
    if sigma2 <= 0:
        raise ValueError("non-positive pooled median; nothing to estimate")
    excluded = None
    for _ in range(max_iter):
        new_excluded = lams > sigma2 * (1 + np.sqrt(gams)) ** 2
        if excluded is not None and np.array_equal(new_excluded, excluded):
            return sigma2
        excluded = new_excluded
        bulk = lams[~excluded]
        if bulk.size == 0:
            raise RuntimeError(
                f"noise estimate excluded everything (last iterate {sigma2:.4g})"
            )
        sigma2 = float(np.mean(bulk))
    raise RuntimeError(
        f"noise-variance estimate did not stabilize (last iterate {sigma2:.4g})"
    )


def selection_threshold(gamma, sigma2, nu, rule="mp"):
    """Eigenvalue threshold above which a component counts as signal.

    rule="mp": the MP bulk edge plus a Tracy-Widom finite-sample allowance
        sigma^2 [ (1+sqrt(g))^2 + s nu^{-2/3} (1+sqrt(g))(1+1/sqrt(g))^{1/3} ]
    with nu the real-sample count backing the block (n for k=0, 2n else).
    The bare asymptotic edge misclassifies a handful of bulk eigenvalues at
    practical n, which the allowance absorbs (s = TW 99.9% quantile).
    rule="edge": the bare asymptotic edge sigma^2 (1+sqrt(g))^2.
    rule="paper": sigma^2 (1+sqrt(1+g^2))^2.
    """
    rg = math.sqrt(gamma)
    if rule == "mp":
        allowance = _TW_QUANTILE * nu ** (-2.0 / 3.0) * (1 + rg) * (1 + 1.0 / rg) ** (1.0 / 3.0)
        return sigma2 * ((1 + rg) ** 2 + allowance)
    if rule == "edge":
        return sigma2 * (1 + rg) ** 2
    if rule == "paper":
        return sigma2 * (1 + math.sqrt(1 + gamma * gamma)) ** 2
    raise ValueError(f"unknown threshold rule {rule!r}")


def select_components(model, sigma2, rule="mp"):
    """Retained component count per block: eigenvalues above the threshold.

    Eigenvalues are sorted, so the count is the prefix above threshold.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    selected = {}
    for k in model.ks:
        nu = model.n if k == 0 else 2 * model.n
        if sigma2 == 0:
            selected[k] = int(np.sum(model.eigvals[k] > 0))
            continue
        thr = selection_threshold(model.gamma[k], sigma2, nu, rule)
        selected[k] = int(np.sum(model.eigvals[k] > thr))
    return selected


def fit_model(coeffs, rule="mp"):
    """Full spectral fit: center, blocks, eigenanalysis, noise, selection."""
    centered, mean = expansion.subtract_mean(coeffs)
    cov = build_blocks(centered)
    model = eig_blocks(cov, coeffs.basis)
    model.mean_a0 = mean.block(0)[0].copy()
    model.noise_variance = estimate_noise_variance(model.eigvals, model.gamma)
    model.selected = select_components(model, model.noise_variance, rule)
    return model


def pooled_noise_eigenvalues(coeffs, k, n_batches):
    """Eigenvalues of per-batch covariance blocks, pooled over batches.

    A single covariance gives only p_k eigenvalues, far too few to compare
    against a continuous law; splitting the stack into batches draws many
    independent Wishart spectra at the batch aspect ratio.  Returns the
    pooled eigenvalues and the batch gamma.
    """
    n = coeffs.n
    if n_batches < 1 or n_batches > n:
        raise ValueError("n_batches must be in [1, n]")
    nb = n // n_batches
    a = coeffs.block(k)
    lams = []
    for j in range(n_batches):
        chunk = a[j * nb:(j + 1) * nb]
        c = (chunk.conj().T @ chunk).real / nb
        lams.append(np.linalg.eigvalsh(0.5 * (c + c.T)))
    gamma = a.shape[1] / nb if k == 0 else a.shape[1] / (2.0 * nb)
    return np.concatenate(lams), gamma


_MODEL_MAGIC = b"FBS1"


def save_model(path, model):
    """Write a SpectralModel in FBS1 format.

    Layout: magic, L, n, block count; per block (k, p_k, eigenvalues,
    eigenvectors row-major); noise variance; selected counts; k=0 mean.
    """
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<III", model.L, model.n, len(model.eigvals)))
        for k in model.ks:
            p = model.eigvals[k].size
            fh.write(struct.pack("<II", k, p))
            fh.write(model.eigvals[k].astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(model.eigvecs[k]).astype("<f8").tobytes())
        fh.write(struct.pack("<d", float(model.noise_variance)))
        for k in model.ks:
            fh.write(struct.pack("<I", model.selected[k]))
        mean = model.mean_a0 if model.mean_a0 is not None else \
            np.zeros(model.eigvals[0].size, dtype=complex)
        fh.write(struct.pack("<I", mean.size))
        inter = np.empty(2 * mean.size)
        inter[0::2] = mean.real
        inter[1::2] = mean.imag
        fh.write(inter.astype("<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MODEL_MAGIC:
            raise ValueError(f"not a spectral model file (magic {magic!r})")
        L, n, nblocks = struct.unpack("<III", fh.read(12))
        eigvals, eigvecs = {}, {}
        for _ in range(nblocks):
            k, p = struct.unpack("<II", fh.read(8))
            eigvals[k] = np.frombuffer(fh.read(8 * p), dtype="<f8").copy()
            eigvecs[k] = np.frombuffer(fh.read(8 * p * p),
                                       dtype="<f8").reshape(p, p).copy()
        (sigma2,) = struct.unpack("<d", fh.read(8))
        selected = {}
        for k in sorted(eigvals):
            (selected[k],) = struct.unpack("<I", fh.read(4))
        (msize,) = struct.unpack("<I", fh.read(4))
        raw = np.frombuffer(fh.read(16 * msize), dtype="<f8")
        mean_a0 = raw[0::2] + 1j * raw[1::2]
    gamma = {k: (eigvals[k].size / n if k == 0 else eigvals[k].size / (2.0 * n))
             for k in eigvals}
    return SpectralModel(L, n, eigvals, eigvecs, gamma,
                         noise_variance=sigma2, selected=selected,
                         mean_a0=mean_a0)


def save_eigenvalue_csv(path, model):
    """Flat (k, l, lambda) CSV of the block spectra, selected flag included."""
    with open(path, "w") as fh:
        fh.write("k,l,eigenvalue,selected\n")
        for k in model.ks:
            nsel = model.selected[k] if model.selected else 0
            for l, lam in enumerate(model.eigvals[k], start=1):
                fh.write(f"{k},{l},{lam:.12g},{int(l <= nsel)}\n")
