"""Matplotlib figures rendered next to the delimited outputs.

Every helper writes one PNG to the given path and closes the figure, so the
CLI can run headless.  The Agg backend is forced before pyplot is imported.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import spectrum as spectrum_mod  # noqa: E402

_DPI = 120


def gram_spectrum_figure(path, eigvals):
    """Sorted spectrum of the scaled inverse Gram with the unit line."""
    eigvals = np.sort(np.asarray(eigvals, dtype=float))[::-1]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, eigvals.size + 1), eigvals, ".", ms=3)
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.axhline(0.95, color="r", lw=0.6, ls=":")
    ax.axhline(1.05, color="r", lw=0.6, ls=":")
    ax.set_xlabel("component index")
    ax.set_ylabel("eigenvalue")
    ax.set_title("Gram spectrum of the weighted design")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def block_spectrum_figure(path, model):
    """Eigenvalues of every covariance block with the selection threshold."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for k in model.ks:
        lam = model.eigvals[k]
        nsel = model.selected[k] if model.selected else 0
        ax.plot(np.full(lam.size, k), lam, ".", color="C0", ms=3)
        if nsel:
            ax.plot(np.full(nsel, k), lam[:nsel], "o", color="C1", ms=4,
                    mfc="none")
    if model.noise_variance is not None:
        ks = np.asarray(model.ks, dtype=float)
        thr = [spectrum_mod.selection_threshold(
            model.gamma[k], model.noise_variance,
            model.n if k == 0 else 2 * model.n) for k in model.ks]
        ax.plot(ks, thr, "-", color="C3", lw=1, label="selection threshold")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_yscale("log")
    ax.set_xlabel("angular order k")
    ax.set_ylabel("eigenvalue")
    ax.set_title("block spectra (circled = selected)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def mp_histogram_figure(path, samples, title="noise eigenvalues vs MP law"):
    """Histogram + Marchenko-Pastur overlay, one panel per angular order.

    samples: mapping k -> (eigenvalues, gamma, sigma2).
    """
    ks = sorted(samples)
    fig, axes = plt.subplots(1, len(ks), figsize=(4 * len(ks), 3.2),
                             squeeze=False)
    for ax, k in zip(axes[0], ks):
        lam, gamma, sigma2 = samples[k]
        lam = np.asarray(lam, dtype=float)
        ax.hist(lam, bins=40, density=True, color="C0", alpha=0.6)
        a, b = spectrum_mod.mp_edges(gamma, sigma2)
        x = np.linspace(max(a, 1e-12), b, 400)
        ax.plot(x, spectrum_mod.mp_pdf(x, gamma, sigma2), "C3-", lw=1.5)
        ax.set_title(f"k={k}, gamma={gamma:.3g}")
        ax.set_xlabel("eigenvalue")
    axes[0][0].set_ylabel("density")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def gallery_figure(path, images, titles=None, ncols=8):
    """Grid of images on a shared symmetric color scale."""
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None]
    n = images.shape[0]
    ncols = max(1, min(ncols, n))
    nrows = (n + ncols - 1) // ncols
    vmax = np.max(np.abs(images)) or 1.0
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(1.6 * ncols, 1.7 * nrows),
                             squeeze=False)
    for i in range(nrows * ncols):
        ax = axes[i // ncols][i % ncols]
        ax.axis("off")
        if i < n:
            ax.imshow(images[i], cmap="gray", vmin=-vmax, vmax=vmax)
            if titles is not None:
                ax.set_title(str(titles[i]), fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def benchmark_figure(path, rows):
    """Wall time per method over L; rows = (method, L, seconds)."""
    methods = sorted({r[0] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in methods:
        pts = sorted((r[1], r[2]) for r in rows if r[0] == m)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=m)
    ax.set_yscale("log")
    ax.set_xlabel("bandlimit L")
    ax.set_ylabel("wall time (s)")
    ax.set_title("denoising benchmark")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
