"""Fourier-Bessel steerable PCA for stacks of disk-supported images.

The pipeline: expand images in a truncated Fourier-Bessel basis
(:mod:`fbspca.basis`, :mod:`fbspca.expansion`), estimate the block-diagonal
coefficient covariance and its eigenstructure with Marchenko-Pastur rank
selection (:mod:`fbspca.spectrum`), then synthesize eigenimages and apply
Wiener shrinkage (:mod:`fbspca.denoise`).  :mod:`fbspca.data`,
:mod:`fbspca.metrics` and :mod:`fbspca.plots` supply phantoms, quality
metrics and figures; ``fbspca.cli`` is the command-line front end.
"""

from .basis import (
    BasisIndexSet,
    DesignMatrix,
    GridSpec,
    build_design_matrix,
    gram_matrix,
    gram_spectrum,
    reflect_image,
    rotate90,
    truncate_basis,
)
from .bessel import bessel_j, bessel_roots
from .data import (
    ImageStack,
    add_noise,
    generate_phantoms,
    load_stack,
    save_grayscale_png,
    save_stack,
)
from .denoise import (
    EigenimageSet,
    PixelPCA,
    signal_eigenvalue,
    synthesize_eigenimages,
    traditional_pca,
    wiener_denoise,
)
from .expansion import (
    Coeffs,
    Expander,
    energy,
    expand,
    load_coeffs,
    reconstruct,
    reflect,
    rotational_mean,
    save_coeffs,
    steer,
    subtract_mean,
)
from .metrics import QualityReport, mse, psnr, save_quality_csv, ssim
from .spectrum import (
    BlockCovariance,
    SpectralModel,
    build_blocks,
    eig_blocks,
    estimate_noise_variance,
    fit_model,
    ks_distance,
    load_model,
    mp_cdf,
    mp_edges,
    mp_pdf,
    mp_quantile,
    pooled_noise_eigenvalues,
    save_model,
    select_components,
    selection_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "BasisIndexSet",
    "BlockCovariance",
    "Coeffs",
    "DesignMatrix",
    "EigenimageSet",
    "Expander",
    "GridSpec",
    "ImageStack",
    "PixelPCA",
    "QualityReport",
    "SpectralModel",
    "add_noise",
    "bessel_j",
    "bessel_roots",
    "build_blocks",
    "build_design_matrix",
    "eig_blocks",
    "energy",
    "estimate_noise_variance",
    "expand",
    "fit_model",
    "generate_phantoms",
    "gram_matrix",
    "gram_spectrum",
    "ks_distance",
    "load_coeffs",
    "load_model",
    "load_stack",
    "mp_cdf",
    "mp_edges",
    "mp_pdf",
    "mp_quantile",
    "mse",
    "pooled_noise_eigenvalues",
    "psnr",
    "reconstruct",
    "reflect",
    "reflect_image",
    "rotate90",
    "rotational_mean",
    "save_coeffs",
    "save_grayscale_png",
    "save_model",
    "save_quality_csv",
    "save_stack",
    "select_components",
    "selection_threshold",
    "signal_eigenvalue",
    "ssim",
    "steer",
    "subtract_mean",
    "synthesize_eigenimages",
    "traditional_pca",
    "truncate_basis",
    "wiener_denoise",
    "__version__",
]
