"""Acceptance gate: the headline claims of the package, end to end.

Each criterion prints one PASS/FAIL line (straight to the terminal, so it
shows even under pytest's output capture) with the measured numbers, then
asserts.  Budgets are wall-clock seconds on a single worker.
"""

import time

import numpy as np
import pytest

from fbspca import basis as basis_mod
from fbspca import data, denoise, expansion, metrics, spectrum

pytestmark = pytest.mark.acceptance


def _report(capsys, num, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}"
    with capsys.disabled():
        print(line, flush=True)
    return line


def _expand(stack_pixels, L):
    grid = basis_mod.GridSpec(L)
    b = basis_mod.truncate_basis(L)
    design = basis_mod.build_design_matrix(grid, b)
    return grid, b, design, expansion.Expander(design).expand(stack_pixels)


def test_criterion_1_gram_spectrum_near_identity(capsys):
    t0 = time.perf_counter()
    L = 6
    grid = basis_mod.GridSpec(L)
    design = basis_mod.build_design_matrix(grid, basis_mod.truncate_basis(L))
    eigvals = basis_mod.gram_spectrum(design)
    below = int((eigvals < 0.95).sum())
    above = int((eigvals > 1.05).sum())
    elapsed = time.perf_counter() - t0
    ok = 4 <= below <= 8 and above <= 2 and elapsed < 5
    line = _report(capsys, 1, ok, f"gram L={L}: below_0.95={below} (want 4..8), "
                          f"above_1.05={above} (want <=2) [{elapsed:.1f}s]")
    assert ok, line


def test_criterion_2_basis_count_tracks_bandlimit(capsys):
    t0 = time.perf_counter()
    counts = {}
    for L in (6, 12, 24):
        b = basis_mod.truncate_basis(L)
        counts[L] = b.p[0] + 2 * sum(b.p[k] for k in b.ks if k > 0)
    elapsed = time.perf_counter() - t0
    rel = {L: counts[L] / (2 * L * L) for L in counts}
    ok = all(abs(r - 1.0) <= 0.15 for r in rel.values()) and elapsed < 10
    detail = ", ".join(f"L={L}: {counts[L]}/{2 * L * L}={rel[L]:.3f}"
                       for L in sorted(counts))
    line = _report(capsys, 2, ok, f"basis size vs 2L^2 within 15%: {detail} "
                          f"[{elapsed:.1f}s]")
    assert ok, line


def test_criterion_3_noise_blocks_follow_marchenko_pastur(capsys):
    t0 = time.perf_counter()
    L, n, batches = 16, 10_000, 50
    rng = np.random.default_rng(1234)
    grid = basis_mod.GridSpec(L)
    images = rng.standard_normal((n, grid.side, grid.side))
    _, b, _, coeffs = _expand(images, L)
    model = spectrum.fit_model(coeffs)
    sigma2 = model.noise_variance
    dists = {}
    for k in (0, 1, 20):
        lam, gamma = spectrum.pooled_noise_eigenvalues(coeffs, k, batches)
        dists[k] = spectrum.ks_distance(lam, gamma, sigma2)
    elapsed = time.perf_counter() - t0
    ok = all(d < 0.1 for d in dists.values()) and elapsed < 120
    detail = ", ".join(f"k={k}: KS={dists[k]:.3f}" for k in sorted(dists))
    line = _report(capsys, 3, ok, f"MP law on pure noise (n={n}, L={L}, "
                          f"{batches} batches): {detail} (want <0.1) "
                          f"[{elapsed:.1f}s]")
    assert ok, line


def test_criterion_4_blocks_match_rotation_augmented_pca(capsys):
    t0 = time.perf_counter()
    L, n_base, n_rot = 8, 50, 36
    grid = basis_mod.GridSpec(L)
    stack = data.generate_phantoms(n_base, L, seed=77)
    _, b, design, coeffs = _expand(stack.pixels, L)
    # augment: 36 rotations of each image, each with and without reflection
    reps = np.repeat(coeffs.matrix, n_rot, axis=0)
    angles = np.tile(2 * np.pi * np.arange(n_rot) / n_rot, n_base)
    rotated = expansion.steer(expansion.Coeffs(b, reps), angles)
    mirrored = expansion.reflect(rotated)
    aug = expansion.Coeffs(
        b, np.concatenate([rotated.matrix, mirrored.matrix]))
    pixels = expansion.reconstruct(aug, design)

    pca = denoise.PixelPCA(pixels, grid, rank=0)
    model = spectrum.fit_model(aug)
    expanded = np.concatenate(
        [model.eigvals[k] if k == 0 else np.repeat(model.eigvals[k], 2)
         for k in model.ks])
    expanded = np.sort(expanded)[::-1][:20]
    # expansion coefficients are taken against the sqrt(w)-weighted design,
    # whose Gram is near identity, so the two spectra share one scale
    top = pca.eigvals[:20]
    rel_err = float(np.max(np.abs(top - expanded) / expanded))
    elapsed = time.perf_counter() - t0
    ok = rel_err <= 0.05 and elapsed < 120
    line = _report(capsys, 4, ok, f"top-20 eigenvalues, {n_base}x{2 * n_rot} "
                          f"augmented pixel PCA vs block spectrum: "
                          f"max rel err {rel_err:.4f} (want <=0.05) "
                          f"[{elapsed:.1f}s]")
    assert ok, line


def test_criterion_5_steering_matches_pixel_rotation(capsys):
    t0 = time.perf_counter()
    L, n = 12, 20
    stack = data.generate_phantoms(n, L, seed=5)
    _, b, design, coeffs = _expand(stack.pixels, L)
    expander = expansion.Expander(design)
    steered = expansion.steer(coeffs, np.pi / 2)
    rotated = expander.expand(basis_mod.rotate90(stack.pixels))
    err = np.linalg.norm(steered.matrix - rotated.matrix)
    scale = np.linalg.norm(coeffs.matrix)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-8 * scale and elapsed < 30
    line = _report(capsys, 5, ok, f"steer(pi/2) vs expand(rot90) on {n} phantoms "
                          f"at L={L}: rel err {err / scale:.2e} "
                          f"(want <=1e-8) [{elapsed:.1f}s]")
    assert ok, line


def test_criterion_6_rank_selection_calibrated(capsys):
    t0 = time.perf_counter()
    L, n, trials = 16, 10_000, 20
    grid = basis_mod.GridSpec(L)
    b = basis_mod.truncate_basis(L)
    design = basis_mod.build_design_matrix(grid, b)
    expander = expansion.Expander(design)
    spike_col = b.slices[4].start
    false_alarms, detections = [], []
    for t in range(trials):
        rng = np.random.default_rng(9000 + t)
        coeffs = expander.expand(
            rng.standard_normal((n, grid.side, grid.side)))
        pure = spectrum.fit_model(coeffs)
        false_alarms.append(pure.total_selected())
        # plant one rank-1 component of strength 10 sigma^2 in the k=4 block
        coeffs.matrix[:, spike_col] += np.sqrt(10 / 2) * (
            rng.standard_normal(n) + 1j * rng.standard_normal(n))
        spiked = spectrum.fit_model(coeffs)
        detections.append(spiked.selected[4])
    elapsed = time.perf_counter() - t0
    ok = (max(false_alarms) <= 3 and min(detections) >= 1
          and elapsed < 180)
    line = _report(capsys, 6, ok, f"{trials} trials (n={n}, L={L}): pure-noise "
                          f"selections max {max(false_alarms)} (want <=3), "
                          f"10x spike in k=4 detected in "
                          f"{sum(d >= 1 for d in detections)}/{trials} "
                          f"(want all) [{elapsed:.1f}s]")
    assert ok, line


def test_criterion_7_denoising_beats_pixel_pca(capsys):
    t0 = time.perf_counter()
    L, n, snr, trials = 16, 10_000, 1 / 20, 20
    grid = basis_mod.GridSpec(L)
    b = basis_mod.truncate_basis(L)
    design = basis_mod.build_design_matrix(grid, b)
    expander = expansion.Expander(design)
    wins = 0
    mses = []
    for t in range(trials):
        clean = data.generate_phantoms(n, L, seed=100 + t)
        noisy = data.add_noise(clean, snr=snr, seed=200 + t)
        coeffs = expander.expand(noisy.pixels)
        model = spectrum.fit_model(coeffs)
        fb = expansion.reconstruct(denoise.wiener_denoise(coeffs, model),
                                   design)
        pca = denoise.PixelPCA(noisy.pixels, grid)
        pp = pca.denoise(noisy.pixels)
        m = {"fb": metrics.mse(clean.pixels, fb, grid),
             "pca": metrics.mse(clean.pixels, pp, grid),
             "noisy": metrics.mse(clean.pixels, noisy.pixels, grid)}
        mses.append(m)
        wins += m["fb"] < m["pca"] < m["noisy"]
    elapsed = time.perf_counter() - t0
    med = {key: float(np.median([m[key] for m in mses]))
           for key in ("fb", "pca", "noisy")}
    ok = wins >= 0.95 * trials and elapsed < 600
    line = _report(capsys, 7, ok, f"MSE fbspca<pca<noisy at snr {snr:g} "
                          f"(n={n}, L={L}): {wins}/{trials} trials "
                          f"(want >=19); medians fb={med['fb']:.4f} "
                          f"pca={med['pca']:.4f} noisy={med['noisy']:.4f} "
                          f"[{elapsed:.1f}s]")
    assert ok, line


def test_criterion_8_faster_than_pixel_pca(capsys):
    t0 = time.perf_counter()
    n, snr = 1000, 0.2
    times = {}
    for L in (16, 32, 48):
        clean = data.generate_phantoms(n, L, seed=42)
        noisy = data.add_noise(clean, snr=snr, seed=43)
        grid = basis_mod.GridSpec(L)

        basis_mod.truncate_basis.cache_clear()  # charge fb the cold start
        t1 = time.perf_counter()
        _, _, design, coeffs = _expand(noisy.pixels, L)
        model = spectrum.fit_model(coeffs)
        fb = expansion.reconstruct(denoise.wiener_denoise(coeffs, model),
                                   design)
        fb_s = time.perf_counter() - t1

        t1 = time.perf_counter()
        pca = denoise.PixelPCA(noisy.pixels, grid)
        pp = pca.denoise(noisy.pixels)
        pca_s = time.perf_counter() - t1

        sanity = (metrics.mse(clean.pixels, fb, grid)
                  < metrics.mse(clean.pixels, noisy.pixels, grid))
        times[L] = (fb_s, pca_s, sanity)
    ratios = [times[L][0] / times[L][1] for L in (16, 32, 48)]
    elapsed = time.perf_counter() - t0
    ok = (times[32][0] < times[32][1]
          and ratios[0] > ratios[1] > ratios[2]
          and all(v[2] for v in times.values())
          and elapsed < 900)
    detail = ", ".join(f"L={L}: fb={times[L][0]:.2f}s pca={times[L][1]:.2f}s"
                       for L in (16, 32, 48))
    line = _report(capsys, 8, ok, f"wall time (n={n}): {detail}; ratios "
                          f"{ratios[0]:.2f}>{ratios[1]:.2f}>{ratios[2]:.2f} "
                          f"and fb<pca at L=32 [{elapsed:.1f}s]")
    assert ok, line


def test_criterion_9_invariance_suite(capsys):
    t0 = time.perf_counter()
    L, n = 12, 300
    rng = np.random.default_rng(31)
    clean = data.generate_phantoms(n, L, seed=31)
    noisy = data.add_noise(clean, snr=0.5, seed=32)
    grid, b, design, coeffs = _expand(noisy.pixels, L)
    model = spectrum.fit_model(coeffs)
    checks = {}

    # block covariance invariant under steering and reflection
    blocks = spectrum.build_blocks(coeffs)
    alpha = rng.uniform(0, 2 * np.pi, size=n)
    steered = spectrum.build_blocks(expansion.steer(coeffs, alpha))
    mirrored = spectrum.build_blocks(expansion.reflect(coeffs))
    dev = max(
        max(np.max(np.abs(steered.blocks[k] - blocks.blocks[k]))
            / np.linalg.norm(blocks.blocks[k]) for k in b.ks),
        max(np.max(np.abs(mirrored.blocks[k] - blocks.blocks[k]))
            / np.linalg.norm(blocks.blocks[k]) for k in b.ks))
    checks["covariance"] = (dev, 1e-12)

    # denoiser commutes with rotation
    a = denoise.wiener_denoise(expansion.steer(coeffs, alpha), model)
    c = expansion.steer(denoise.wiener_denoise(coeffs, model), alpha)
    scale = np.abs(c.matrix).max()
    checks["equivariance"] = (np.abs(a.matrix - c.matrix).max() / scale,
                              1e-10)

    # the rotational mean image is radially symmetric
    mean_img = expansion.reconstruct(expansion.rotational_mean(coeffs),
                                     design)[0]
    vals = mean_img[grid.mask]
    _, inv = np.unique(grid.r_masked, return_inverse=True)
    spread = max(np.ptp(vals[inv == g]) for g in range(inv.max() + 1))
    checks["radial-mean"] = (spread / np.abs(vals).max(), 1e-9)

    # expand(reconstruct(.)) is the identity on the basis span
    back = expansion.Expander(design).expand(
        expansion.reconstruct(coeffs, design))
    cscale = np.abs(coeffs.matrix).max()
    checks["closure"] = (np.abs(back.matrix - coeffs.matrix).max() / cscale,
                         1e-10)

    elapsed = time.perf_counter() - t0
    ok = all(v <= tol for v, tol in checks.values()) and elapsed < 60
    detail = ", ".join(f"{name}={v:.1e} (<= {tol:g})"
                       for name, (v, tol) in checks.items())
    line = _report(capsys, 9, ok, f"invariances at L={L}: {detail} [{elapsed:.1f}s]")
    assert ok, line
