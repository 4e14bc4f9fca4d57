"""Command-line pipeline: generate, fit, inspect, denoise, benchmark.

Heavy imports happen after argument parsing so --threads can pin the BLAS
thread pools through the environment before numpy loads.  Every command is
deterministic given --seed; all randomness flows from that one value.

Exit codes: 0 success, 2 usage error (bad arguments, missing files),
3 numerical failure (rank deficiency, non-convergence, bad data).

Report-producing commands write a PNG figure next to each delimited
output; the artifact paths are derived from --out and printed on stdout.
"""

import argparse
import os
import sys
import time

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


class UsageError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _int_list(minimum):
    def parse(text):
        try:
            values = [int(part) for part in text.split(",") if part]
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"expected comma-separated integers, got {text!r}")
        if not values or any(v < minimum for v in values):
            raise argparse.ArgumentTypeError(
                f"values must all be >= {minimum}, got {text!r}")
        return values
    return parse


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fbspca",
        description="Fourier-Bessel steerable PCA: rotation-invariant "
                    "denoising of 2D image stacks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, threads=True, seed=False):
        if threads:
            p.add_argument("--threads", type=_positive_int, default=None,
                           help="BLAS thread count (default: library default)")
        if seed:
            p.add_argument("--seed", type=int, default=0,
                           help="seed for all randomness (default 0)")

    p = sub.add_parser("gen", help="generate a phantom stack, optionally noisy")
    p.add_argument("--L", type=_positive_int, required=True, help="bandlimit")
    p.add_argument("--n", type=_positive_int, required=True, help="stack size")
    p.add_argument("--snr", type=float, default=None,
                   help="signal-to-noise ratio; omit for a clean stack")
    p.add_argument("--classes", type=_positive_int, default=4,
                   help="number of phantom classes (default 4)")
    p.add_argument("--out", required=True, help="output stack (FBI1)")
    add_common(p, seed=True)

    p = sub.add_parser("fit", help="fit the spectral model of a stack")
    p.add_argument("--in", dest="input", required=True, help="input stack (FBI1)")
    p.add_argument("--out", required=True, help="output model (FBS1)")
    p.add_argument("--pinv", choices=("exact", "identity"), default="exact",
                   help="least-squares mode (default exact)")
    p.add_argument("--threshold", choices=("mp", "paper"), default="mp",
                   help="component selection rule (default mp)")
    add_common(p)

    p = sub.add_parser("eigenimages", help="synthesize selected eigenimages")
    p.add_argument("--in", dest="input", required=True, help="input model (FBS1)")
    p.add_argument("--out", required=True, help="output stack (FBI1; re/im planes)")
    p.add_argument("--png", action="store_true",
                   help="also export each component as a 16-bit grayscale PNG")
    add_common(p)

    p = sub.add_parser("denoise", help="Wiener-denoise a stack")
    p.add_argument("--in", dest="input", required=True, help="noisy stack (FBI1)")
    p.add_argument("--out", required=True, help="denoised stack (FBI1)")
    p.add_argument("--model", default=None,
                   help="pre-fit model (FBS1); fits in-process when omitted")
    p.add_argument("--clean", default=None,
                   help="clean reference stack; enables the quality report")
    p.add_argument("--pinv", choices=("exact", "identity"), default="exact")
    p.add_argument("--threshold", choices=("mp", "paper"), default="mp")
    p.add_argument("--debias", choices=("linear", "spiked"), default="linear",
                   help="eigenvalue debias rule for the Wiener weights")
    add_common(p)

    p = sub.add_parser("bench", help="benchmark FBsPCA against pixel PCA")
    p.add_argument("--L", type=_int_list(2), default=[16, 32, 48],
                   help="comma-separated bandlimits (default 16,32,48)")
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--snr", type=float, default=0.2)
    p.add_argument("--out", required=True, help="comparison CSV")
    add_common(p, seed=True)

    p = sub.add_parser("gram", help="spectrum of the weighted design Gram")
    p.add_argument("--L", type=_positive_int, required=True)
    p.add_argument("--out", required=True, help="spectrum CSV (descending)")
    add_common(p)

    p = sub.add_parser("noise-spectrum",
                       help="pure-noise block eigenvalues vs the MP law")
    p.add_argument("--L", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, default=10000)
    p.add_argument("--ks", type=_int_list(0), default=None,
                   help="angular orders to report (default 0,1,max)")
    p.add_argument("--batches", type=_positive_int, default=None,
                   help="covariance batches to pool (default n // 200)")
    p.add_argument("--out", required=True, help="histogram CSV")
    add_common(p, seed=True)

    return parser


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def cmd_gen(args):
    from . import data

    stack = data.generate_phantoms(args.n, args.L, seed=args.seed,
                                   class_count=args.classes)
    if args.snr is not None:
        if args.snr <= 0:
            raise UsageError("--snr must be positive")
        clean_path = args.out + ".clean"
        data.save_stack(clean_path, stack)
        stack = data.add_noise(stack, snr=args.snr, seed=args.seed + 1)
        data.save_stack(args.out, stack)
        print(f"gen: wrote {args.out} (noisy, snr={args.snr:g}) and {clean_path}")
    else:
        data.save_stack(args.out, stack)
        print(f"gen: wrote {args.out} (clean)")
    return 0


def _expand_stack(stack, pinv):
    from . import basis, expansion

    grid = basis.GridSpec(stack.L, side=stack.side)
    bas = basis.truncate_basis(stack.L)
    design = basis.build_design_matrix(grid, bas)
    expander = expansion.Expander(design, pinv=pinv)
    return design, expander.expand(stack.pixels)


def cmd_fit(args):
    from . import data, plots, spectrum

    _require_file(args.input, "input stack")
    stack = data.load_stack(args.input)
    t0 = time.perf_counter()
    design, coeffs = _expand_stack(stack, args.pinv)
    model = spectrum.fit_model(coeffs, rule=args.threshold)
    elapsed = time.perf_counter() - t0
    spectrum.save_model(args.out, model)
    csv_path = args.out + ".eigs.csv"
    spectrum.save_eigenvalue_csv(csv_path, model)
    fig_path = args.out + ".eigs.png"
    plots.block_spectrum_figure(fig_path, model)
    print(f"fit: n={model.n} L={model.L} selected={model.total_selected()} "
          f"sigma2={model.noise_variance:.6g} elapsed_seconds={elapsed:.3f}")
    print(f"fit: wrote {args.out}, {csv_path}, {fig_path}")
    return 0


def cmd_eigenimages(args):
    import numpy as np

    from . import basis, data, denoise, plots, spectrum

    _require_file(args.input, "input model")
    model = spectrum.load_model(args.input)
    grid = basis.GridSpec(model.L)
    design = basis.build_design_matrix(grid, basis.truncate_basis(model.L))
    eig = denoise.synthesize_eigenimages(model, design)
    keys = sorted(eig.images)
    planes = []
    for key in keys:
        planes.append(eig.images[key].real)
        planes.append(eig.images[key].imag)
    if not planes:
        raise RuntimeError("model selects no components; nothing to synthesize")
    stack = data.ImageStack(np.asarray(planes), model.L, metadata={
        "kind": "eigenimages",
        "layout": "interleaved re/im planes",
        "components": ";".join(f"{k}:{l}" for k, l in keys),
    })
    data.save_stack(args.out, stack)
    fig_path = args.out + ".png"
    plots.gallery_figure(fig_path, [eig.images[key].real for key in keys],
                         titles=[f"k={k} l={l}" for k, l in keys])
    if args.png:
        for k, l in keys:
            data.save_grayscale_png(f"{args.out}.k{k}l{l}.png",
                                    eig.images[(k, l)].real)
    print(f"eigenimages: {len(keys)} components -> {args.out}, {fig_path}")
    return 0


def cmd_denoise(args):
    from . import data, denoise, expansion, metrics, plots, spectrum

    _require_file(args.input, "input stack")
    stack = data.load_stack(args.input)
    design, coeffs = _expand_stack(stack, args.pinv)
    if args.model is not None:
        _require_file(args.model, "model")
        model = spectrum.load_model(args.model)
        if model.L != stack.L:
            raise UsageError(
                f"model bandlimit L={model.L} does not match stack L={stack.L}")
    else:
        model = spectrum.fit_model(coeffs, rule=args.threshold)
    filtered = denoise.wiener_denoise(coeffs, model, debias=args.debias)
    pixels = expansion.reconstruct(filtered, design)
    out_stack = data.ImageStack(pixels, stack.L, metadata={
        "kind": "denoised",
        "source": args.input,
        "debias": args.debias,
        "selected": model.total_selected(),
    })
    data.save_stack(args.out, out_stack)
    artifacts = [args.out]
    gallery = [stack.pixels[0], pixels[0]]
    titles = ["noisy", "denoised"]
    if args.clean is not None:
        _require_file(args.clean, "clean stack")
        clean = data.load_stack(args.clean)
        if clean.pixels.shape != stack.pixels.shape:
            raise UsageError("clean stack shape does not match input stack")
        reports = [
            metrics.QualityReport("fbspca", clean.pixels, pixels, design.grid),
            metrics.QualityReport("noisy", clean.pixels, stack.pixels, design.grid),
        ]
        csv_path = args.out + ".quality.csv"
        metrics.save_quality_csv(csv_path, reports)
        artifacts.append(csv_path)
        gallery.insert(0, clean.pixels[0])
        titles.insert(0, "clean")
        for rep in reports:
            print(f"denoise: {rep.row()}")
    fig_path = args.out + ".png"
    plots.gallery_figure(fig_path, gallery, titles=titles, ncols=3)
    artifacts.append(fig_path)
    print(f"denoise: wrote {', '.join(artifacts)}")
    return 0


def cmd_bench(args):
    from . import basis, data, denoise, expansion, metrics, plots, spectrum

    if args.snr is not None and args.snr <= 0:
        raise UsageError("--snr must be positive")
    rows = []
    for L in args.L:
        clean = data.generate_phantoms(args.n, L, seed=args.seed)
        noisy = data.add_noise(clean, snr=args.snr, seed=args.seed + 1)
        grid = basis.GridSpec(L)

        basis.truncate_basis.cache_clear()  # time the cold start
        t0 = time.perf_counter()
        design, coeffs = _expand_stack(noisy, "exact")
        model = spectrum.fit_model(coeffs)
        fb_pixels = expansion.reconstruct(
            denoise.wiener_denoise(coeffs, model), design)
        fb_seconds = time.perf_counter() - t0

        t0 = time.perf_counter()
        pca = denoise.PixelPCA(noisy.pixels, grid)
        pca_pixels = pca.denoise(noisy.pixels)
        pca_seconds = time.perf_counter() - t0

        for method, seconds, pixels, count in (
                ("fbspca", fb_seconds, fb_pixels, model.count_with_negatives()),
                ("pca", pca_seconds, pca_pixels, pca.rank)):
            rep = metrics.QualityReport(method, clean.pixels, pixels, grid)
            rows.append((method, L, args.n, seconds, rep.mse, rep.psnr,
                         1.0 - rep.ssim, count))
        print(f"bench: L={L} fbspca={fb_seconds:.2f}s pca={pca_seconds:.2f}s "
              f"ratio={fb_seconds / pca_seconds:.3f}")
    with open(args.out, "w") as fh:
        fh.write("method,L,n,wall_seconds,mse,psnr_db,one_minus_ssim,components\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]},{row[2]},{row[3]:.4f},{row[4]:.10g},"
                     f"{row[5]:.6g},{row[6]:.10g},{row[7]}\n")
    fig_path = args.out + ".png"
    plots.benchmark_figure(fig_path, [(r[0], r[1], r[3]) for r in rows])
    print(f"bench: wrote {args.out}, {fig_path}")
    return 0


def cmd_gram(args):
    from . import basis, plots

    grid = basis.GridSpec(args.L)
    design = basis.build_design_matrix(grid, basis.truncate_basis(args.L))
    eigvals = basis.gram_spectrum(design)
    with open(args.out, "w") as fh:
        fh.write("index,eigenvalue\n")
        for i, val in enumerate(eigvals, start=1):
            fh.write(f"{i},{val:.12g}\n")
    fig_path = args.out + ".png"
    plots.gram_spectrum_figure(fig_path, eigvals)
    below = int((eigvals < 0.95).sum())
    above = int((eigvals > 1.05).sum())
    print(f"gram: L={args.L} count={eigvals.size} below_0.95={below} "
          f"above_1.05={above}")
    print(f"gram: wrote {args.out}, {fig_path}")
    return 0


def cmd_noise_spectrum(args):
    import numpy as np

    from . import basis, expansion, plots, spectrum

    grid = basis.GridSpec(args.L)
    bas = basis.truncate_basis(args.L)
    ks = args.ks if args.ks is not None else [0, 1, bas.k_max]
    bad = [k for k in ks if k not in bas.p]
    if bad:
        raise UsageError(f"angular orders {bad} not in the L={args.L} basis")
    rng = np.random.default_rng(args.seed)
    images = rng.standard_normal((args.n, grid.side, grid.side))
    design = basis.build_design_matrix(grid, bas)
    coeffs = expansion.Expander(design).expand(images)
    model = spectrum.fit_model(coeffs)
    sigma2 = model.noise_variance
    batches = args.batches if args.batches is not None else max(1, args.n // 200)
    samples = {}
    summary = []
    for k in ks:
        lam, gamma = spectrum.pooled_noise_eigenvalues(coeffs, k, batches)
        ks_dist = spectrum.ks_distance(lam, gamma, sigma2)
        samples[k] = (lam, gamma, sigma2)
        summary.append((k, gamma, ks_dist))
    with open(args.out, "w") as fh:
        for k, gamma, ks_dist in summary:
            fh.write(f"# k={k} gamma={gamma:.6g} sigma2={sigma2:.6g} "
                     f"ks_distance={ks_dist:.6g} batches={batches}\n")
        fh.write("k,bin_left,bin_right,density\n")
        for k in ks:
            lam = samples[k][0]
            density, edges = np.histogram(lam, bins=40, density=True)
            for d, lo, hi in zip(density, edges[:-1], edges[1:]):
                fh.write(f"{k},{lo:.10g},{hi:.10g},{d:.10g}\n")
    fig_path = args.out + ".png"
    plots.mp_histogram_figure(fig_path, samples)
    for k, gamma, ks_dist in summary:
        print(f"noise-spectrum: k={k} gamma={gamma:.4g} ks_distance={ks_dist:.4g}")
    print(f"noise-spectrum: wrote {args.out}, {fig_path}")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "eigenimages": cmd_eigenimages,
    "denoise": cmd_denoise,
    "bench": cmd_bench,
    "gram": cmd_gram,
    "noise-spectrum": cmd_noise_spectrum,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None):
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    import numpy as np

    try:
        return _COMMANDS[args.command](args)
    except (UsageError, OSError) as err:
        print(f"fbspca: usage error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, ArithmeticError,
            np.linalg.LinAlgError) as err:
        print(f"fbspca: numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
