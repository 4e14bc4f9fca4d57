"""Integer-order Bessel functions J_k and their positive roots.

Self-contained evaluation used by the basis builder: an ascending power
series where its terms decrease monotonically (x <= 2*sqrt(k+1)) and the
Miller backward recurrence normalized by J_0 + 2*sum J_{2m} = 1 elsewhere.
Roots are located by a pi/4 sign-change sweep, bisection, and a few Newton
polish steps.
"""

import math

import numpy as np

# documented evaluation ceilings: orders up to 4*L_MAX, arguments up to
# 8*pi*L_MAX, enough for every grid bandlimit this package supports
L_MAX = 64
K_MAX = 4 * L_MAX
X_MAX = 8.0 * math.pi * L_MAX

_ROOT_ATOL = 1e-12
_SWEEP_STEP = math.pi / 4.0


def _series_jk(k, x):
    """Ascending series; valid (monotone terms) for x <= 2*sqrt(k+1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    if k == 0:
        out[~pos] = 1.0
    if not np.any(pos):
        return out
    xp = x[pos]
    # first term (x/2)^k / k! through logs to dodge overflow at large k
    with np.errstate(divide="ignore"):
        logt = k * np.log(xp / 2.0) - math.lgamma(k + 1)
    term = np.where(logt < -745.0, 0.0, np.exp(logt))
    total = term.copy()
    q = xp * xp / 4.0
    m = 0
    while True:
        m += 1
        term = -term * q / (m * (k + m))
        total += term
        if m > 400 or np.all(np.abs(term) <= 1e-18 * (np.abs(total) + 1e-300)):
            break
    out[pos] = total
    return out


def _miller_jk(k, x):
    """Backward (Miller) recurrence for J_k(x), x bounded away from 0."""
    x = np.asarray(x, dtype=float)
    xmax = float(x.max())
    # start high enough that the downward recurrence has converged by order k
    n_start = int(max(k, math.ceil(xmax)) + math.ceil(13.0 * xmax ** (1.0 / 3.0)) + 15)
    if n_start % 2:
        n_start += 1
    fp = np.zeros_like(x)           # f_{n+1}
    fc = np.full_like(x, 1e-30)     # f_n
    target = np.zeros_like(x)
    norm = np.zeros_like(x)
    inv_x2 = 2.0 / x
    for n in range(n_start, 0, -1):
        fm = (n * inv_x2) * fc - fp
        fp, fc = fc, fm
        # fc now holds f_{n-1}
        if (n - 1) == k:
            target = fc.copy()
        if (n - 1) % 2 == 0:
            norm += fc if (n - 1) == 0 else 2.0 * fc
        # per-step growth is at most ~2*n_start/x, far below 1e40, so a
        # rescale check every 8 steps cannot miss an overflow at 1e200
        if n % 8 == 0 and np.any(np.abs(fc) > 1e200):
            s = np.where(np.abs(fc) > 1e200, 1e-200, 1.0)
            fp *= s
            fc *= s
            norm *= s
            target *= s
    return target / norm


def _jk(k, x):
    """Dispatch series/Miller on a float array; no domain checks."""
    out = np.empty_like(x)
    cut = 2.0 * math.sqrt(k + 1.0)
    lo = x <= cut
    if np.any(lo):
        out[lo] = _series_jk(k, x[lo])
    if np.any(~lo):
        out[~lo] = _miller_jk(k, x[~lo])
    return out


def bessel_j(k, x):
    """J_k(x) for integer k >= 0; x scalar or array, 0 <= x <= X_MAX.

    Relative accuracy ~1e-10 away from zeros of J_k, absolute near them.
    """
    if k < 0 or k != int(k):
        raise ValueError(f"order must be a nonnegative integer, got {k}")
    k = int(k)
    if k > K_MAX:
        raise ValueError(f"order {k} above supported ceiling {K_MAX}")
    scalar = np.isscalar(x) or np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0) or np.any(x > X_MAX) or not np.all(np.isfinite(x)):
        raise ValueError("argument out of supported range [0, 8*pi*L_MAX]")
    out = _jk(k, x)
    return float(out[0]) if scalar else out


def bessel_jprime(k, x):
    """dJ_k/dx via the recurrence J_k' = (J_{k-1} - J_{k+1})/2."""
    scalar = np.isscalar(x) or np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if k == 0:
        out = -_jk(1, x)
    else:
        out = 0.5 * (_jk(k - 1, x) - _jk(k + 1, x))
    return float(out[0]) if scalar else out


def mcmahon_guess(k, q):
    """Asymptotic root location (pi/2)*(k + 2q - 1/2); seeds bracketing only."""
    if q < 1:
        raise ValueError("radial index q must be >= 1")
    return 0.5 * math.pi * (k + 2 * q - 0.5)


def bessel_roots(k, x_max):
    """All roots of J_k in (0, x_max], ascending, to 1e-12 absolute.

    A pi/4 sweep cannot skip a root (consecutive roots of J_k are farther
    apart than pi/4), so the bracket list is complete; each bracket is
    bisected and polished with Newton steps.
    """
    if x_max <= 0:
        raise ValueError("x_max must be positive")
    if x_max > X_MAX:
        raise ValueError(f"x_max {x_max} above supported ceiling {X_MAX}")
    # J_k has no zero below ~k; start the sweep a little inside to save work
    start = max(0.5, k * 0.5)
    # overshoot by one step so the bracket list covers x_max itself; roots
    # past x_max are dropped after polishing
    grid = np.arange(start, x_max + 2 * _SWEEP_STEP, _SWEEP_STEP)
    grid = np.minimum(grid, X_MAX)
    if grid.size < 2:
        grid = np.array([start, min(x_max + _SWEEP_STEP, X_MAX)])
    vals = bessel_j(k, grid)
    # sign at 0+ is positive for every k
    sgn = np.sign(vals)
    sgn[sgn == 0] = 1.0
    flips = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    if flips.size == 0:
        return []
    lo = grid[flips].copy()
    hi = grid[flips + 1].copy()
    flo = vals[flips].copy()
    # coarse vectorized bisection; Newton converges quadratically from a
    # 1e-3 bracket on a simple root, so tighter bisection is wasted work
    while np.any(hi - lo > 1e-3):
        mid = 0.5 * (lo + hi)
        fmid = bessel_j(k, mid)
        left = flo * fmid > 0
        lo = np.where(left, mid, lo)
        flo = np.where(left, fmid, flo)
        hi = np.where(left, hi, mid)
    root = 0.5 * (lo + hi)
    for _ in range(8):
        f = bessel_j(k, root)
        df = bessel_jprime(k, root)
        step = f / df
        root = root - step
        if np.all(np.abs(step) < 0.1 * _ROOT_ATOL):
            break
    root = root[(root > 0) & (root <= x_max)]
    return [float(r) for r in np.sort(root)]


def build_root_table(k_max, x_max):
    """Map (k, q) -> R_kq for all roots below x_max, orders 0..k_max."""
    table = {}
    for k in range(k_max + 1):
        for qi, r in enumerate(bessel_roots(k, x_max)):
            table[(k, qi + 1)] = r
    return table


def save_root_table(table, path):
    """Plain-text cache: one 'k q R_kq' line per root, 15 significant digits."""
    with open(path, "w") as fh:
        for (k, q) in sorted(table):
            fh.write(f"{k} {q} {table[(k, q)]:.15g}\n")


def load_root_table(path):
    table = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 3:
                continue
            table[(int(parts[0]), int(parts[1]))] = float(parts[2])
    return table
