"""Independent reference implementations the tests check the library against.

Everything here is written the slow, obvious way: scalar loops, running
products, direct formula translations. None of it shares code with the
package, so agreement between the two is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np


def quadrature_scalar(sigma, rgb, deltas, background):
    """One ray, direct translation of the emission-absorption sum.

    Running transmittance product (not exp of a cumulative sum), scalar
    accumulation in sample order. Returns (color (3,), weights (K,), t_end).
    """
    trans = 1.0
    color = [0.0, 0.0, 0.0]
    weights = []
    for k in range(len(sigma)):
        alpha = 1.0 - math.exp(-float(sigma[k]) * float(deltas[k]))
        w = trans * alpha
        weights.append(w)
        for c in range(3):
            color[c] += w * float(rgb[k][c])
        trans *= 1.0 - alpha
    for c in range(3):
        color[c] += trans * float(background[c])
    return np.asarray(color), np.asarray(weights), trans


def march_ray_dense(field, origin, direction, t0, t1, n=4096, background=(0.0, 0.0, 0.0)):
    """Uniform dense marching of one ray: midpoint samples, scalar quadrature.

    Returns (color (3,), depth at cumulative weight 0.5 or NaN, opacity).
    The depth convention matches the renderer's: the first sample midpoint
    where the running weight sum reaches half.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    dt = (t1 - t0) / n
    ts = t0 + (np.arange(n) + 0.5) * dt
    pos = origin[None, :] + ts[:, None] * direction[None, :]
    dirs = np.broadcast_to(direction, pos.shape)
    sig, col = field.query_many(pos, dirs)

    trans = 1.0
    color = np.zeros(3)
    acc_w = 0.0
    depth = float("nan")
    opacity = 0.0
    for k in range(n):
        alpha = 1.0 - math.exp(-float(sig[k]) * dt)
        w = trans * alpha
        acc_w += w
        if math.isnan(depth) and acc_w >= 0.5:
            depth = float(ts[k])
        color += w * col[k]
        opacity += w
        trans *= 1.0 - alpha
    color += trans * np.asarray(background)
    return color, depth, opacity


def dense_depth(field, origin, direction, t0, t1, n=4096):
    """Median depth (cumulative weight 0.5) from dense uniform marching.

    Same estimator as march_ray_dense but vectorized so it scales to whole
    images: the point is dense sampling as a reference for the renderer's
    sparse depth estimate, not a reimplementation race. Returns the first
    midpoint where the cumulative weight reaches one half, NaN if never.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    dt = (t1 - t0) / n
    ts = t0 + (np.arange(n) + 0.5) * dt
    pos = origin[None, :] + ts[:, None] * direction[None, :]
    sig, _ = field.query_many(pos, np.broadcast_to(direction, pos.shape))
    tau = np.asarray(sig, dtype=np.float64) * dt
    accum = np.cumsum(tau)
    trans = np.exp(-(accum - tau))
    w = trans * (1.0 - np.exp(-tau))
    cum_w = np.cumsum(w)
    idx = np.searchsorted(cum_w, 0.5, side="left")
    if idx >= n:
        return float("nan")
    return float(ts[idx])


def ray_box_overlap_dense(origin, direction, box_min, box_max, t_max, n=20000):
    """Does the ray hit the box in [0, t_max]? Dense membership sampling.

    Also returns (t_enter, t_exit) estimated from the first/last inside
    sample, which brackets the true interval to within t_max / n.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    lo = np.asarray(box_min, dtype=np.float64)
    hi = np.asarray(box_max, dtype=np.float64)
    ts = np.linspace(0.0, t_max, n)
    pos = origin[None, :] + ts[:, None] * direction[None, :]
    inside = np.all((pos >= lo) & (pos <= hi), axis=-1)
    if not inside.any():
        return False, float("nan"), float("nan")
    idx = np.nonzero(inside)[0]
    return True, float(ts[idx[0]]), float(ts[idx[-1]])


def psnr_direct(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return 10.0 * math.log10(1.0 / mse)


def _gauss_window(size=11, sigma=1.5):
    half = size // 2
    g = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            g[i, j] = math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def ssim_windows(a, b, k1=0.01, k2=0.03):
    """SSIM by explicit per-window statistics, double loop over positions.

    Luma first (Rec. 709), 11x11 Gaussian weights, only windows with full
    support. Slow; meant for small images.
    """
    luma = np.asarray([0.2126, 0.7152, 0.0722])
    x = np.asarray(a, dtype=np.float64) @ luma
    y = np.asarray(b, dtype=np.float64) @ luma
    win = _gauss_window()
    size = win.shape[0]
    half = size // 2
    c1 = k1 * k1
    c2 = k2 * k2
    h, w = x.shape
    vals = []
    for i in range(half, h - half):
        for j in range(half, w - half):
            px = x[i - half:i + half + 1, j - half:j + half + 1]
            py = y[i - half:i + half + 1, j - half:j + half + 1]
            mx = (win * px).sum()
            my = (win * py).sum()
            vx = (win * px * px).sum() - mx * mx
            vy = (win * py * py).sum() - my * my
            cxy = (win * px * py).sum() - mx * my
            num = (2 * mx * my + c1) * (2 * cxy + c2)
            den = (mx * mx + my * my + c1) * (vx + vy + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def recount_visible(recon, box_min, box_max):
    """Brute-force points-by-views recount of in-box visibility.

    Direct double loop over views and observations; membership by explicit
    coordinate comparison. Returns (counts dict, nb_total).
    """
    lo = list(box_min)
    hi = list(box_max)

    def inside(p):
        return all(lo[i] <= float(p[i]) <= hi[i] for i in range(3))

    in_box_ids = set()
    for pid, point in recon.points.items():
        if inside(point.position):
            in_box_ids.add(pid)

    counts = {}
    for vid, view in recon.views.items():
        n = 0
        for obs in view.observations:
            if obs.point3d_id is not None and obs.point3d_id in in_box_ids:
                n += 1
        counts[vid] = n
    return counts, len(in_box_ids)


def select_by_threshold(counts, nb_total, fraction):
    """The grouping cut, restated: strictly more than fraction of the total."""
    return sorted(v for v, n in counts.items() if n > fraction * nb_total)


def fd_loss_gradients(loss_fn, grid_sigma, grid_rgb, eps=1e-4, quantize=None):
    """Central finite differences of loss_fn over every node value.

    loss_fn(sigma_array, rgb_array) -> float. Returns (g_sigma, g_rgb) with
    the same shapes as the inputs. O(nodes) loss evaluations; keep grids tiny.

    quantize, when given, is the storage rounding the loss applies to its
    inputs (e.g. a float32 round trip). The divisor is then the realized step
    between the two quantized evaluation points rather than the nominal 2*eps;
    without that correction the quantizer's rounding leaks into the quotient.
    """
    if quantize is None:
        quantize = lambda x: x
    g_sigma = np.zeros_like(grid_sigma, dtype=np.float64)
    g_rgb = np.zeros_like(grid_rgb, dtype=np.float64)
    s = np.asarray([quantize(v) for v in grid_sigma.astype(np.float64).ravel()]).reshape(grid_sigma.shape)
    c = np.asarray([quantize(v) for v in grid_rgb.astype(np.float64).ravel()]).reshape(grid_rgb.shape)

    def central(arr, idx, other_eval):
        keep = arr[idx]
        up, dn = quantize(keep + eps), quantize(keep - eps)
        arr[idx] = up
        hi = other_eval()
        arr[idx] = dn
        lo = other_eval()
        arr[idx] = keep
        return (hi - lo) / (up - dn)

    it = np.nditer(s, flags=["multi_index"])
    while not it.finished:
        g_sigma[it.multi_index] = central(s, it.multi_index, lambda: loss_fn(s, c))
        it.iternext()

    it = np.nditer(c, flags=["multi_index"])
    while not it.finished:
        g_rgb[it.multi_index] = central(c, it.multi_index, lambda: loss_fn(s, c))
        it.iternext()

    return g_sigma, g_rgb


def random_rays(rng, n, center=(0.0, 0.0, 0.0), radius=3.0):
    """n rays from random origins on a sphere shell, aimed near the center."""
    origins = rng.normal(size=(n, 3))
    origins /= np.linalg.norm(origins, axis=-1, keepdims=True)
    origins = origins * radius + np.asarray(center)
    targets = np.asarray(center) + rng.normal(scale=0.6, size=(n, 3))
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return origins, dirs
