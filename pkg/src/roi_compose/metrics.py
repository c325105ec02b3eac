"""Image comparison metrics on linear [0, 1] float images."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyMask, ImageTooSmall

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03

# Rec. 709 luma coefficients
_LUMA = np.asarray([0.2126, 0.7152, 0.0722])


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(image, reference) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; inf for identical inputs."""
    a, b = _check_pair(image, reference)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def masked_psnr(image, reference, mask) -> float:
    """PSNR restricted to pixels where mask is true (all channels of each)."""
    a, b = _check_pair(image, reference)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[:2]:
        raise DimensionMismatch(f"mask shape {mask.shape} does not match image {a.shape[:2]}")
    if not mask.any():
        raise EmptyMask("mask selects no pixels")
    diff = (a - b)[mask]
    mse = float(np.mean(diff ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ _LUMA
    raise DimensionMismatch(f"expected (H,W) or (H,W,3), got {img.shape}")


def _gaussian_kernel() -> np.ndarray:
    half = _SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    return k / k.sum()


_KERNEL = _gaussian_kernel()


def _filt(img: np.ndarray) -> np.ndarray:
    return ndimage.convolve(img, _KERNEL, mode="nearest")


def ssim(image, reference) -> float:
    """Mean structural similarity on Rec. 709 luma, 11x11 Gaussian window.

    Border pixels whose window would leave the image are cropped out, so the
    score only covers positions with full support.
    """
    a, b = _check_pair(image, reference)
    x = _luma(a)
    y = _luma(b)
    h, w = x.shape
    if min(h, w) < _SSIM_WINDOW:
        raise ImageTooSmall(f"ssim needs at least {_SSIM_WINDOW}x{_SSIM_WINDOW}, got {h}x{w}")

    c1 = _K1 ** 2
    c2 = _K2 ** 2
    mu_x = _filt(x)
    mu_y = _filt(y)
    xx = _filt(x * x) - mu_x * mu_x
    yy = _filt(y * y) - mu_y * mu_y
    xy = _filt(x * y) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    smap = num / den

    half = _SSIM_WINDOW // 2
    return float(np.mean(smap[half:h - half, half:w - half]))


def roi_mask(view, intrinsics, box) -> np.ndarray:
    """(H, W) bool mask of pixels whose camera ray intersects `box`.

    This is the evaluation mask for region-restricted PSNR: a pixel counts as
    "inside the region" when its ray hits the region's bounding box anywhere
    in front of the camera, whether or not the region is occluded there.
    Raises EmptyMask when no ray hits (box fully behind or outside the view).
    """
    from .geometry import camera_rays_batch, ray_aabb_intersect_batch

    h, w = intrinsics.height, intrinsics.width
    vs, us = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    origins, dirs = camera_rays_batch(view, intrinsics, us.ravel(), vs.ravel())
    hit, _, _ = ray_aabb_intersect_batch(
        origins, dirs, box,
        np.zeros(origins.shape[0]), np.full(origins.shape[0], np.inf),
    )
    mask = hit.reshape(h, w)
    if not mask.any():
        raise EmptyMask("no camera ray intersects the box")
    return mask
