"""Raster primitives: Canny edges, connected components, 1-D mean shift, keypoints.

Images are 2-D ``uint8`` arrays (row-major, ``img[y, x]``); binary masks are
2-D ``bool`` arrays of the same layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_gray_image, check_mask, check_positive
from .geometry import Correspondence

GAUSS_SIGMA = 1.4
GAUSS_SIZE = 5
CANNY_LOW = 50.0
CANNY_HIGH = 150.0
PATCH_SIZE = 16
MAX_KEYPOINTS = 500

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
_SOBEL_Y = _SOBEL_X.T.copy()
_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)


def gaussian_kernel(size: int = GAUSS_SIZE, sigma: float = GAUSS_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def sobel_gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-smoothed Sobel derivatives ``(gx, gy)`` (x rightward, y downward)."""
    f = np.asarray(img, dtype=float)
    smooth = ndimage.convolve(f, gaussian_kernel(), mode="nearest")
    # ndimage.convolve flips the kernel, correlate does not
    gx = ndimage.correlate(smooth, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(smooth, _SOBEL_Y, mode="nearest")
    return gx, gy


def non_maximum_suppression(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient magnitude with non-maxima along the gradient direction zeroed.

    Ties between two neighbours are resolved toward the darker pixel (the
    pixel lying against the gradient), so an edge between a light region
    and a dark stroke is marked on the stroke.
    """
    mag = np.hypot(gx, gy)
    h, w = mag.shape
    yy, xx = np.mgrid[:h, :w].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(mag > 0, gx / mag, 0.0)
        uy = np.where(mag > 0, gy / mag, 0.0)
    # magnitudes one unit step along (+) and against (-) the gradient, bilinear
    fwd = ndimage.map_coordinates(mag, [yy + uy, xx + ux], order=1, mode="constant", cval=0.0)
    bwd = ndimage.map_coordinates(mag, [yy - uy, xx - ux], order=1, mode="constant", cval=0.0)
    keep = (mag >= fwd) & (mag > bwd)
    out = np.where(keep & (mag > 0), mag, 0.0)
    return out


def canny_edges(img, low: float = CANNY_LOW, high: float = CANNY_HIGH) -> np.ndarray:
    """Canny edge mask: 5x5 Gaussian (sigma 1.4), Sobel, NMS, hysteresis."""
    img = check_gray_image(img)
    if not 0 <= low <= high:
        raise ValueError(f"need 0 <= low <= high, got low={low}, high={high}")
    gx, gy = sobel_gradients(img)
    nms = non_maximum_suppression(gx, gy)
    weak = nms >= low
    weak &= nms > 0
    strong = weak & (nms >= high)
    if not strong.any():
        return np.zeros(img.shape, dtype=bool)
    labels, n = ndimage.label(weak, structure=_EIGHT)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


class Components(NamedTuple):
    labels: np.ndarray
    areas: np.ndarray  # areas[i] is the pixel count of label i + 1

    @property
    def count(self) -> int:
        return len(self.areas)


def connected_components(mask, connectivity: int = 4) -> Components:
    """Label true pixels; labels run contiguously from 1, 0 is background."""
    mask = check_mask(mask)
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    labels, n = ndimage.label(mask, structure=_FOUR if connectivity == 4 else _EIGHT)
    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return Components(labels, areas)


def _shift_to_mode(x: Fraction, pts: Sequence[Fraction], bw: Fraction) -> Fraction:
    window = None
    while True:
        members = tuple(p for p in pts if abs(p - x) <= bw)
        if members == window:
            return x
        window = members
        x = sum(members, Fraction(0)) / len(members)


def meanshift_1d(points: Sequence[float], bandwidth: float) -> list[int]:
    """Flat-kernel mean shift on scalars.

    Every point climbs to the mean of its ``bandwidth`` window until the
    window stops changing; modes closer than ``bandwidth / 2`` are chained
    into one cluster. Labels are numbered by increasing mode, so the result
    does not depend on input order. Arithmetic is exact (rationals).
    """
    check_positive(bandwidth, "bandwidth")
    if len(points) == 0:
        raise ValueError("points must be non-empty")
    bw = Fraction(bandwidth)
    pts = sorted(Fraction(p) for p in points)
    cache: dict[Fraction, Fraction] = {}
    modes = []
    for p in points:
        fp = Fraction(p)
        if fp not in cache:
            cache[fp] = _shift_to_mode(fp, pts, bw)
        modes.append(cache[fp])

    distinct = sorted(set(modes))
    cluster_of: dict[Fraction, int] = {}
    label = 0
    for i, m in enumerate(distinct):
        if i > 0 and m - distinct[i - 1] > bw / 2:
            label += 1
        cluster_of[m] = label
    return [cluster_of[m] for m in modes]


class MeanShift1D(ClusterMixin, BaseEstimator):
    """Estimator interface for :func:`meanshift_1d`."""

    def __init__(self, bandwidth=1.0):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        x = np.asarray(X, dtype=float).ravel()
        self.labels_ = np.array(meanshift_1d(x.tolist(), self.bandwidth), dtype=int)
        self.cluster_centers_ = np.array(
            [x[self.labels_ == k].mean() for k in range(self.labels_.max() + 1)]
        )
        return self


@dataclass(frozen=True)
class Keypoint:
    pos: tuple[float, float]
    response: float
    descriptor: np.ndarray = field(compare=False, repr=False)


def harris_response(img, k: float = 0.04, window_sigma: float = 1.5) -> np.ndarray:
    gx, gy = sobel_gradients(img)
    sxx = ndimage.gaussian_filter(gx * gx, window_sigma, mode="nearest")
    syy = ndimage.gaussian_filter(gy * gy, window_sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(gx * gy, window_sigma, mode="nearest")
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def patch_descriptor(img: np.ndarray, x: int, y: int, size: int = PATCH_SIZE) -> np.ndarray | None:
    """Mean/variance-normalized ``size x size`` patch, flattened and L2-normalized."""
    half = size // 2
    patch = img[y - half : y - half + size, x - half : x - half + size].astype(float)
    if patch.shape != (size, size):
        return None
    patch = patch - patch.mean()
    sd = patch.std()
    if sd < 1e-9:
        return None
    v = (patch / sd).ravel()
    return v / np.linalg.norm(v)


def detect_keypoints(
    img, max_kp: int = MAX_KEYPOINTS, patch_size: int = PATCH_SIZE, rel_threshold: float = 0.01
) -> list[Keypoint]:
    """Harris corners (top ``max_kp`` local maxima) with patch descriptors."""
    img = check_gray_image(img)
    h, w = img.shape
    if h <= patch_size or w <= patch_size:
        raise ValueError(f"image must be larger than the {patch_size}px patch")
    resp = harris_response(img)
    peak = resp.max()
    if peak <= 0:
        return []
    local_max = resp == ndimage.maximum_filter(resp, size=5, mode="constant", cval=-np.inf)
    cand = local_max & (resp > rel_threshold * peak)
    half = patch_size // 2
    cand[:half, :] = False
    cand[h - half :, :] = False
    cand[:, :half] = False
    cand[:, w - half :] = False
    ys, xs = np.nonzero(cand)
    order = np.lexsort((xs, ys, -resp[ys, xs]))
    out = []
    for i in order:
        if len(out) >= max_kp:
            break
        x, y = int(xs[i]), int(ys[i])
        d = patch_descriptor(img, x, y, patch_size)
        if d is not None:
            out.append(Keypoint((float(x), float(y)), float(resp[y, x]), d))
    return out


def match_descriptors(
    a: Sequence[Keypoint], b: Sequence[Keypoint], ratio: float = 0.8
) -> list[Correspondence]:
    """Nearest-neighbour matches that pass the nearest/second-nearest ratio test."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    if not a or not b:
        return []
    da = np.stack([k.descriptor for k in a])
    db = np.stack([k.descriptor for k in b])
    d2 = (da**2).sum(1)[:, None] + (db**2).sum(1)[None, :] - 2 * da @ db.T
    dist = np.sqrt(np.maximum(d2, 0))
    out = []
    if len(b) == 1:
        return [Correspondence(k.pos, b[0].pos) for k in a]
    part = np.argpartition(dist, 1, axis=1)[:, :2]
    for i, (j0, j1) in enumerate(part):
        if dist[i, j1] < dist[i, j0]:
            j0, j1 = j1, j0
        if dist[i, j0] < ratio * dist[i, j1]:
            out.append(Correspondence(a[i].pos, b[j0].pos))
    return out
