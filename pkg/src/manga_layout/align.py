"""Pairing pages across two editions of a volume and warping one onto the other."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_gray_image, check_mask
from .geometry import Homography, ransac_homography
from .vision import detect_keypoints, match_descriptors

log = logging.getLogger(__name__)

DESCRIPTOR_SIDE = 32
MATCH_RATIO = 0.8
INLIER_PX = 3.0
MIN_INLIERS = 50


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` matrix averaging input cells by exact fractional overlap."""
    edges = np.linspace(0, n_in, n_out + 1)
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        first, last = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(first, min(last, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
        w[i] /= hi - lo
    return w


def area_resize(img, height: int, width: int) -> np.ndarray:
    f = np.asarray(img, dtype=float)
    return _area_weights(f.shape[0], height) @ f @ _area_weights(f.shape[1], width).T


def global_descriptor(img, side: int = DESCRIPTOR_SIDE) -> np.ndarray:
    """Thumbnail descriptor: area-averaged ``side x side``, zero-mean, unit L2."""
    img = check_gray_image(img)
    v = area_resize(img, side, side).ravel()
    v -= v.mean()
    n = np.linalg.norm(v)
    return v / n if n > 1e-12 else v


@dataclass(frozen=True)
class PagePair:
    src_index: int
    dst_index: int
    homography: Homography  # maps target-page pixels onto the source page
    inliers: int
    src_id: str = ""
    src_shape: tuple[int, int] | None = None  # (height, width) of the source page


def verify_pair(
    src_img,
    dst_img,
    *,
    ratio: float = MATCH_RATIO,
    inlier_px: float = INLIER_PX,
    min_inliers: int = MIN_INLIERS,
    iters: int = 1000,
    seed: int = 0,
    src_kp=None,
    dst_kp=None,
):
    """Spatial verification; returns the RANSAC result or ``None``."""
    src_kp = detect_keypoints(src_img) if src_kp is None else src_kp
    dst_kp = detect_keypoints(dst_img) if dst_kp is None else dst_kp
    matches = match_descriptors(dst_kp, src_kp, ratio)
    if len(matches) <= min_inliers:
        return None
    return ransac_homography(matches, inlier_px, iters, min_inliers, seed)


class PagePairer(BaseEstimator):
    """Retrieval + spatial verification over a target-language volume.

    ``fit`` indexes the target pages (descriptors and keypoints, built once);
    ``predict`` pairs each source page with its nearest target page and keeps
    the pair only when RANSAC finds more than ``min_inliers`` inliers.
    """

    def __init__(
        self,
        ratio=MATCH_RATIO,
        inlier_px=INLIER_PX,
        min_inliers=MIN_INLIERS,
        iters=1000,
        random_state=0,
        descriptor: Callable | None = None,
    ):
        self.ratio = ratio
        self.inlier_px = inlier_px
        self.min_inliers = min_inliers
        self.iters = iters
        self.random_state = random_state
        self.descriptor = descriptor

    def _describe(self, img):
        return (self.descriptor or global_descriptor)(img)

    def fit(self, X, y=None):
        imgs = [check_gray_image(im) for im in X]
        if not imgs:
            raise ValueError("target volume is empty")
        self.descriptors_ = np.stack([self._describe(im) for im in imgs])
        self.keypoints_ = [None] * len(imgs)
        self._images = imgs
        return self

    def _dst_keypoints(self, j):
        if self.keypoints_[j] is None:
            self.keypoints_[j] = detect_keypoints(self._images[j])
        return self.keypoints_[j]

    def predict(self, X, ids: Sequence[str] | None = None) -> list[PagePair]:
        check_is_fitted(self, "descriptors_")
        pairs = []
        for i, img in enumerate(X):
            img = check_gray_image(img)
            d = np.linalg.norm(self.descriptors_ - self._describe(img), axis=1)
            j = int(np.argmin(d))
            res = verify_pair(
                img,
                None,
                ratio=self.ratio,
                inlier_px=self.inlier_px,
                min_inliers=self.min_inliers,
                iters=self.iters,
                seed=self.random_state,
                dst_kp=self._dst_keypoints(j),
            )
            sid = ids[i] if ids is not None else str(i)
            if res is None:
                log.info("page %s: nearest target %d failed spatial verification", sid, j)
                continue
            pairs.append(PagePair(i, j, res.h, len(res.inliers), sid, img.shape))
        seen: dict[int, int] = {}
        for p in pairs:
            if p.dst_index in seen:
                log.warning(
                    "target page %d verified for source pages %d and %d; keeping both",
                    p.dst_index, seen[p.dst_index], p.src_index,
                )
            seen.setdefault(p.dst_index, p.src_index)
        return pairs


def pair_pages(src_imgs, dst_imgs, ids=None, **params) -> list[PagePair]:
    """For each source page: nearest target by descriptor, then RANSAC gate."""
    if len(src_imgs) == 0 or len(dst_imgs) == 0:
        raise ValueError("both volumes must be non-empty")
    return PagePairer(**params).fit(dst_imgs).predict(src_imgs, ids=ids)


def warp_image(h: Homography, img, out_shape, cval: float = 255.0) -> np.ndarray:
    """Bilinear inverse-mapped warp; ``h`` maps input pixels to output pixels."""
    img = check_gray_image(img)
    oh, ow = out_shape
    yy, xx = np.mgrid[:oh, :ow]
    pts = np.c_[xx.ravel(), yy.ravel(), np.ones(oh * ow)]
    inv = np.linalg.inv(h.m)
    src = pts @ inv.T
    w = src[:, 2]
    bad = np.abs(w) < 1e-12
    w = np.where(bad, 1.0, w)
    sx, sy = src[:, 0] / w, src[:, 1] / w
    sx[bad] = -1e9
    sy[bad] = -1e9
    out = ndimage.map_coordinates(
        img.astype(float), [sy, sx], order=1, mode="constant", cval=cval, prefilter=False
    )
    return np.clip(np.rint(out), 0, 255).astype(np.uint8).reshape(oh, ow)


def warp_page(pair: PagePair, dst_img, src_shape=None) -> np.ndarray:
    """Target page resampled into the source page frame; outside is white."""
    shape = src_shape or pair.src_shape or np.asarray(dst_img).shape[:2]
    return warp_image(pair.homography, dst_img, shape)


def transfer_regions(src_masks, out_shape) -> list[np.ndarray]:
    """Reuse source masks on the warped target page, clipped to its extent."""
    oh, ow = out_shape
    out = []
    for m in src_masks:
        m = check_mask(m)
        t = np.zeros((oh, ow), dtype=bool)
        h, w = min(oh, m.shape[0]), min(ow, m.shape[1])
        t[:h, :w] = m[:h, :w]
        out.append(t)
    return out


def homography_is_sane(h: Homography, shape, max_scale: float = 4.0) -> bool:
    """Reject wildly distorting fits before warping a whole page."""
    try:
        corners = h.transform([(0, 0), (shape[1], 0), (0, shape[0]), (shape[1], shape[0])])
    except Exception:
        return False
    span = np.ptp(corners, axis=0)
    ratio = span / np.array([shape[1], shape[0]])
    return bool(np.all(ratio < max_scale) and np.all(ratio > 1 / max_scale))
