"""Box algebra, projective transforms and robust homography fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateConfiguration, NoModel, PointAtInfinity

_W_EPS = 1e-12


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box ``[x, y, w, h]`` in pixels, origin top-left."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1, y1, x2, y2) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @classmethod
    def enclosing(cls, boxes: Iterable["BoundingBox"]) -> "BoundingBox":
        boxes = list(boxes)
        if not boxes:
            raise ValueError("cannot enclose an empty set of boxes")
        return cls.from_corners(
            min(b.x for b in boxes),
            min(b.y for b in boxes),
            max(b.x2 for b in boxes),
            max(b.y2 for b in boxes),
        )

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    @property
    def top_right(self) -> tuple[float, float]:
        return (self.x2, self.y)

    def as_list(self) -> list:
        return [self.x, self.y, self.w, self.h]

    def intersection_area(self, other: "BoundingBox") -> float:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        if iw <= 0 or ih <= 0:
            return 0.0
        return iw * ih

    def intersects(self, other: "BoundingBox") -> bool:
        return self.intersection_area(other) > 0

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px < self.x2 and self.y <= py < self.y2

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def scale(self, s: float) -> "BoundingBox":
        return BoundingBox(self.x * s, self.y * s, self.w * s, self.h * s)

    def clamp(self, width: float, height: float) -> "BoundingBox | None":
        """Clip to ``[0, width] x [0, height]``; ``None`` if nothing is left."""
        x1, y1 = max(self.x, 0), max(self.y, 0)
        x2, y2 = min(self.x2, width), min(self.y2, height)
        if x2 <= x1 or y2 <= y1:
            return None
        return BoundingBox.from_corners(x1, y1, x2, y2)

    def pixel_slices(self, width: int, height: int) -> tuple[slice, slice]:
        """Row/column slices of the integer pixels covered by the box."""
        x1 = max(int(math.floor(self.x)), 0)
        y1 = max(int(math.floor(self.y)), 0)
        x2 = min(int(math.ceil(self.x2)), width)
        y2 = min(int(math.ceil(self.y2)), height)
        return slice(y1, max(y1, y2)), slice(x1, max(x1, x2))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union with continuous (real) areas."""
    inter = a.intersection_area(b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


class Correspondence(NamedTuple):
    src: tuple[float, float]
    dst: tuple[float, float]


class Homography:
    """3x3 projective transform, normalized so that ``m[2, 2] == 1`` when possible."""

    __slots__ = ("m",)

    def __init__(self, m):
        m = np.array(m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise DegenerateConfiguration("homography has non-finite entries")
        if abs(m[2, 2]) > _W_EPS:
            m = m / m[2, 2]
        scale = np.abs(m).max()
        if scale == 0 or abs(np.linalg.det(m)) <= 1e-12 * scale**3:
            raise DegenerateConfiguration("homography is singular")
        m.setflags(write=False)
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls([[1, 0, tx], [0, 1, ty], [0, 0, 1]])

    @classmethod
    def scaling(cls, sx: float, sy: float | None = None) -> "Homography":
        return cls(np.diag([sx, sx if sy is None else sy, 1.0]))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m)

    def __repr__(self):
        return f"Homography({self.m.tolist()!r})"

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self.m, other.m)

    def __hash__(self):
        return hash(self.m.tobytes())

    def to_list(self) -> list[list[float]]:
        return self.m.tolist()

    def transform(self, points) -> np.ndarray:
        """Vectorized version of :func:`apply_homography` for an ``(n, 2)`` array."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        hom = np.c_[pts, np.ones(len(pts))] @ self.m.T
        w = hom[:, 2]
        if np.any(np.abs(w) < _W_EPS):
            raise PointAtInfinity("a point maps to infinity")
        return hom[:, :2] / w[:, None]

    def transform_box(self, box: BoundingBox) -> BoundingBox:
        """Bounding box of the four transformed corners."""
        corners = [(box.x, box.y), (box.x2, box.y), (box.x, box.y2), (box.x2, box.y2)]
        t = self.transform(corners)
        return BoundingBox.from_corners(t[:, 0].min(), t[:, 1].min(), t[:, 0].max(), t[:, 1].max())


def apply_homography(h: Homography, p) -> tuple[float, float]:
    x, y = p
    u = h.m @ np.array([x, y, 1.0])
    if abs(u[2]) < _W_EPS:
        raise PointAtInfinity(f"point {p} maps to infinity")
    return (float(u[0] / u[2]), float(u[1] / u[2]))


def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d < 1e-15:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    t_src, t_dst = _normalizer(src), _normalizer(dst)
    s = np.c_[src, np.ones(len(src))] @ t_src.T
    d = np.c_[dst, np.ones(len(dst))] @ t_dst.T
    n = len(src)
    a = np.zeros((2 * n, 9))
    a[0::2, 0:3] = s
    a[0::2, 6:9] = -d[:, 0:1] * s
    a[1::2, 3:6] = s
    a[1::2, 6:9] = -d[:, 1:2] * s
    _, sv, vt = np.linalg.svd(a)
    # 8 independent constraints are needed for a unique null vector
    if len(sv) < 8 or sv[7] <= 1e-10 * sv[0]:
        raise DegenerateConfiguration("design matrix is rank deficient")
    hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(t_dst) @ hn @ t_src


def _as_arrays(corrs: Sequence[Correspondence]) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([c[0] for c in corrs], dtype=float).reshape(-1, 2)
    dst = np.array([c[1] for c in corrs], dtype=float).reshape(-1, 2)
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise ValueError("correspondences must have finite coordinates")
    return src, dst


def estimate_homography_dlt(corrs: Sequence[Correspondence]) -> Homography:
    """Least-squares projective fit (normalized DLT) mapping ``src`` onto ``dst``."""
    if len(corrs) < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {len(corrs)}")
    src, dst = _as_arrays(corrs)
    return Homography(_dlt(src, dst))


def reprojection_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    hom = np.c_[src, np.ones(len(src))] @ h.m.T
    w = hom[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = hom[:, :2] / w[:, None]
        err = np.sqrt(((proj - dst) ** 2).sum(axis=1))
    err[~np.isfinite(err) | (np.abs(w) < _W_EPS)] = np.inf
    return err


def _collinear(p: np.ndarray, tol: float = 1e-9) -> bool:
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = p[i], p[j], p[k]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        scale = max(np.abs(b - a).max(), np.abs(c - a).max(), 1.0)
        if abs(cross) <= tol * scale**2:
            return True
    return False


def _adaptive_iterations(inlier_ratio: float, confidence: float) -> int:
    p_good = inlier_ratio**4
    if p_good >= 1.0:
        return 1
    if p_good <= 0.0:
        return 1 << 62
    return int(math.ceil(math.log(1 - confidence) / math.log(1 - p_good)))


class RansacResult(NamedTuple):
    h: Homography
    inliers: frozenset[int]


def ransac_homography(
    corrs: Sequence[Correspondence],
    inlier_px: float = 1.5,
    iters: int = 1000,
    min_inliers: int = 50,
    rng: np.random.Generator | int | None = 0,
    confidence: float | None = 0.999,
) -> RansacResult | None:
    """Robust homography fit.

    Returns ``None`` (no model) when the best consensus set has
    ``<= min_inliers`` members; a pair is accepted only with *more than*
    ``min_inliers`` supporting correspondences. ``iters`` caps the number of
    4-point samples; with ``confidence`` set, sampling stops early once an
    all-inlier sample has been drawn with that probability.
    """
    if inlier_px <= 0:
        raise ValueError("inlier_px must be positive")
    if len(corrs) == 0:
        raise ValueError("no correspondences")
    n = len(corrs)
    if n < 4 or n <= min_inliers:
        return None
    rng = np.random.default_rng(rng)
    src, dst = _as_arrays(corrs)

    best: np.ndarray | None = None
    best_count = 0
    needed = iters
    done = 0
    while done < min(iters, needed):
        done += 1
        idx = rng.choice(n, size=4, replace=False)
        if _collinear(src[idx]) or _collinear(dst[idx]):
            continue
        try:
            h = Homography(_dlt(src[idx], dst[idx]))
        except DegenerateConfiguration:
            continue
        mask = reprojection_errors(h, src, dst) < inlier_px
        count = int(mask.sum())
        if count > best_count:
            best, best_count = mask, count
            if count == n:
                break
            if confidence is not None and count > min_inliers:
                needed = _adaptive_iterations(count / n, confidence)
    if best is None or best_count <= min_inliers:
        return None

    try:
        h = Homography(_dlt(src[best], dst[best]))
    except DegenerateConfiguration:
        return None
    refit = reprojection_errors(h, src, dst) < inlier_px
    if refit.sum() < best_count:
        # the refit drifted; fall back to the consensus set it was fitted on
        refit = best
    if refit.sum() <= min_inliers:
        return None
    return RansacResult(h, frozenset(np.flatnonzero(refit).tolist()))


class RansacHomography(BaseEstimator):
    """Estimator wrapper around :func:`ransac_homography`.

    ``fit(src_points, dst_points)`` raises :class:`NoModel` when the
    consensus gate is not passed; ``predict`` maps points through the
    fitted transform.
    """

    def __init__(self, inlier_px=1.5, iters=1000, min_inliers=50, random_state=0):
        self.inlier_px = inlier_px
        self.iters = iters
        self.min_inliers = min_inliers
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        if len(X) != len(y):
            raise ValueError("X and y must have the same number of points")
        corrs = [Correspondence(tuple(a), tuple(b)) for a, b in zip(X, y)]
        res = ransac_homography(
            corrs, self.inlier_px, self.iters, self.min_inliers, self.random_state
        )
        if res is None:
            raise NoModel(f"fewer than {self.min_inliers + 1} inliers")
        self.homography_ = res.h
        self.inlier_mask_ = np.zeros(len(X), dtype=bool)
        self.inlier_mask_[sorted(res.inliers)] = True
        self.n_inliers_ = len(res.inliers)
        return self

    def predict(self, X):
        check_is_fitted(self, "homography_")
        return self.homography_.transform(X)
