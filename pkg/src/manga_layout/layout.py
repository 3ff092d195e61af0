"""Reading order and scene grouping for manga pages.

A page is read row by row from the top; each row is read column by column
from the right, and both rules recurse. Frames are split on empty bands
between their boxes (an XY-cut over frame rectangles). Texts inherit the
order of the frame they overlap most, and inside a frame they are read by
distance from the frame's top-right corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import NoFrames, TaggerUnavailable, UnassignedScene
from .geometry import BoundingBox, iou
from .page import FrameBox, Page, SceneTagSet, canonical_tag

MIN_GAP = 1.0


@dataclass
class LayoutTree:
    kind: str  # "row-split" | "column-split" | "leaf"
    frame: int | None = None
    children: list["LayoutTree"] = field(default_factory=list)
    irregular: bool = False

    def leaves(self) -> list[int]:
        if self.kind == "leaf":
            return [self.frame]
        return [i for c in self.children for i in c.leaves()]

    def has_irregular(self) -> bool:
        return self.irregular or any(c.has_irregular() for c in self.children)

    def to_dict(self) -> dict:
        if self.kind == "leaf":
            return {"kind": "leaf", "frame": self.frame}
        return {
            "kind": self.kind,
            "irregular": self.irregular,
            "children": [c.to_dict() for c in self.children],
        }


def _bands(intervals: list[tuple[float, float, int]], min_gap: float) -> list[list[int]]:
    """Group items whose 1-D extents are separated by gaps of at least ``min_gap``."""
    intervals = sorted(intervals)
    groups: list[list[int]] = []
    end = -math.inf
    for lo, hi, idx in intervals:
        if not groups or lo - end < min_gap:
            if groups:
                groups[-1].append(idx)
            else:
                groups.append([idx])
            end = max(end, hi)
        else:
            groups.append([idx])
            end = hi
    return groups


def _xy_cut(boxes: Sequence[BoundingBox], idx: list[int], min_gap: float) -> LayoutTree:
    if len(idx) == 1:
        return LayoutTree("leaf", frame=idx[0])
    rows = _bands([(boxes[i].y, boxes[i].y2, i) for i in idx], min_gap)
    if len(rows) > 1:
        # already top to bottom
        return LayoutTree("row-split", children=[_xy_cut(boxes, r, min_gap) for r in rows])
    cols = _bands([(boxes[i].x, boxes[i].x2, i) for i in idx], min_gap)
    if len(cols) > 1:
        cols.reverse()  # right to left
        return LayoutTree("column-split", children=[_xy_cut(boxes, c, min_gap) for c in cols])
    fallback = sorted(idx, key=lambda i: (boxes[i].y, -boxes[i].x2, i))
    return LayoutTree(
        "row-split", children=[LayoutTree("leaf", frame=i) for i in fallback], irregular=True
    )


def order_frames(page: Page, min_gap: float = MIN_GAP) -> tuple[LayoutTree, list[int]]:
    """Recursive XY-cut over the frame boxes.

    Returns the layout tree and the frame indices in reading order. Regions
    that admit no gap (overlapping or interlocking frames) are ordered by
    top edge, then right edge descending, and flagged ``irregular``.
    """
    if not page.frames:
        raise NoFrames(f"page {page.id} has no frames")
    boxes = [f.box for f in page.frames]
    tree = _xy_cut(boxes, list(range(len(boxes))), min_gap)
    return tree, tree.leaves()


def _with_frame_order(page: Page, order: list[int]) -> Page:
    rank = {f: r for r, f in enumerate(order)}
    frames = tuple(replace(f, order=rank[i]) for i, f in enumerate(page.frames))
    return replace(page, frames=frames)


def _frame_ranks(page: Page) -> list[int]:
    if all(f.order is not None for f in page.frames):
        return [f.order for f in page.frames]
    _, order = order_frames(page)
    rank = [0] * len(order)
    for r, f in enumerate(order):
        rank[f] = r
    return rank


def assign_scenes(page: Page) -> Page:
    """Set each text's ``scene`` to the frame with maximal IoU.

    IoU ties go to the frame read earlier, then the lower index. A text that
    overlaps no frame falls back to the frame with the nearest center.
    """
    if not page.frames:
        raise NoFrames(f"page {page.id} has no frames")
    rank = _frame_ranks(page)
    texts = []
    for t in page.texts:
        scores = [iou(t.box, f.box) for f in page.frames]
        best = max(scores)
        if best > 0:
            cands = [i for i, s in enumerate(scores) if s == best]
            scene = min(cands, key=lambda i: (rank[i], i))
        else:
            cx, cy = t.box.center
            scene = min(
                range(len(page.frames)),
                key=lambda i: (math.dist((cx, cy), page.frames[i].box.center), i),
            )
        texts.append(replace(t, scene=scene))
    return page.with_texts(texts)


def order_texts(page: Page) -> Page:
    """Fill each text's ``order``: by frame reading order, then corner distance."""
    if any(t.scene is None for t in page.texts):
        raise UnassignedScene(f"page {page.id}: assign scenes before ordering texts")
    rank = _frame_ranks(page)

    def key(i):
        t = page.texts[i]
        fx, fy = page.frames[t.scene].box.top_right
        tx, ty = t.box.top_right
        return (rank[t.scene], math.hypot(tx - fx, ty - fy), ty, -tx, i)

    perm = sorted(range(len(page.texts)), key=key)
    order = [0] * len(perm)
    for r, i in enumerate(perm):
        order[i] = r
    return page.with_texts(replace(t, order=order[i]) for i, t in enumerate(page.texts))


def estimate_reading_order(page: Page, min_gap: float = MIN_GAP) -> tuple[Page, LayoutTree]:
    """Frame order, scene assignment and text order in one call."""
    tree, order = order_frames(page, min_gap)
    page = _with_frame_order(page, order)
    page = order_texts(assign_scenes(page))
    return page, tree


class ReadingOrderEstimator(TransformerMixin, BaseEstimator):
    """Stateless transformer: a list of pages in, ordered pages out.

    After ``transform`` the ``irregular_`` attribute lists ids of pages whose
    layout needed the fallback ordering.
    """

    def __init__(self, min_gap=MIN_GAP):
        self.min_gap = min_gap

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        out, irregular = [], []
        for page in X:
            ordered, tree = estimate_reading_order(page, self.min_gap)
            if tree.has_irregular():
                irregular.append(page.id)
            out.append(ordered)
        self.irregular_ = irregular
        return out


class TaggerInterface(Protocol):
    name: str

    def tags(self, image_crop, frame: FrameBox | None = None) -> set[str]: ...


class FixtureTagger:
    """Returns the tags recorded on the frame annotation."""

    name = "fixture"

    def tags(self, image_crop, frame=None):
        if frame is None:
            raise TaggerUnavailable("fixture tagger needs the annotated frame")
        return set(frame.tags)


class ConstantTagger:
    name = "constant"

    def __init__(self, tags=()):
        self._tags = {canonical_tag(t) for t in tags}

    def tags(self, image_crop, frame=None):
        return set(self._tags)


def predict_scene_tags(tagger, image, frame: FrameBox, scene: int = 0) -> SceneTagSet:
    """Run ``tagger`` on the frame crop; tags come back sorted."""
    if tagger is None:
        raise TaggerUnavailable("no tagger configured")
    crop = None
    if image is not None:
        img = np.asarray(image)
        rows, cols = frame.box.pixel_slices(img.shape[1], img.shape[0])
        crop = img[rows, cols]
    return SceneTagSet(scene, tuple(tagger.tags(crop, frame)))
