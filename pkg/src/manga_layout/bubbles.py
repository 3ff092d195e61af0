"""Speech-bubble masks, rule-based text lines, and splitting of joined bubbles."""

from __future__ import annotations

import math
import statistics
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from ._validation import check_gray_image, check_mask
from .exceptions import EmptyMask, NoSeparatingCut
from .geometry import BoundingBox
from .vision import CANNY_HIGH, CANNY_LOW, canny_edges, connected_components, meanshift_1d

BOX_DILATION = 0.10
MIN_OVERLAP = 0.05
BLANK_LEVEL = 128
RUBY_RATIO = 0.5


def dilate_box(box: BoundingBox, frac: float, width: int, height: int) -> BoundingBox:
    dx, dy = box.w * frac, box.h * frac
    grown = BoundingBox(box.x - dx, box.y - dy, box.w + 2 * dx, box.h + 2 * dy)
    return grown.clamp(width, height) or box


def estimate_bubble_mask(
    img,
    box: BoundingBox,
    *,
    low: float = CANNY_LOW,
    high: float = CANNY_HIGH,
    dilation: float = BOX_DILATION,
    blank_level: int = BLANK_LEVEL,
    min_overlap: float = MIN_OVERLAP,
    fill_holes: bool = True,
) -> np.ndarray:
    """Page-sized mask of the blank bubble interior around ``box``.

    Canny runs on the box grown by ``dilation`` on every side; the 4-connected
    component of non-edge, non-dark pixels sharing the most area with the
    original box wins, plus the bright edge pixels bordering it. Holes left by the lettering are filled so the mask
    covers the text it encloses.
    """
    img = check_gray_image(img)
    h, w = img.shape
    clamped = box.clamp(w, h)
    if clamped is None:
        raise EmptyMask(f"box {box.as_list()} lies outside the image")
    region = dilate_box(clamped, dilation, w, h)
    rs, cs = region.pixel_slices(w, h)
    crop = img[rs, cs]
    edges = canny_edges(crop, low, high)
    blank = ~edges & (crop >= blank_level)
    comps = connected_components(blank, 4)

    brs, bcs = clamped.pixel_slices(w, h)
    inner = comps.labels[brs.start - rs.start : brs.stop - rs.start, bcs.start - cs.start : bcs.stop - cs.start]
    overlap = np.bincount(inner.ravel(), minlength=comps.count + 1)
    overlap[0] = 0
    best = int(np.argmax(overlap))
    if best == 0 or overlap[best] < min_overlap * clamped.area:
        raise EmptyMask(f"no blank component covers {min_overlap:.0%} of box {box.as_list()}")
    local = comps.labels == best
    # edge pixels sit on either side of a step; bright ones touching the
    # component belong to it
    local |= ndimage.binary_dilation(local) & edges & (crop >= blank_level)
    if fill_holes:
        local = ndimage.binary_fill_holes(local)
    mask = np.zeros((h, w), dtype=bool)
    mask[rs, cs] = local
    return mask


def mask_bbox(mask) -> BoundingBox | None:
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return None
    return BoundingBox.from_corners(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def _runs(active: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open ``(start, stop)`` pairs."""
    padded = np.r_[False, active, False].astype(np.int8)
    d = np.diff(padded)
    return list(zip(np.flatnonzero(d == 1).tolist(), np.flatnonzero(d == -1).tolist()))


def detect_text_lines_rule(
    region_img,
    orientation: str = "vertical",
    *,
    mask=None,
    erode: int = 2,
    low: float = CANNY_LOW,
    high: float = CANNY_HIGH,
    ruby_ratio: float = RUBY_RATIO,
    ink_level: int = BLANK_LEVEL,
) -> list[BoundingBox]:
    """Text lines from edge projections, with narrow (ruby) candidates dropped.

    A pixel column (``"vertical"``) or row (``"horizontal"``) is active when
    it holds any edge pixel. Maximal active runs, cut where the run has a
    gap along the line longer than its own width, are the candidates. A
    candidate's width is the number of its columns holding ink (pixels below
    ``ink_level``); one narrower than ``ruby_ratio`` times the widest is
    removed.
    Survivors are tightened to the extent of their edge pixels. With
    ``mask``, pixels outside the (eroded) mask are blanked first so the
    bubble outline does not register. Boxes are in ``region_img`` coordinates
    and sorted along the scan axis.
    """
    if orientation not in ("vertical", "horizontal"):
        raise ValueError("orientation must be 'vertical' or 'horizontal'")
    img = check_gray_image(region_img, "region_img")
    if mask is not None:
        mask = check_mask(mask, img.shape)
        inside = ndimage.binary_erosion(mask, iterations=erode) if erode > 0 else mask
        if not inside.any():
            return []
        fill = np.uint8(np.median(img[inside]))
        img = np.where(inside, img, fill).astype(np.uint8)
    edges = canny_edges(img, low, high)
    if not edges.any():
        return []
    # work with lines as columns; transpose for horizontal text
    work = edges if orientation == "vertical" else edges.T
    ink = (img if orientation == "vertical" else img.T) < ink_level
    cands = sorted(_line_segments(work, 0, work.shape[1], 0, work.shape[0]))
    # edge runs overshoot the stroke by a pixel; widths come from the ink
    widths = [int(ink[lo:hi, a:b].any(axis=0).sum()) or (b - a) for a, b, lo, hi in cands]
    widest = max(widths)
    out = []
    for (a, b, lo, hi), width in zip(cands, widths):
        # strict inequality removes, so exactly half the widest survives
        if width < ruby_ratio * widest:
            continue
        if orientation == "vertical":
            out.append(BoundingBox.from_corners(a, lo, b, hi))
        else:
            out.append(BoundingBox.from_corners(lo, a, hi, b))
    return out


def _line_segments(e: np.ndarray, c0: int, c1: int, r0: int, r1: int) -> list[tuple[int, int, int, int]]:
    """Column-like lines in ``e[r0:r1, c0:c1]`` as ``(col0, col1, row0, row1)``.

    Each active column run is cut wherever its rows hold a gap wider than a
    typical line (the median width of the column runs found within each
    row run); pieces whose own column profile differs are analysed again,
    so stacked paragraphs sharing columns come apart.
    """
    out = []
    for a, b in _runs(e[r0:r1, c0:c1].any(axis=0)):
        width = b - a
        rows = _runs(e[r0:r1, c0 + a : c0 + b].any(axis=1))
        sub = [
            q - p
            for s, t in rows
            for p, q in _runs(e[r0 + s : r0 + t, c0 + a : c0 + b].any(axis=0))
        ]
        line_w = statistics.median(sub) if sub else width
        pieces: list[list[int]] = []
        for s, t in rows:
            if pieces and s - pieces[-1][1] <= line_w:
                pieces[-1][1] = t
            else:
                pieces.append([s, t])
        for s, t in pieces:
            cols = _runs(e[r0 + s : r0 + t, c0 + a : c0 + b].any(axis=0))
            if len(pieces) == 1 and cols == [(0, width)]:
                out.append((c0 + a, c0 + b, r0 + s, r0 + t))
            else:
                out.extend(_line_segments(e, c0 + a, c0 + b, r0 + s, r0 + t))
    return out


class Cut(NamedTuple):
    axis: str  # "h": the whole pixel row ``coord``; "v": the whole column
    coord: int
    length: int  # mask pixels on the cut


class SplitResult(NamedTuple):
    masks: list[np.ndarray]
    groups: list[list[int]]  # line indices per output mask
    cuts: list[Cut]
    flags: frozenset[str]


def cluster_lines(
    lines: Sequence[BoundingBox], *, x_fallback: bool = False
) -> list[list[int]]:
    """Group lines into paragraphs by the top coordinate (flat mean shift).

    Bandwidth is half the median line height. With ``x_fallback`` a single
    y-cluster whose lines split into x-bands with a gap wider than the
    median line width is re-clustered on x instead.
    """
    if not lines:
        return []
    bw = 0.5 * statistics.median(l.h for l in lines)
    labels = meanshift_1d([l.y for l in lines], bw)
    k = max(labels) + 1
    groups = [[i for i, lab in enumerate(labels) if lab == c] for c in range(k)]
    if k == 1 and x_fallback and len(lines) > 1:
        xs = sorted(range(len(lines)), key=lambda i: lines[i].x)
        wide_gap = statistics.median(l.w for l in lines)
        groups, cur = [], [xs[0]]
        for prev, nxt in zip(xs, xs[1:]):
            if lines[nxt].x - lines[prev].x2 > wide_gap:
                groups.append(cur)
                cur = []
            cur.append(nxt)
        groups.append(cur)
        groups.reverse()  # right to left
    return groups


def _pixel_span(lo: float, hi: float) -> tuple[int, int]:
    return int(math.floor(lo)), int(math.ceil(hi))


def candidate_cuts(a: BoundingBox, b: BoundingBox) -> list[tuple[str, int, float]]:
    """Every row/column lying strictly between the two boxes, with the gap midpoint."""
    out = []
    for axis, lo_a, hi_a, lo_b, hi_b in (
        ("h", a.y, a.y2, b.y, b.y2),
        ("v", a.x, a.x2, b.x, b.x2),
    ):
        (a0, a1), (b0, b1) = _pixel_span(lo_a, hi_a), _pixel_span(lo_b, hi_b)
        if a1 <= b0:
            lo, hi = a1, b0
        elif b1 <= a0:
            lo, hi = b1, a0
        else:
            continue
        mid = (lo + hi - 1) / 2
        out.extend((axis, c, mid) for c in range(lo, hi))
    return out


def _cut_pixels(shape, cut_axis: str, coord: int):
    if cut_axis == "h":
        return (slice(coord, coord + 1), slice(None))
    return (slice(None), slice(coord, coord + 1))


def _line_label(labels: np.ndarray, line: BoundingBox) -> int:
    rs, cs = line.pixel_slices(labels.shape[1], labels.shape[0])
    vals = labels[rs, cs].ravel()
    vals = vals[vals > 0]
    if len(vals) == 0:
        return 0
    return int(np.bincount(vals).argmax())


def _separates(mask: np.ndarray, cut_axis: str, coord: int, la, lb) -> bool:
    work = mask.copy()
    work[_cut_pixels(mask.shape, cut_axis, coord)] = False
    labels = connected_components(work, 4).labels
    sa = {_line_label(labels, l) for l in la} - {0}
    sb = {_line_label(labels, l) for l in lb} - {0}
    return bool(sa) and bool(sb) and not (sa & sb)


def split_connected_bubble(
    mask, lines: Sequence[BoundingBox], *, x_fallback: bool = False
) -> SplitResult:
    """Split a bubble mask into one mask per paragraph with minimal cuts.

    Between each pair of paragraph clusters adjacent in reading order, every
    full row/column strictly between their line boxes is a candidate; the
    separating candidate crossing the fewest mask pixels is applied (ties:
    closest to the middle of the gap, rows before columns). Cut pixels
    belong to no output.
    """
    mask = check_mask(mask)
    lines = list(lines)
    groups = cluster_lines(lines, x_fallback=x_fallback)
    if len(groups) <= 1:
        return SplitResult([mask.copy()], [list(range(len(lines)))], [], frozenset())

    flags = set()
    work = mask.copy()
    cuts = []
    for ga, gb in zip(groups, groups[1:]):
        la, lb = [lines[i] for i in ga], [lines[i] for i in gb]
        box_a, box_b = BoundingBox.enclosing(la), BoundingBox.enclosing(lb)
        best = None
        for cut_axis, coord, mid in candidate_cuts(box_a, box_b):
            limit = mask.shape[0] if cut_axis == "h" else mask.shape[1]
            if not 0 <= coord < limit:
                continue
            length = int(mask[_cut_pixels(mask.shape, cut_axis, coord)].sum())
            key = (length, abs(coord - mid), cut_axis != "h", coord)
            if best is not None and key >= best[0]:
                continue
            if _separates(mask, cut_axis, coord, la, lb):
                best = (key, Cut(cut_axis, coord, length))
        if best is None:
            flags.add("no_separating_cut")
            continue
        cuts.append(best[1])
        work[_cut_pixels(mask.shape, best[1].axis, best[1].coord)] = False

    if not cuts:
        return SplitResult([mask.copy()], [list(range(len(lines)))], [], frozenset(flags))

    labels = connected_components(work, 4).labels
    comp_sets = [{_line_label(labels, lines[i]) for i in g} - {0} for g in groups]
    # clusters sharing a component end up in one output
    merged: list[tuple[set[int], list[int]]] = []
    for comps, g in zip(comp_sets, groups):
        for entry in merged:
            if entry[0] & comps:
                entry[0].update(comps)
                entry[1].extend(g)
                flags.add("merged_clusters")
                break
        else:
            merged.append((set(comps), list(g)))
    masks = [np.isin(labels, sorted(c)) if c else np.zeros_like(mask) for c, _ in merged]
    return SplitResult(masks, [sorted(g) for _, g in merged], cuts, frozenset(flags))


def split_or_raise(mask, lines, **kw) -> SplitResult:
    """Like :func:`split_connected_bubble` but raises when a cut is missing."""
    res = split_connected_bubble(mask, lines, **kw)
    if "no_separating_cut" in res.flags:
        raise NoSeparatingCut("no straight cut separates the paragraphs")
    return res
