"""Text removal and lettering of translated text at the largest size that fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ._validation import check_gray_image, check_mask
from .exceptions import DoesNotFit, EmptyMask, RasterizerFailure
from .geometry import BoundingBox

MIN_FONT_SIZE = 6
_EPS = 1e-9


@dataclass(frozen=True)
class GlyphMetrics:
    """Advances in em units; a line box is ``line_height`` em tall."""

    narrow: float = 0.5
    wide: float = 1.0
    line_height: float = 1.2

    def __post_init__(self):
        if self.narrow <= 0 or self.wide <= 0 or self.line_height <= 0:
            raise ValueError("advances and line height must be positive")

    def advance(self, ch: str) -> float:
        return self.narrow if len(ch.encode("utf-8")) == 1 else self.wide

    def width(self, s: str) -> float:
        return sum(self.advance(c) for c in s)


@dataclass(frozen=True)
class PlacedLine:
    text: str
    x: float  # left edge of the first glyph cell
    top: float  # top of the line box
    baseline: float


@dataclass(frozen=True)
class LetteringPlan:
    font_size: int
    lines: tuple[PlacedLine, ...]
    rect: BoundingBox
    region: np.ndarray | None = field(default=None, compare=False, repr=False)
    metrics: GlyphMetrics = GlyphMetrics()
    overflow: bool = False


# ----------------------------------------------------------------------------
# cleaning


class CleanerInterface(Protocol):
    name: str

    def clean(self, img: np.ndarray, line_boxes: Sequence[BoundingBox], mask: np.ndarray) -> np.ndarray: ...


def _boxes_mask(shape, boxes) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for b in boxes:
        c = b.clamp(shape[1], shape[0])
        if c is not None:
            rs, cs = c.pixel_slices(shape[1], shape[0])
            out[rs, cs] = True
    return out


class FlatFillCleaner:
    """Paints text-line pixels inside the mask with the median background."""

    name = "flat"

    def clean(self, img, line_boxes, mask):
        img = check_gray_image(img)
        mask = check_mask(mask, img.shape)
        out = img.copy()
        if not line_boxes:
            return out
        lines = _boxes_mask(img.shape, line_boxes)
        target = lines & mask
        background = mask & ~lines
        source = img[background] if background.any() else img[mask]
        if source.size == 0:
            return out
        out[target] = np.uint8(np.median(source))
        return out


def clean_text(img, line_boxes: Sequence[BoundingBox], mask, cleaner: CleanerInterface | None = None) -> np.ndarray:
    return (cleaner or FlatFillCleaner()).clean(img, list(line_boxes), mask)


# ----------------------------------------------------------------------------
# feasible area


def inscribed_rect(mask) -> BoundingBox:
    """Largest axis-aligned rectangle of True pixels.

    Row by row, column heights form a histogram whose largest rectangle is
    found with a stack. Among equal areas the one found first (lowest bottom
    row, then leftmost) wins.
    """
    mask = check_mask(mask)
    if not mask.any():
        raise EmptyMask("mask is empty")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    oy, ox = int(rows[0]), int(cols[0])
    mask = mask[oy : rows[-1] + 1, ox : cols[-1] + 1]
    h, w = mask.shape
    heights = np.zeros(w + 1, dtype=np.int64)
    best = (0, 0, 0, 0, 0)  # area, x, y, w, h
    for y in range(h):
        heights[:w] = np.where(mask[y], heights[:w] + 1, 0)
        stack: list[int] = []
        row = heights.tolist()
        for x in range(w + 1):
            while stack and row[stack[-1]] >= row[x]:
                top = stack.pop()
                height = row[top]
                left = stack[-1] + 1 if stack else 0
                area = height * (x - left)
                if area > best[0]:
                    best = (area, left, y - height + 1, x - left, height)
            stack.append(x)
    _, x, y, bw, bh = best
    return BoundingBox(x + ox, y + oy, bw, bh)


# ----------------------------------------------------------------------------
# planning


def wrap_text(text: str, max_width_em: float, metrics: GlyphMetrics = GlyphMetrics()) -> list[str] | None:
    """Greedy wrap at whitespace, splitting over-long words per character.

    Returns ``None`` when a single character is wider than the line.
    """
    limit = max_width_em + _EPS
    lines: list[str] = []
    cur = ""
    for word in text.split():
        cand = f"{cur} {word}" if cur else word
        if metrics.width(cand) <= limit:
            cur = cand
            continue
        if cur:
            lines.append(cur)
            cur = ""
        if metrics.width(word) <= limit:
            cur = word
            continue
        for ch in word:
            if metrics.advance(ch) > limit:
                return None
            if metrics.width(cur + ch) <= limit:
                cur += ch
            else:
                lines.append(cur)
                cur = ch
    if cur:
        lines.append(cur)
    return lines


def layout_at(text: str, size: int, rect: BoundingBox, metrics: GlyphMetrics = GlyphMetrics()) -> list[str] | None:
    """Wrapped lines if ``text`` fits ``rect`` at ``size`` px, else ``None``."""
    lines = wrap_text(text, rect.w / size, metrics)
    if lines is None:
        return None
    if len(lines) * metrics.line_height * size > rect.h + _EPS:
        return None
    return lines


def _place(lines, size, rect, metrics) -> tuple[PlacedLine, ...]:
    lh = metrics.line_height * size
    top = rect.y + (rect.h - lh * len(lines)) / 2
    out = []
    for i, s in enumerate(lines):
        x = rect.x + (rect.w - metrics.width(s) * size) / 2
        t = top + i * lh
        out.append(PlacedLine(s, x, t, t + size))
    return tuple(out)


def plan_lettering(
    text: str, mask, metrics: GlyphMetrics = GlyphMetrics(), *, strict: bool = False
) -> LetteringPlan:
    """Largest integer font size in ``[6, rect height]`` whose wrap fits.

    The feasible area is the largest inscribed rectangle of ``mask``. Lines
    are centered horizontally, the block vertically. If size 6 does not fit,
    a size-6 plan flagged ``overflow`` is returned (``strict`` raises
    :class:`DoesNotFit` instead).
    """
    if not text or not text.strip():
        raise ValueError("text must be non-empty")
    mask = check_mask(mask)
    rect = inscribed_rect(mask)
    lo, hi = MIN_FONT_SIZE, int(rect.h)
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        lines = layout_at(text, mid, rect, metrics)
        if lines is not None:
            best = (mid, lines)
            lo = mid + 1
        else:
            hi = mid - 1
    if best is None:
        if strict:
            raise DoesNotFit(f"text of {len(text)} chars does not fit {rect.w}x{rect.h} at size {MIN_FONT_SIZE}")
        lines = wrap_text(text, rect.w / MIN_FONT_SIZE, metrics) or list(text.split() or [text])
        return LetteringPlan(MIN_FONT_SIZE, _place(lines, MIN_FONT_SIZE, rect, metrics), rect, mask, metrics, True)
    size, lines = best
    return LetteringPlan(size, _place(lines, size, rect, metrics), rect, mask, metrics)


# ----------------------------------------------------------------------------
# rendering


def glyph_cells(plan: LetteringPlan) -> list[tuple[float, float, float, float]]:
    """``(x0, y0, x1, y1)`` of every non-space glyph cell in the plan."""
    m, s = plan.metrics, plan.font_size
    pad = (m.line_height - 1) * s / 2
    cells = []
    for line in plan.lines:
        x = line.x
        for ch in line.text:
            adv = m.advance(ch) * s
            if not ch.isspace():
                cells.append((x, line.top + pad, x + adv, line.top + pad + s))
            x += adv
    return cells


class RasterizerInterface(Protocol):
    name: str

    def coverage(self, plan: LetteringPlan, shape: tuple[int, int]) -> np.ndarray: ...


class BoxGlyphRasterizer:
    """Each glyph is a filled rectangle inset in its cell. Font-free."""

    name = "box"

    def __init__(self, inset: float = 0.1):
        self.inset = inset

    def coverage(self, plan, shape):
        out = np.zeros(shape, dtype=bool)
        for x0, y0, x1, y1 in glyph_cells(plan):
            dx, dy = (x1 - x0) * self.inset, (y1 - y0) * self.inset
            c0, c1 = math.ceil(x0 + dx), math.floor(x1 - dx)
            r0, r1 = math.ceil(y0 + dy), math.floor(y1 - dy)
            c0, r0 = max(c0, 0), max(r0, 0)
            c1, r1 = min(c1, shape[1]), min(r1, shape[0])
            if c1 > c0 and r1 > r0:
                out[r0:r1, c0:c1] = True
        return out


class PilFontRasterizer:
    """Draws real glyphs with a TrueType font through Pillow."""

    name = "pil"

    def __init__(self, font_path: str | None = None):
        self.font_path = font_path or "DejaVuSans.ttf"

    def coverage(self, plan, shape):
        from PIL import Image, ImageDraw, ImageFont

        try:
            font = ImageFont.truetype(self.font_path, plan.font_size)
        except OSError as exc:
            raise RasterizerFailure(f"cannot load font {self.font_path}: {exc}") from exc
        canvas = Image.new("L", (shape[1], shape[0]), 0)
        draw = ImageDraw.Draw(canvas)
        for line in plan.lines:
            draw.text((line.x, line.baseline), line.text, fill=255, font=font, anchor="ls")
        return np.asarray(canvas) >= 128


def render_lettering(img, plan: LetteringPlan, rasterizer: RasterizerInterface | None = None, ink: int = 0) -> np.ndarray:
    """Draw the plan's lines; pixels outside the plan's region never change."""
    img = check_gray_image(img)
    rasterizer = rasterizer or BoxGlyphRasterizer()
    out = img.copy()
    if not plan.lines:
        return out
    try:
        cov = np.asarray(rasterizer.coverage(plan, img.shape))
    except RasterizerFailure:
        raise
    except Exception as exc:
        raise RasterizerFailure(f"{getattr(rasterizer, 'name', rasterizer)!s}: {exc}") from exc
    if cov.shape != img.shape:
        raise RasterizerFailure(f"coverage shape {cov.shape} does not match image {img.shape}")
    cov = cov.astype(bool)
    if plan.region is not None:
        cov &= check_mask(plan.region, img.shape)
    out[cov] = np.uint8(ink)
    return out


def typeset_region(
    img,
    text: str,
    mask,
    line_boxes: Sequence[BoundingBox] = (),
    *,
    metrics: GlyphMetrics = GlyphMetrics(),
    cleaner: CleanerInterface | None = None,
    rasterizer: RasterizerInterface | None = None,
) -> tuple[np.ndarray, LetteringPlan]:
    """Clean the source lines, then letter ``text`` into ``mask``."""
    cleaned = clean_text(img, line_boxes, mask, cleaner)
    plan = plan_lettering(text, mask, metrics)
    return render_lettering(cleaned, plan, rasterizer), plan
