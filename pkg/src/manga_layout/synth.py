"""Seeded generator of synthetic bilingual manga volumes with ground truth.

Pages are nested row/column frame layouts filled with flat-shaded "art",
elliptical speech bubbles, and box glyphs standing in for characters:
vertical columns on the source side, horizontal lines on the target side.
The target edition is re-rendered with its own glyph boxes and warped by
a small perspective jitter, and carries extra cover pages. Every generated
quantity (frame order, text order, masks, strings) is recorded so tests
can compare against it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .align import warp_image
from .geometry import BoundingBox, Homography
from .imageio import write_image
from .page import FrameBox, Page, TextUnit, dumps_page

PAGE_W, PAGE_H = 480, 680
MARGIN = 16

# source glyphs: vertical columns
SRC_CELL = 14
SRC_GLYPH = 10
SRC_COL_GAP = 8
RUBY_GLYPH = 4
RUBY_GAP = 3
# target glyphs: horizontal lines
DST_CELL_W = 7
DST_GLYPH_W = 5
DST_GLYPH_H = 8
DST_PITCH = 14
BUBBLE_PAD = 7
OUTLINE = 3
MIN_NECK = 16

KANA = "あいうえおかきくけこさしすせそたちつてとなにぬねのはひふへほまみむめもやゆよらりるれろわをん"
WORDS = (
    "i you we it no yes what why now here go come see know want good bad run wait stop "
    "look this that my your time day night home love friend sorry thanks okay maybe never "
    "again still just too very right left back down up out one two all help"
).split()
FRAME_TAGS = ("1girl", "1boy", "2girls", "multiple_boys", "no_humans", "smile", "night", "outdoors")


def _rng(seed, *keys) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


# ----------------------------------------------------------------------------
# layouts


@dataclass
class _Node:
    kind: str  # "rows" | "cols" | "leaf"
    box: tuple[float, float, float, float]  # x1, y1, x2, y2
    children: list["_Node"] = field(default_factory=list)

    def leaves(self):
        if self.kind == "leaf":
            return [self]
        return [l for c in self.children for l in c.leaves()]


def _band_groups(boxes, lo_attr, hi_attr) -> list[frozenset]:
    """Indices of ``boxes`` grouped by gaps of at least one pixel on one axis."""
    iv = sorted((b[lo_attr], b[hi_attr], i) for i, b in enumerate(boxes))
    groups, end = [], -math.inf
    for lo, hi, i in iv:
        if groups and lo - end < 1:
            groups[-1].add(i)
        else:
            groups.append({i})
        end = max(end, hi) if len(groups[-1]) > 1 else hi
    return [frozenset(g) for g in groups]


def _split(rng, box, depth, min_w, min_h, want) -> _Node:
    x1, y1, x2, y2 = box
    w, h = x2 - x1, y2 - y1
    options = []
    gutter = int(rng.integers(8, 15))
    if h >= 2 * min_h + gutter:
        options.append("rows")
    if w >= 2 * min_w + gutter:
        options.append("cols")
    if depth >= 3 or not options or (depth > 0 and rng.random() < 0.3) or want <= 1:
        return _Node("leaf", box)
    kind = options[int(rng.integers(len(options)))]
    span = h if kind == "rows" else w
    min_span = min_h if kind == "rows" else min_w
    k_max = int((span + gutter) // (min_span + gutter))
    k = int(rng.integers(2, min(3, k_max) + 1))
    free = span - (k - 1) * gutter - k * min_span
    weights = rng.dirichlet(np.ones(k) * 2.0)
    sizes = [min_span + free * wt for wt in weights]
    children = []
    pos = y1 if kind == "rows" else x1
    for i, sz in enumerate(sizes):
        a, b = int(round(pos)), int(round(pos + sz))
        if i == k - 1:
            b = int(y2 if kind == "rows" else x2)
        cb = (x1, a, x2, b) if kind == "rows" else (a, y1, b, y2)
        children.append(_split(rng, cb, depth + 1, min_w, min_h, want // k + 1))
        pos = b + gutter
    if kind == "cols":
        children.reverse()  # reading order: right to left
    return _Node(kind, box, children)


def _consistent(node: _Node) -> bool:
    """True when a rows-first XY-cut reproduces this tree's reading order.

    At every node the gap partition of its frames along the split axis must
    be exactly its children (no gutter shared by several children's frames),
    and a column split must not also admit a row gap.
    """
    if node.kind == "leaf":
        return True
    leaves = node.leaves()
    boxes = [l.box for l in leaves]
    rows = _band_groups(boxes, 1, 3)
    if node.kind == "cols":
        if len(rows) > 1:
            return False
        bands = _band_groups(boxes, 0, 2)
    else:
        bands = rows
    pos = {id(l): i for i, l in enumerate(leaves)}
    children = {frozenset(pos[id(l)] for l in c.leaves()) for c in node.children}
    if set(bands) != children:
        return False
    return all(_consistent(c) for c in node.children)


def generate_frames(rng, width=PAGE_W, height=PAGE_H, min_w=150, min_h=150):
    """Frame rectangles (integer x1, y1, x2, y2) in reading order."""
    for _ in range(100):
        root = _split(
            rng, (MARGIN, MARGIN, width - MARGIN, height - MARGIN), 0, min_w, min_h,
            int(rng.integers(3, 8)),
        )
        if _consistent(root):
            return [tuple(int(v) for v in leaf.box) for leaf in root.leaves()]
    return [(MARGIN, MARGIN, width - MARGIN, height - MARGIN)]


def generate_layout_page(seed: int, index: int, width=PAGE_W, height=PAGE_H) -> Page:
    """Annotation-only page: frames plus text boxes, ground-truth order recorded.

    Frames are stored shuffled (the order is in ``FrameBox.order``), texts are
    shuffled too with their true reading position in ``TextUnit.order``.
    """
    rng = _rng(seed, 1, index)
    frames = generate_frames(rng, width, height, min_w=60, min_h=60)
    texts = []
    for f_rank, (x1, y1, x2, y2) in enumerate(frames):
        n = int(rng.integers(0, 4))
        fw, fh = x2 - x1, y2 - y1
        tw_max = max(8, (fw - 8) // max(n, 1) - 4)
        cur_x = x2 - 4
        cur_y = y1 + 4
        for _ in range(n):
            tw = int(rng.integers(max(4, tw_max // 2), tw_max + 1))
            th = int(rng.integers(8, max(9, fh // 2)))
            if cur_x - tw < x1 + 2 or cur_y + th > y2 - 2:
                break
            texts.append((BoundingBox(cur_x - tw, cur_y, tw, th), f_rank))
            cur_x -= tw + 4
            cur_y += int(rng.integers(0, 6))
    perm_f = rng.permutation(len(frames))
    frame_objs = [None] * len(frames)
    for new_pos, old in enumerate(perm_f):
        x1, y1, x2, y2 = frames[old]
        frame_objs[new_pos] = FrameBox(BoundingBox.from_corners(x1, y1, x2, y2), int(old))
    where = {int(old): new_pos for new_pos, old in enumerate(perm_f)}
    text_objs = [
        TextUnit(box, f"t{i}", order=i, scene=where[f_rank]) for i, (box, f_rank) in enumerate(texts)
    ]
    perm_t = rng.permutation(len(text_objs))
    text_objs = [text_objs[i] for i in perm_t]
    return Page(f"layout_{seed}_{index:04d}", "", (width, height), tuple(frame_objs), tuple(text_objs))


def generate_layouts(n: int, seed: int) -> list[Page]:
    return [generate_layout_page(seed, i) for i in range(n)]


# ----------------------------------------------------------------------------
# bubbles and glyphs


@dataclass
class Paragraph:
    src: str
    dst: str
    columns: list[str]
    block: tuple[int, int, int, int]  # x1, y1, x2, y2 of the source glyph block
    ruby: bool = False


def src_block_size(columns) -> tuple[int, int]:
    rows = max(len(c) for c in columns)
    return len(columns) * (SRC_CELL + SRC_COL_GAP) - SRC_COL_GAP, rows * SRC_CELL - (SRC_CELL - SRC_GLYPH)


def make_paragraph_text(rng, max_chars=10, per_col=None):
    n = int(rng.integers(3, max_chars + 1))
    src = "".join(KANA[int(i)] for i in rng.integers(0, len(KANA), n))
    per_col = per_col or int(rng.integers(3, 6))
    columns = [src[i : i + per_col] for i in range(0, n, per_col)]
    k = int(rng.integers(1, 4))
    dst = " ".join(WORDS[int(i)] for i in rng.integers(0, len(WORDS), k))
    return src, dst, columns


def _ellipse_for_block(x1, y1, x2, y2, pad=BUBBLE_PAD):
    cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
    a = ((x2 - x1) / 2 + pad) * math.sqrt(2)
    b = ((y2 - y1) / 2 + pad) * math.sqrt(2)
    return cx, cy, a, b


def _ellipse_bbox(cx, cy, a, b, grow=0.0):
    return [cx - a - grow, cy - b - grow, cx + a + grow, cy + b + grow]


def _rect(draw, x, y, w, h, fill):
    draw.rectangle([x, y, x + w - 1, y + h - 1], fill=fill)


def draw_src_glyphs(draw, para: Paragraph, ruby_boxes=None):
    """Vertical columns read right to left. Returns (text box, line boxes)."""
    x1, y1, x2, _ = para.block
    lines = []
    for ci, col in enumerate(para.columns):
        cx = x2 - SRC_CELL - ci * (SRC_CELL + SRC_COL_GAP)
        gx = cx + (SRC_CELL - SRC_GLYPH) // 2
        for ri, _ch in enumerate(col):
            _rect(draw, gx, y1 + ri * SRC_CELL, SRC_GLYPH, SRC_GLYPH, 0)
        lines.append(BoundingBox(gx, y1, SRC_GLYPH, len(col) * SRC_CELL - (SRC_CELL - SRC_GLYPH)))
        if para.ruby and ci == 0 and ruby_boxes is not None:
            rx = gx + SRC_GLYPH + RUBY_GAP
            for ri in range(min(2, len(col))):
                _rect(draw, rx, y1 + ri * SRC_CELL + 3, RUBY_GLYPH, RUBY_GLYPH, 0)
            ruby_boxes.append(BoundingBox(rx, y1 + 3, RUBY_GLYPH, SRC_CELL + RUBY_GLYPH))
    return BoundingBox.enclosing(lines), lines


def wrap_words(text: str, max_chars: int) -> list[str] | None:
    out, cur = [], ""
    for w in text.split():
        if len(w) > max_chars:
            return None
        cand = w if not cur else cur + " " + w
        if len(cand) <= max_chars:
            cur = cand
        else:
            out.append(cur)
            cur = w
    if cur:
        out.append(cur)
    return out


def dst_layout(text: str, region: tuple[int, int, int, int]):
    """Horizontal lines centered in ``region``; ``None`` if it does not fit."""
    x1, y1, x2, y2 = region
    max_chars = max(1, (x2 - x1) // DST_CELL_W)
    lines = wrap_words(text, max_chars)
    if lines is None:
        return None
    height = len(lines) * DST_PITCH - (DST_PITCH - DST_GLYPH_H)
    if height > y2 - y1:
        return None
    top = y1 + ((y2 - y1) - height) // 2
    out = []
    for i, ln in enumerate(lines):
        width = len(ln) * DST_CELL_W
        left = x1 + ((x2 - x1) - width) // 2
        out.append((ln, left, top + i * DST_PITCH))
    return out


def draw_dst_glyphs(draw, layout):
    lines = []
    for ln, left, top in layout:
        xs = [left + i * DST_CELL_W for i, ch in enumerate(ln) if ch != " "]
        for gx in xs:
            _rect(draw, gx, top, DST_GLYPH_W, DST_GLYPH_H, 0)
        lines.append(BoundingBox.from_corners(min(xs), top, max(xs) + DST_GLYPH_W, top + DST_GLYPH_H))
    return BoundingBox.enclosing(lines), lines


@dataclass
class Bubble:
    ellipses: list[tuple[float, float, float, float]]
    paragraphs: list[Paragraph]

    def outer_box(self) -> BoundingBox:
        xs1, ys1, xs2, ys2 = zip(*(_ellipse_bbox(*e, grow=OUTLINE) for e in self.ellipses))
        return BoundingBox.from_corners(
            math.floor(min(xs1)), math.floor(min(ys1)), math.ceil(max(xs2)) + 1, math.ceil(max(ys2)) + 1
        )


def draw_bubble_shape(draw, bubble: Bubble, mask_draw=None):
    for e in bubble.ellipses:
        draw.ellipse(_ellipse_bbox(*e, grow=OUTLINE), fill=0)
    for e in bubble.ellipses:
        draw.ellipse(_ellipse_bbox(*e), fill=255)
        if mask_draw is not None:
            mask_draw.ellipse(_ellipse_bbox(*e), fill=255)


def single_bubble(rng, x2, y1, max_chars=10) -> Bubble:
    """Bubble whose glyph block has its top-right corner at (x2, y1)."""
    src, dst, cols = make_paragraph_text(rng, max_chars)
    bw, bh = src_block_size(cols)
    para = Paragraph(src, dst, cols, (x2 - bw, y1, x2, y1 + bh), ruby=bool(rng.random() < 0.25))
    return Bubble([_ellipse_for_block(*para.block)], [para])


def double_bubble(rng, x2, y1) -> Bubble:
    """Two stacked paragraphs, the lower one shifted left, joined by a neck."""
    src_a, dst_a, cols_a = make_paragraph_text(rng, 8, per_col=4)
    src_b, dst_b, cols_b = make_paragraph_text(rng, 8, per_col=4)
    wa, ha = src_block_size(cols_a)
    wb, hb = src_block_size(cols_b)
    gap = int(rng.integers(22, 32))
    shift = int(rng.integers(0, 24))
    pa = Paragraph(src_a, dst_a, cols_a, (x2 - wa, y1, x2, y1 + ha))
    by1 = y1 + ha + gap
    pb = Paragraph(src_b, dst_b, cols_b, (x2 - shift - wb, by1, x2 - shift, by1 + hb))
    ea, eb = _ellipse_for_block(*pa.block), _ellipse_for_block(*pb.block)
    ellipses = [ea, eb]
    if _neck_width(ea, eb, y1 + ha, by1) < MIN_NECK:
        # thin overlap: bridge the gap with a small ellipse so the two
        # interiors stay visibly joined
        lo = max(pa.block[0], pb.block[0])
        hi = min(pa.block[2], pb.block[2])
        cx = (lo + hi) / 2 if hi > lo else (pa.block[0] + pb.block[2]) / 2
        ellipses.append((cx, y1 + ha + gap / 2, MIN_NECK, gap / 2 + 2 * BUBBLE_PAD))
    return Bubble(ellipses, [pa, pb])


def _chord(e, y):
    cx, cy, a, b = e
    t = 1 - ((y - cy) / b) ** 2
    if t <= 0:
        return None
    half = a * math.sqrt(t)
    return cx - half, cx + half


def _neck_width(ea, eb, y0, y1) -> float:
    """Widest row of the overlap of two ellipse interiors within ``[y0, y1)``."""
    best = 0.0
    for y in range(y0, y1):
        ca, cb = _chord(ea, y + 0.5), _chord(eb, y + 0.5)
        if ca is not None and cb is not None:
            best = max(best, min(ca[1], cb[1]) - max(ca[0], cb[0]))
    return best


def target_regions(bubble: Bubble) -> list[tuple[int, int, int, int]]:
    """Where each paragraph's target text goes.

    Stacked paragraphs are confined to their own side of the gap between the
    source blocks, so any straight cut inside the gap keeps them apart.
    """
    regions = [list(inscribed_block(e)) for e in bubble.ellipses[: len(bubble.paragraphs)]]
    if len(bubble.paragraphs) == 2:
        (_, _, _, a_y2), (_, b_y1, _, _) = bubble.paragraphs[0].block, bubble.paragraphs[1].block
        regions[0][3] = min(regions[0][3], a_y2)
        regions[1][1] = max(regions[1][1], b_y1)
    return [tuple(r) for r in regions]


def inscribed_block(e) -> tuple[int, int, int, int]:
    """Integer rectangle comfortably inside an ellipse (used for target text)."""
    cx, cy, a, b = e
    hw, hh = a / math.sqrt(2) - 2, b / math.sqrt(2) - 2
    return (int(math.ceil(cx - hw)), int(math.ceil(cy - hh)), int(cx + hw), int(cy + hh))


# ----------------------------------------------------------------------------
# standalone bubble fixtures


@dataclass
class BubbleFixture:
    image: np.ndarray
    box: BoundingBox  # bubble bounding box as a detector would report it
    interior: np.ndarray  # ground-truth interior mask
    lines: list[BoundingBox]  # ground-truth source text lines (ruby excluded)
    paragraphs: list[Paragraph]
    ruby: list[BoundingBox]


def render_bubble_fixture(seed: int, double: bool = False, ruby: bool | None = None,
                          size=(320, 260)) -> BubbleFixture:
    """One bubble on a textured background, with its ground truth."""
    rng = _rng(seed, 7, int(double))
    w, h = size
    img = Image.new("L", size, int(rng.integers(200, 240)))
    draw = ImageDraw.Draw(img)
    _paint_art(draw, rng, (0, 0, w, h), 10)
    if double:
        bub = double_bubble(rng, w - 50, 60)
    else:
        bub = single_bubble(rng, w - 90 - int(rng.integers(0, 40)), 50 + int(rng.integers(0, 30)))
    if ruby is not None:
        for p in bub.paragraphs:
            p.ruby = ruby
    mask_img = Image.new("L", size, 0)
    draw_bubble_shape(draw, bub, ImageDraw.Draw(mask_img))
    lines, ruby_boxes = [], []
    for p in bub.paragraphs:
        _, ls = draw_src_glyphs(draw, p, ruby_boxes)
        lines.extend(ls)
    return BubbleFixture(
        np.asarray(img).copy(), bub.outer_box().clamp(w, h), np.asarray(mask_img) > 0,
        lines, bub.paragraphs, ruby_boxes,
    )


def render_ruby_fixture(main_width: int, ruby_width: int, height: int = 70, gap: int = 6):
    """White region with one vertical main column and a ruby column to its right."""
    w = main_width + ruby_width + gap + 40
    img = Image.new("L", (w, height + 30), 255)
    draw = ImageDraw.Draw(img)
    for r in range(0, height - main_width + 1, main_width + 4):
        _rect(draw, 20, 15 + r, main_width, main_width, 0)
    for r in range(0, height - ruby_width + 1, ruby_width + 3):
        _rect(draw, 20 + main_width + gap, 15 + r, ruby_width, ruby_width, 0)
    return np.asarray(img).copy()


# ----------------------------------------------------------------------------
# volume pages


def _paint_art(draw, rng, box, n):
    x1, y1, x2, y2 = box
    for _ in range(n):
        kind = int(rng.integers(3))
        a = int(rng.integers(x1, max(x1 + 1, x2 - 10)))
        b = int(rng.integers(y1, max(y1 + 1, y2 - 10)))
        w = int(rng.integers(8, max(9, (x2 - x1) // 2)))
        h = int(rng.integers(8, max(9, (y2 - y1) // 2)))
        tone = int(rng.integers(40, 215))
        shape = [a, b, min(x2 - 1, a + w), min(y2 - 1, b + h)]
        if shape[2] <= shape[0] or shape[3] <= shape[1]:
            continue
        if kind == 0:
            draw.rectangle(shape, fill=tone)
        elif kind == 1:
            draw.ellipse(shape, fill=tone)
        else:
            pts = [(int(rng.integers(x1, x2)), int(rng.integers(y1, y2))) for _ in range(3)]
            draw.polygon(pts, fill=tone)


@dataclass
class GeneratedPage:
    src_image: np.ndarray
    dst_image: np.ndarray
    src_page: Page
    dst_page: Page
    homography: Homography  # maps source-page pixels to target-page pixels
    interiors: list[np.ndarray]  # ground-truth bubble interiors (source frame)


def _place_bubbles(rng, frame, allow_double):
    """Stair-stepped bubbles inside a frame, read right to left and downward."""
    x1, y1, x2, y2 = frame
    bubbles = []
    cur_x, cur_y = x2 - 14, y1 + 16
    for _ in range(int(rng.integers(1, 4))):
        for _attempt in range(6):
            make_double = allow_double and rng.random() < 0.3
            bx2 = cur_x - int(rng.integers(2, 14)) - BUBBLE_PAD * 2
            by1 = cur_y + int(rng.integers(0, 12)) + BUBBLE_PAD * 2
            bub = double_bubble(rng, bx2, by1) if make_double else single_bubble(rng, bx2, by1, 8)
            ob = bub.outer_box()
            if ob.x >= x1 + 6 and ob.y >= y1 + 6 and ob.x2 <= x2 - 6 and ob.y2 <= y2 - 6:
                bubbles.append(bub)
                cur_x = int(ob.x) - 4
                cur_y = by1 + int(rng.integers(0, 10))
                break
        else:
            break
    return bubbles


def random_jitter(rng, width, height) -> Homography:
    s = float(rng.uniform(0.96, 1.04))
    sy = s * float(rng.uniform(0.99, 1.01))
    tx, ty = float(rng.uniform(-8, 8)), float(rng.uniform(-8, 8))
    p1, p2 = float(rng.uniform(-2e-5, 2e-5)), float(rng.uniform(-2e-5, 2e-5))
    # perspective about the page center keeps the page roughly in place
    c = Homography.translation(width / 2, height / 2)
    persp = Homography([[1, 0, 0], [0, 1, 0], [p1, p2, 1]])
    return Homography.translation(tx, ty) @ c @ persp @ Homography.scaling(s, sy) @ c.inverse()


def generate_page(seed: int, index: int, volume: str = "vol") -> GeneratedPage:
    rng = _rng(seed, 2, index)
    frames = generate_frames(rng)
    src_img = Image.new("L", (PAGE_W, PAGE_H), 255)
    dst_img = Image.new("L", (PAGE_W, PAGE_H), 255)
    sd, dd = ImageDraw.Draw(src_img), ImageDraw.Draw(dst_img)
    frame_objs, src_texts, dst_texts, bubbles_out, interiors = [], [], [], [], []
    order = 0
    for f_rank, fr in enumerate(frames):
        x1, y1, x2, y2 = fr
        tags = tuple(sorted({FRAME_TAGS[int(i)] for i in rng.integers(0, len(FRAME_TAGS), int(rng.integers(0, 3)))}))
        frame_objs.append(FrameBox(BoundingBox.from_corners(x1, y1, x2, y2), f_rank, tags))
        bg = int(rng.integers(215, 245))
        art_seed = int(rng.integers(1 << 30))
        n_art = int(rng.integers(30, 50))
        for d in (sd, dd):
            d.rectangle([x1, y1, x2 - 1, y2 - 1], fill=0)
            d.rectangle([x1 + 2, y1 + 2, x2 - 3, y2 - 3], fill=bg)
            _paint_art(d, _rng(art_seed), (x1 + 2, y1 + 2, x2 - 3, y2 - 3), n_art)
        for bub in _place_bubbles(rng, fr, allow_double=True):
            mask_img = Image.new("L", (PAGE_W, PAGE_H), 0)
            draw_bubble_shape(sd, bub, ImageDraw.Draw(mask_img))
            draw_bubble_shape(dd, bub)
            interiors.append(np.asarray(mask_img) > 0)
            bubbles_out.append(bub.outer_box())
            for p, region in zip(bub.paragraphs, target_regions(bub)):
                tbox, lines = draw_src_glyphs(sd, p, [])
                lay = dst_layout(p.dst, region)
                while lay is None and " " in p.dst:
                    p.dst = p.dst.rsplit(" ", 1)[0]
                    lay = dst_layout(p.dst, region)
                if lay is None:
                    p.dst = p.dst[: max(1, (region[2] - region[0]) // DST_CELL_W)]
                    lay = dst_layout(p.dst, region)
                dbox, dlines = draw_dst_glyphs(dd, lay)
                src_texts.append(TextUnit(tbox, p.src, tuple(lines), order, f_rank))
                dst_texts.append(TextUnit(dbox, p.dst, tuple(dlines), order, f_rank))
                order += 1

    jitter = random_jitter(rng, PAGE_W, PAGE_H)
    dst_w = int(round(PAGE_W * float(rng.uniform(0.97, 1.03))))
    dst_h = int(round(PAGE_H * float(rng.uniform(0.97, 1.03))))
    dst_arr = warp_image(jitter, np.asarray(dst_img), (dst_h, dst_w))

    def mapped(box):
        return jitter.transform_box(box).clamp(dst_w, dst_h)

    pid = f"{volume}_{index:03d}"
    src_page = Page(pid, f"{pid}.png", (PAGE_W, PAGE_H), tuple(frame_objs), tuple(src_texts), tuple(bubbles_out))
    dst_page = Page(
        pid, f"{pid}.png", (dst_w, dst_h),
        tuple(FrameBox(mapped(f.box), f.order, f.tags) for f in frame_objs),
        tuple(TextUnit(mapped(t.box), t.content, tuple(mapped(l) for l in t.lines), t.order, t.scene) for t in dst_texts),
        tuple(mapped(b) for b in bubbles_out),
    )
    return GeneratedPage(np.asarray(src_img).copy(), dst_arr, src_page, dst_page, jitter, interiors)


def generate_cover(seed: int, index: int, volume: str = "vol"):
    rng = _rng(seed, 3, index)
    img = Image.new("L", (PAGE_W, PAGE_H), int(rng.integers(30, 120)))
    draw = ImageDraw.Draw(img)
    _paint_art(draw, rng, (0, 0, PAGE_W, PAGE_H), 40)
    for i in range(int(rng.integers(4, 9))):
        _rect(draw, 60 + i * 40, 40, 30, 50, 255)
    pid = f"{volume}_cover{index}"
    return np.asarray(img).copy(), Page(pid, f"{pid}.png", (PAGE_W, PAGE_H))


@dataclass
class Volume:
    src_images: list[np.ndarray]
    src_pages: list[Page]
    dst_images: list[np.ndarray]
    dst_pages: list[Page]
    dst_index_of: dict[int, int]  # source page index -> target page index
    truth: list[dict]  # ground-truth parallel records
    generated: list[GeneratedPage]


def generate_volume(n_pages: int = 20, seed: int = 0, volume: str = "vol", covers: int = 2) -> Volume:
    pages = [generate_page(seed, i, volume) for i in range(n_pages)]
    dst_imgs, dst_pages, index_of = [], [], {}
    cover_at = sorted(_rng(seed, 4).choice(n_pages + covers, size=covers, replace=False).tolist())
    it = iter(range(n_pages))
    ci = 0
    for pos in range(n_pages + covers):
        if pos in cover_at:
            img, pg = generate_cover(seed, ci, volume)
            ci += 1
            dst_imgs.append(img)
            dst_pages.append(pg)
        else:
            i = next(it)
            index_of[i] = pos
            dst_imgs.append(pages[i].dst_image)
            dst_pages.append(pages[i].dst_page)
    truth = []
    for gp in pages:
        for s, d in zip(gp.src_page.texts, gp.dst_page.texts):
            truth.append(
                {
                    "volume": volume,
                    "page": gp.src_page.id,
                    "order": s.order,
                    "scene": s.scene,
                    "tags": list(gp.src_page.frames[s.scene].tags),
                    "src": s.content,
                    "dst": d.content,
                    "box": [float(v) for v in s.box.as_list()],
                }
            )
    return Volume(
        [g.src_image for g in pages], [g.src_page for g in pages], dst_imgs, dst_pages, index_of, truth, pages,
    )


def _write_manifest(path: Path, volume: str, language: str, pages: list[str]):
    doc = {"volume": volume, "language": language, "pages": pages}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_volume(vol: Volume, out_dir, volume: str = "vol") -> dict:
    """Write images, annotations, manifests and ground truth; returns the paths."""
    out = Path(out_dir)
    for side in ("src", "dst"):
        (out / side).mkdir(parents=True, exist_ok=True)
    src_names, dst_names = [], []
    for img, pg in zip(vol.src_images, vol.src_pages):
        write_image(out / "src" / pg.image_path, img)
        (out / "src" / f"{pg.id}.json").write_text(dumps_page(pg), encoding="utf-8")
        src_names.append(f"src/{pg.image_path}")
    for img, pg in zip(vol.dst_images, vol.dst_pages):
        write_image(out / "dst" / pg.image_path, img)
        (out / "dst" / f"{pg.id}.json").write_text(dumps_page(pg), encoding="utf-8")
        dst_names.append(f"dst/{pg.image_path}")
    _write_manifest(out / "src_manifest.json", volume, "ja", src_names)
    _write_manifest(out / "dst_manifest.json", volume, "en", dst_names)
    from .corpus import dumps_records

    (out / "truth_corpus.jsonl").write_text(dumps_records(vol.truth), encoding="utf-8")
    order_truth = {pg.id: pg.text_permutation() for pg in vol.src_pages}
    (out / "truth_order.json").write_text(json.dumps(order_truth, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return {
        "src_manifest": str(out / "src_manifest.json"),
        "dst_manifest": str(out / "dst_manifest.json"),
        "truth_corpus": str(out / "truth_corpus.jsonl"),
        "truth_order": str(out / "truth_order.json"),
    }


def write_layouts(pages: list[Page], out_dir) -> Path:
    out = Path(out_dir)
    (out / "layouts").mkdir(parents=True, exist_ok=True)
    for pg in pages:
        (out / "layouts" / f"{pg.id}.json").write_text(dumps_page(pg), encoding="utf-8")
    truth = {pg.id: pg.text_permutation() for pg in pages}
    (out / "layout_order.json").write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return out / "layouts"
