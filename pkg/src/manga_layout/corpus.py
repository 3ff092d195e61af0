"""Parallel corpus extraction from paired pages, and its evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .align import PagePair, transfer_regions, warp_page
from .bubbles import detect_text_lines_rule, estimate_bubble_mask, mask_bbox, split_connected_bubble
from .exceptions import EmptyMask, MangaLayoutError, PageMismatch
from .geometry import BoundingBox, Homography, iou
from .layout import _with_frame_order, assign_scenes, order_frames, order_texts, predict_scene_tags
from .page import FrameBox, Page, TextUnit

log = logging.getLogger(__name__)

RECORD_KEYS = ("box", "dst", "order", "page", "scene", "src", "tags", "volume")


@dataclass(frozen=True)
class ParallelRecord:
    volume_id: str
    page_id: str
    src_text: str
    dst_text: str
    scene: int | None
    order: int
    tags: tuple[str, ...] = ()
    src_box: BoundingBox | None = None

    def __post_init__(self):
        if not self.src_text:
            raise ValueError("src_text must be non-empty")

    def to_json(self) -> dict:
        return {
            "volume": self.volume_id,
            "page": self.page_id,
            "order": self.order,
            "scene": self.scene,
            "tags": list(self.tags),
            "src": self.src_text,
            "dst": self.dst_text,
            "box": [float(v) for v in self.src_box.as_list()] if self.src_box else None,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "ParallelRecord":
        box = d.get("box")
        return cls(
            str(d.get("volume", "")),
            str(d["page"]),
            str(d["src"]),
            str(d.get("dst", "")),
            d.get("scene"),
            int(d.get("order", 0)),
            tuple(d.get("tags", ())),
            BoundingBox(*box) if box else None,
        )


def _as_record(r) -> ParallelRecord:
    return r if isinstance(r, ParallelRecord) else ParallelRecord.from_json(r)


def dumps_records(records: Iterable) -> str:
    lines = []
    for r in records:
        d = r.to_json() if isinstance(r, ParallelRecord) else dict(r)
        lines.append(json.dumps(d, sort_keys=True, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def load_records(path) -> list[ParallelRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(ParallelRecord.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{n}: bad record: {exc}") from exc
    return out


# ----------------------------------------------------------------------------
# engines


class OcrEngine(Protocol):
    name: str

    def recognize(self, image: np.ndarray, box: BoundingBox, page: Page | None = None) -> str: ...


class DetectorEngine(Protocol):
    name: str

    def detect_bubbles(self, image: np.ndarray, page: Page | None = None) -> list[BoundingBox]: ...

    def detect_frames(self, image: np.ndarray, page: Page | None = None) -> list[BoundingBox]: ...


class FixtureOcr:
    """Reads the annotated string of the text whose box overlaps the crop best.

    Returns ``""`` when no annotated text reaches ``min_iou``.
    """

    name = "fixture"

    def __init__(self, min_iou: float = 0.5):
        self.min_iou = min_iou

    def recognize(self, image, box, page=None):
        if page is None:
            return ""
        best, best_iou = "", 0.0
        for t in page.texts:
            v = iou(box, t.box)
            if v > best_iou:
                best, best_iou = t.content, v
        return best if best_iou >= self.min_iou else ""


class FixtureDetector:
    """Returns annotated bubble boxes (text boxes if none), optionally jittered.

    Jitter moves every box edge by an integer offset drawn uniformly from
    ``[-jitter, jitter]``, seeded per page so runs are reproducible.
    """

    name = "fixture"

    def __init__(self, jitter: int = 0, seed: int = 0):
        self.jitter = jitter
        self.seed = seed

    def _rng(self, page):
        key = [self.seed] + [ord(c) for c in (page.id if page else "")]
        return np.random.default_rng(key)

    def detect_bubbles(self, image, page=None):
        if page is None:
            return []
        boxes = list(page.bubbles) or [t.box for t in page.texts]
        if not self.jitter:
            return boxes
        rng = self._rng(page)
        out = []
        h, w = np.asarray(image).shape[:2] if image is not None else page.size[::-1]
        for b in boxes:
            d = rng.integers(-self.jitter, self.jitter + 1, size=4)
            x1, y1, x2, y2 = b.x + d[0], b.y + d[1], b.x2 + d[2], b.y2 + d[3]
            if x2 - x1 < 2 or y2 - y1 < 2:
                out.append(b)
                continue
            j = BoundingBox.from_corners(float(x1), float(y1), float(x2), float(y2)).clamp(w, h)
            out.append(j or b)
        return out

    def detect_frames(self, image, page=None):
        return [f.box for f in page.frames] if page is not None else []


@dataclass
class Engines:
    detector: DetectorEngine
    ocr: OcrEngine
    tagger: object | None = None


# ----------------------------------------------------------------------------
# recognition of one page


@dataclass
class Region:
    mask: np.ndarray
    lines: list[BoundingBox]
    bubble: int

    @property
    def text_box(self) -> BoundingBox | None:
        return BoundingBox.enclosing(self.lines) if self.lines else None


@dataclass
class PageRegions:
    regions: list[Region]
    warnings: list[str] = field(default_factory=list)


def _offset(box: BoundingBox, dx, dy) -> BoundingBox:
    return box.translate(dx, dy)


def detect_lines_in_mask(img, mask, orientation) -> list[BoundingBox]:
    """Rule-based line detection restricted to ``mask``, in page coordinates."""
    bb = mask_bbox(mask)
    if bb is None:
        return []
    rs, cs = bb.pixel_slices(img.shape[1], img.shape[0])
    lines = detect_text_lines_rule(img[rs, cs], orientation, mask=mask[rs, cs])
    return [_offset(l, cs.start, rs.start) for l in lines]


def segment_page(
    img, bubble_boxes: Sequence[BoundingBox], orientation: str = "vertical", split: bool = True
) -> PageRegions:
    """Masks, lines and paragraph regions for every detected bubble.

    A bubble that fails (no mask, no text) is skipped with a warning; the
    remaining bubbles are still processed.
    """
    regions, warns = [], []
    for bi, box in enumerate(bubble_boxes):
        try:
            mask = estimate_bubble_mask(img, box)
        except EmptyMask as exc:
            warns.append(f"bubble {bi}: {exc}")
            continue
        lines = detect_lines_in_mask(img, mask, orientation)
        if not lines:
            warns.append(f"bubble {bi}: no text lines")
            continue
        if split:
            res = split_connected_bubble(mask, lines)
            for f in sorted(res.flags):
                warns.append(f"bubble {bi}: {f}")
            for m, g in zip(res.masks, res.groups):
                regions.append(Region(m, [lines[i] for i in g], bi))
        else:
            regions.append(Region(mask, lines, bi))
    # the same blank component can be found from two overlapping boxes
    unique, seen = [], []
    for r in regions:
        if any(np.array_equal(r.mask, s) for s in seen):
            warns.append(f"bubble {r.bubble}: duplicate region dropped")
            continue
        seen.append(r.mask)
        unique.append(r)
    return PageRegions(unique, warns)


def _transformed_page(page: Page, h: Homography, size) -> Page:
    """Annotations of ``page`` carried through ``h`` (for fixture engines)."""
    texts = []
    for t in page.texts:
        b = h.transform_box(t.box).clamp(*size)
        if b is not None:
            texts.append(replace(t, box=b, lines=()))
    return replace(page, size=tuple(size), texts=tuple(texts), frames=(), bubbles=())


def _frames_with_tags(boxes: Sequence[BoundingBox], annotated: Page | None) -> list[FrameBox]:
    """Wrap detected boxes, keeping the tags of an overlapping annotated frame."""
    out = []
    for b in boxes:
        tags: tuple[str, ...] = ()
        if annotated is not None and annotated.frames:
            best = max(annotated.frames, key=lambda f: iou(f.box, b))
            if iou(best.box, b) >= 0.5:
                tags = best.tags
        out.append(FrameBox(b, tags=tags))
    return out


def order_page_texts(page: Page, frames: Sequence[FrameBox]) -> Page:
    """Scene assignment and reading order for recognized texts."""
    page = page.with_frames(frames) if frames else page
    if not page.frames:
        return page.with_texts(replace(t, order=i) for i, t in enumerate(page.texts))
    _, order = order_frames(page)
    page = _with_frame_order(page, order)
    return order_texts(assign_scenes(page))


def recognize_page(
    img, page: Page, detector: DetectorEngine, ocr: OcrEngine, orientation: str = "vertical", split: bool = True
) -> tuple[list[TextUnit], list[str]]:
    """Detect bubbles, segment them and read every region (texts unordered).

    Each returned text carries its region mask and line boxes. Regions the
    OCR engine reads as empty are dropped with a warning.
    """
    seg = segment_page(img, detector.detect_bubbles(img, page), orientation, split)
    texts = []
    for r in seg.regions:
        box = r.text_box
        content = ocr.recognize(img, box, page)
        if not content:
            seg.warnings.append(f"bubble {r.bubble}: OCR returned nothing")
            continue
        texts.append(TextUnit(box, content, tuple(r.lines), mask=r.mask))
    return texts, seg.warnings


def extract_page(
    src_img,
    src_page: Page,
    dst_img,
    dst_page: Page | None,
    pair: PagePair,
    engines: Engines,
    volume: str = "",
    split: bool = True,
) -> tuple[list[ParallelRecord], list[str]]:
    texts, warnings = recognize_page(src_img, src_page, engines.detector, engines.ocr, "vertical", split)
    warped = warp_page(pair, dst_img, src_img.shape)
    dst_masks = transfer_regions([t.mask for t in texts], warped.shape)
    dst_truth = None
    if dst_page is not None:
        dst_truth = _transformed_page(dst_page, pair.homography, (src_img.shape[1], src_img.shape[0]))
    dst_strings = []
    for dm in dst_masks:
        dlines = detect_lines_in_mask(warped, dm, "horizontal")
        dst_strings.append(engines.ocr.recognize(warped, BoundingBox.enclosing(dlines), dst_truth) if dlines else "")

    frames = _frames_with_tags(engines.detector.detect_frames(src_img, src_page), src_page)
    ordered = order_page_texts(src_page.with_texts(texts), frames)
    tags_of = {}
    for i, f in enumerate(ordered.frames):
        if engines.tagger is not None:
            tags_of[i] = predict_scene_tags(engines.tagger, src_img, f, i).tags
        else:
            tags_of[i] = ()
    records = [
        ParallelRecord(
            volume, src_page.id, t.content, d, t.scene, t.order,
            tags_of.get(t.scene, ()), t.box,
        )
        for t, d in zip(ordered.texts, dst_strings)
    ]
    records.sort(key=lambda r: r.order)
    return records, warnings


def extract_corpus(
    pairs: Sequence[PagePair],
    engines: Engines,
    src_images: Sequence[np.ndarray],
    src_pages: Sequence[Page],
    dst_images: Sequence[np.ndarray],
    dst_pages: Sequence[Page | None] | None = None,
    volume: str = "",
    split: bool = True,
) -> tuple[list[ParallelRecord], list[str]]:
    """Run detection, masks, splitting, transfer, OCR and ordering per pair.

    Returns the records sorted by (page, order) and a list of warnings.
    Failures are per page: a failing page is reported and skipped.
    """
    warnings: list[str] = []
    if not pairs:
        warnings.append("no verified page pairs; corpus is empty")
        log.warning(warnings[-1])
        return [], warnings
    records: list[ParallelRecord] = []
    for pair in pairs:
        i, j = pair.src_index, pair.dst_index
        sp = src_pages[i]
        dp = dst_pages[j] if dst_pages is not None else None
        try:
            recs, warns = extract_page(src_images[i], sp, dst_images[j], dp, pair, engines, volume, split)
        except (MangaLayoutError, ValueError) as exc:
            warnings.append(f"page {sp.id}: failed: {exc}")
            log.warning(warnings[-1])
            continue
        warnings.extend(f"page {sp.id}: {w}" for w in warns)
        records.extend(recs)
    page_rank = {p.id: k for k, p in enumerate(src_pages)}
    records.sort(key=lambda r: (page_rank.get(r.page_id, 0), r.page_id, r.order))
    return records, warnings


# ----------------------------------------------------------------------------
# evaluation


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def ned_similarity(a: str, b: str) -> float:
    """``1 - levenshtein / max(len)``; two empty strings are identical (1.0)."""
    m = max(len(a), len(b))
    if m == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / m


def evaluate_extraction(extracted, truth, tau: float) -> dict:
    """Recall and precision under greedy one-to-one matching.

    A pair (extracted, truth) on the same page is a candidate when both the
    source and target similarities reach ``tau``; candidates are taken in
    descending order of the smaller of the two similarities.
    """
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    ext = [_as_record(r) for r in extracted]
    tru = [_as_record(r) for r in truth]
    by_page: dict[str, list[int]] = {}
    for k, t in enumerate(tru):
        by_page.setdefault(t.page_id, []).append(k)
    cands = []
    for i, e in enumerate(ext):
        for k in by_page.get(e.page_id, ()):
            t = tru[k]
            s = ned_similarity(e.src_text, t.src_text)
            if s < tau:
                continue
            d = ned_similarity(e.dst_text, t.dst_text)
            if d < tau:
                continue
            cands.append((-min(s, d), -(s + d), i, k))
    cands.sort()
    used_e, used_t = set(), set()
    tp = 0
    for _, _, i, k in cands:
        if i in used_e or k in used_t:
            continue
        used_e.add(i)
        used_t.add(k)
        tp += 1
    return {
        "tp": tp,
        "recall": tp / len(tru) if tru else 1.0,
        "precision": tp / len(ext) if ext else 1.0,
    }


def evaluate_reading_order(predicted: Mapping[str, Sequence[int]], truth: Mapping[str, Sequence[int]]) -> float:
    """Fraction of pages whose predicted text permutation matches exactly."""
    if set(predicted) != set(truth):
        missing = sorted(set(truth) ^ set(predicted))
        raise PageMismatch(f"page sets differ: {missing[:5]}")
    if not truth:
        return 1.0
    correct = sum(list(predicted[p]) == list(truth[p]) for p in truth)
    return correct / len(truth)
