"""Annotated page model and its JSON / Manga109-XML file formats."""

from __future__ import annotations

import json
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import NoFrames, ParseError
from .geometry import BoundingBox

SCHEMA_VERSION = 1


class ClampWarning(UserWarning):
    """A box was clipped (or dropped) to fit the page."""


@lru_cache(maxsize=None)
def tag_vocabulary() -> tuple[str, ...]:
    """The 512 scene tags a tagger may emit (illustration-style tag names)."""
    text = resources.files("manga_layout").joinpath("data/tags.txt").read_text("utf-8")
    return tuple(t for t in text.split() if t)


def canonical_tag(tag: str) -> str:
    return tag.strip().lower().replace(" ", "_")


@dataclass(frozen=True)
class SceneTagSet:
    scene: int
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        canon = tuple(sorted({canonical_tag(t) for t in self.tags}))
        vocab = set(tag_vocabulary())
        unknown = [t for t in canon if t not in vocab]
        if unknown:
            raise ValueError(f"tags not in vocabulary: {unknown}")
        object.__setattr__(self, "tags", canon)


@dataclass(frozen=True)
class FrameBox:
    box: BoundingBox
    order: int | None = None
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class TextUnit:
    box: BoundingBox
    content: str = ""
    lines: tuple[BoundingBox, ...] = ()
    order: int | None = None
    scene: int | None = None
    mask: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Page:
    id: str
    image_path: str
    size: tuple[int, int]  # (width, height)
    frames: tuple[FrameBox, ...] = ()
    texts: tuple[TextUnit, ...] = ()
    bubbles: tuple[BoundingBox, ...] = ()

    @property
    def width(self) -> int:
        return self.size[0]

    @property
    def height(self) -> int:
        return self.size[1]

    def with_texts(self, texts: Iterable[TextUnit]) -> "Page":
        return replace(self, texts=tuple(texts))

    def with_frames(self, frames: Iterable[FrameBox]) -> "Page":
        return replace(self, frames=tuple(frames))

    def ordered_texts(self) -> list[TextUnit]:
        """Texts sorted by their ``order`` field (unordered texts last, stable)."""
        return sorted(self.texts, key=lambda t: (t.order is None, t.order or 0))

    def text_permutation(self) -> list[int]:
        """Indices of ``texts`` in reading order."""
        idx = list(range(len(self.texts)))
        if any(t.order is None for t in self.texts):
            raise ValueError(f"page {self.id}: texts are not ordered")
        return sorted(idx, key=lambda i: self.texts[i].order)


def _num(v):
    f = float(v)
    return int(f) if f.is_integer() else f


def _box_from_json(raw) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ParseError(f"box must be [x, y, w, h], got {raw!r}")
    try:
        return BoundingBox(*(_num(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid box {raw!r}: {exc}") from exc


def _box_to_json(b: BoundingBox) -> list:
    return [_num(v) for v in b.as_list()]


def _clamped(box: BoundingBox, size, what: str) -> BoundingBox | None:
    c = box.clamp(*size)
    if c is None:
        warnings.warn(f"{what} {box.as_list()} lies outside the page; dropped", ClampWarning)
    elif c != box:
        warnings.warn(f"{what} {box.as_list()} clamped to {c.as_list()}", ClampWarning)
    return c


def page_from_dict(doc: dict, *, strict: bool = False) -> Page:
    try:
        schema = doc.get("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema version {schema!r}")
        size = tuple(int(v) for v in doc["size"])
        if len(size) != 2 or min(size) <= 0:
            raise ParseError(f"invalid page size {doc['size']!r}")
        pid = str(doc["id"])
        frames = []
        for i, f in enumerate(doc.get("frames", [])):
            box = _clamped(_box_from_json(f["box"]), size, f"frame {i}")
            if box is None:
                continue
            frames.append(FrameBox(box, f.get("order"), tuple(sorted(f.get("tags", [])))))
        texts = []
        for i, t in enumerate(doc.get("texts", [])):
            box = _clamped(_box_from_json(t["box"]), size, f"text {i}")
            if box is None:
                continue
            lines = []
            for ln in t.get("lines", []):
                lb = _clamped(_box_from_json(ln), size, f"text {i} line")
                if lb is not None:
                    lines.append(lb)
            texts.append(
                TextUnit(box, str(t.get("content", "")), tuple(lines), t.get("order"), t.get("scene"))
            )
        bubbles = []
        for i, b in enumerate(doc.get("bubbles", [])):
            bb = _clamped(_box_from_json(b), size, f"bubble {i}")
            if bb is not None:
                bubbles.append(bb)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed page annotation: {exc!r}") from exc
    if strict and not frames:
        raise NoFrames(f"page {pid} has no frames")
    return Page(pid, str(doc.get("image", "")), size, tuple(frames), tuple(texts), tuple(bubbles))


def page_to_dict(page: Page) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "id": page.id,
        "image": page.image_path,
        "size": list(page.size),
        "frames": [
            {"box": _box_to_json(f.box), "order": f.order, "tags": list(f.tags)} for f in page.frames
        ],
        "bubbles": [_box_to_json(b) for b in page.bubbles],
        "texts": [
            {
                "box": _box_to_json(t.box),
                "content": t.content,
                "lines": [_box_to_json(b) for b in t.lines],
                "order": t.order,
                "scene": t.scene,
            }
            for t in page.texts
        ],
    }


def dumps_page(page: Page) -> str:
    return json.dumps(page_to_dict(page), sort_keys=True, ensure_ascii=False, indent=1) + "\n"


def load_page_annotations(path, *, strict: bool = False) -> Page:
    """Load one page annotation document (JSON, ``"schema": 1``)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    return page_from_dict(doc, strict=strict)


def save_page_annotations(page: Page, path) -> None:
    Path(path).write_text(dumps_page(page), encoding="utf-8")


def load_manga109_xml(path) -> list[Page]:
    """Import pages from a Manga109-style XML file.

    Each ``<page index width height>`` becomes a :class:`Page`; ``<frame>``
    and ``<text>`` children contribute boxes from their xmin/ymin/xmax/ymax
    attributes. One-way: there is no XML writer.
    """
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    title = root.get("title", Path(path).stem)
    pages = []
    for el in root.iter("page"):
        try:
            idx = int(el.get("index", len(pages)))
            size = (int(el.get("width")), int(el.get("height")))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"page element without valid index/width/height: {exc}") from exc
        frames, texts = [], []
        for child in el:
            if child.tag not in ("frame", "text"):
                continue
            try:
                x1, y1, x2, y2 = (float(child.get(k)) for k in ("xmin", "ymin", "xmax", "ymax"))
                box = BoundingBox.from_corners(_num(x1), _num(y1), _num(x2), _num(y2))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"bad {child.tag} element on page {idx}: {exc}") from exc
            box = _clamped(box, size, child.tag)
            if box is None:
                continue
            if child.tag == "frame":
                frames.append(FrameBox(box))
            else:
                texts.append(TextUnit(box, (child.text or "").strip()))
        pages.append(
            Page(f"{title}_{idx:03d}", f"{idx:03d}.jpg", size, tuple(frames), tuple(texts))
        )
    return pages
