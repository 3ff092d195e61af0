"""Whole-volume translation: recognize, order, translate, typeset, with caching.

Configuration is one JSON document::

    {
      "input": "src_manifest.json",
      "out_dir": "out",
      "cache_dir": ".cache",
      "model": "scene",
      "languages": {"src": "ja", "dst": "en"},
      "workers": 1,
      "engines": {
        "detector": "fixture", "ocr": "fixture", "tagger": "fixture",
        "translator": {"name": "dict", "path": "words.tsv"},
        "cleaner": "flat", "rasterizer": "box"
      }
    }

An engine is a registered name or ``{"name": ..., <parameters>}``. Relative
paths resolve against the config file's directory. ``MANGA_LAYOUT_CACHE``
overrides ``cache_dir``.

The run report (``report.json``, schema 1) has one entry per page with its
status, per-stage ``cached`` flag and ``seconds``, warnings and whether its
frame layout was irregular, plus volume totals.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .context import MODELS, DictTranslator, EchoTranslator, prepare_inputs, split_output, translate
from .corpus import FixtureDetector, FixtureOcr, _frames_with_tags, recognize_page
from .exceptions import ConfigError, MangaLayoutError
from .geometry import BoundingBox
from .imageio import read_image, write_image
from .layout import (
    ConstantTagger,
    FixtureTagger,
    _with_frame_order,
    assign_scenes,
    order_frames,
    order_texts,
    predict_scene_tags,
)
from .page import Page, TextUnit, load_page_annotations
from .typeset import (
    BoxGlyphRasterizer,
    FlatFillCleaner,
    PilFontRasterizer,
    clean_text,
    plan_lettering,
    render_lettering,
)

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1
STAGES = ("recognize", "order", "translate", "typeset")
CACHE_ENV = "MANGA_LAYOUT_CACHE"

ENGINE_KINDS = ("detector", "ocr", "tagger", "translator", "cleaner", "rasterizer")
_REGISTRY: dict[str, dict[str, Callable[..., Any]]] = {
    "detector": {"fixture": FixtureDetector},
    "ocr": {"fixture": FixtureOcr},
    "tagger": {"fixture": FixtureTagger, "constant": ConstantTagger, "none": lambda: None},
    "translator": {"echo": EchoTranslator, "dict": lambda path: DictTranslator.from_file(path)},
    "cleaner": {"flat": FlatFillCleaner},
    "rasterizer": {"box": BoxGlyphRasterizer, "pil": PilFontRasterizer},
}
_DEFAULT_ENGINES = {
    "detector": "fixture", "ocr": "fixture", "tagger": "none",
    "translator": "echo", "cleaner": "flat", "rasterizer": "box",
}
_STAGE_ENGINES = {
    "recognize": ("detector", "ocr"),
    "order": ("tagger",),
    "translate": ("translator",),
    "typeset": ("cleaner", "rasterizer"),
}


def register_engine(kind: str, name: str, factory: Callable[..., Any]) -> None:
    """Make ``name`` selectable for ``kind`` in configs and on the command line."""
    if kind not in _REGISTRY:
        raise ValueError(f"unknown engine kind {kind!r}")
    _REGISTRY[kind][name] = factory


def engine_names(kind: str) -> list[str]:
    return sorted(_REGISTRY[kind])


def _spec(value) -> dict:
    if isinstance(value, str):
        return {"name": value}
    if isinstance(value, dict) and isinstance(value.get("name"), str):
        return dict(value)
    raise ConfigError(f"engine must be a name or an object with 'name', got {value!r}")


def build_engine(kind: str, value):
    spec = _spec(value)
    name = spec.pop("name")
    factory = _REGISTRY[kind].get(name)
    if factory is None:
        raise ConfigError(f"unknown {kind} engine {name!r}; known: {', '.join(engine_names(kind))}")
    try:
        return factory(**spec)
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"cannot build {kind} engine {name!r}: {exc}") from exc


@dataclass(frozen=True)
class PipelineConfig:
    input: Path
    out_dir: Path
    cache_dir: Path
    model: str = "scene"
    engines: dict | None = None
    languages: dict | None = None
    workers: int | None = None

    def engine_spec(self, kind: str) -> dict:
        return _spec((self.engines or {}).get(kind, _DEFAULT_ENGINES[kind]))


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def config_from_dict(doc: dict, base_dir=".") -> PipelineConfig:
    """Validate a config document; every engine is built once to check it."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    base = Path(base_dir)
    unknown = set(doc) - {"input", "out_dir", "cache_dir", "model", "engines", "languages", "workers"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "input" not in doc:
        raise ConfigError("config needs 'input' (a page manifest)")
    model = doc.get("model", "scene")
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; expected one of {MODELS}")
    engines = dict(doc.get("engines") or {})
    bad = set(engines) - set(ENGINE_KINDS)
    if bad:
        raise ConfigError(f"unknown engine kinds: {sorted(bad)}")
    for kind, value in engines.items():
        spec = _spec(value)
        if "path" in spec:
            spec["path"] = str(_resolve(base, spec["path"]))
        engines[kind] = spec
    out_dir = _resolve(base, doc.get("out_dir", "out"))
    cache = os.environ.get(CACHE_ENV) or doc.get("cache_dir")
    cache_dir = _resolve(base, cache) if cache else out_dir / ".cache"
    workers = doc.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        raise ConfigError("workers must be a positive integer")
    cfg = PipelineConfig(
        _resolve(base, doc["input"]), out_dir, cache_dir, model, engines, doc.get("languages"), workers
    )
    for kind in ENGINE_KINDS:
        build_engine(kind, cfg.engine_spec(kind))
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc, path.parent)


@dataclass(frozen=True)
class Manifest:
    volume: str
    language: str
    images: list[Path]


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        pages = [path.parent / p for p in doc["pages"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad manifest {path}: {exc}") from exc
    return Manifest(str(doc.get("volume", path.stem)), str(doc.get("language", "")), pages)


def load_page(image_path: Path) -> tuple[np.ndarray, Page]:
    """Image plus its annotation (``<stem>.json`` beside it, if present)."""
    img = read_image(image_path)
    ann = image_path.with_suffix(".json")
    if ann.exists():
        page = load_page_annotations(ann)
    else:
        page = Page(image_path.stem, image_path.name, (img.shape[1], img.shape[0]))
    return img, page


# ----------------------------------------------------------------------------
# serialization of stage outputs


def _box(b: BoundingBox) -> list:
    return [float(v) for v in b.as_list()]


def mask_to_rle(mask: np.ndarray) -> list[int]:
    """Run lengths over the row-major flattened mask, starting with a False run."""
    flat = np.asarray(mask, dtype=bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.r_[0, change, flat.size]
    runs = np.diff(bounds).tolist()
    return ([0] + runs) if flat.size and flat[0] else runs


def mask_from_rle(runs, shape) -> np.ndarray:
    vals = np.arange(len(runs)) % 2 == 1
    return np.repeat(vals, runs).reshape(shape)


def _text_to_json(t: TextUnit) -> dict:
    return {
        "box": _box(t.box),
        "content": t.content,
        "lines": [_box(l) for l in t.lines],
        "order": t.order,
        "scene": t.scene,
        "mask": mask_to_rle(t.mask) if t.mask is not None else None,
    }


def _text_from_json(d: dict, shape) -> TextUnit:
    mask = mask_from_rle(d["mask"], shape) if d.get("mask") is not None else None
    return TextUnit(
        BoundingBox(*d["box"]), d["content"], tuple(BoundingBox(*l) for l in d["lines"]),
        d["order"], d["scene"], mask,
    )


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, ensure_ascii=False).encode("utf-8") if not isinstance(p, bytes) else p)
        h.update(b"\0")
    return h.hexdigest()


class StageCache:
    """Content-addressed store: ``<root>/<stage>/<key>.json`` (+ ``.png``)."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def _path(self, stage, key, ext):
        return self.root / stage / f"{key}{ext}"

    def get(self, stage: str, key: str, with_image: bool = False):
        jp = self._path(stage, key, ".json")
        ip = self._path(stage, key, ".png")
        if not jp.exists() or (with_image and not ip.exists()):
            return None
        try:
            doc = json.loads(jp.read_text(encoding="utf-8"))
            img = read_image(ip) if with_image else None
        except (OSError, ValueError):
            return None
        return doc, img

    def put(self, stage: str, key: str, doc: dict, img: np.ndarray | None = None) -> None:
        d = self.root / stage
        d.mkdir(parents=True, exist_ok=True)
        if img is not None:
            tmp = self._path(stage, key, ".tmp.png")
            write_image(tmp, img)
            os.replace(tmp, self._path(stage, key, ".png"))
        tmp = self._path(stage, key, ".tmp.json")
        tmp.write_text(json.dumps(doc, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, self._path(stage, key, ".json"))


# ----------------------------------------------------------------------------
# stages


def _stage_recognize(img, page, engines) -> dict:
    texts, warnings = recognize_page(img, page, engines["detector"], engines["ocr"])
    return {"texts": [_text_to_json(t) for t in texts], "warnings": warnings}


def _stage_order(img, page, prev, engines) -> dict:
    texts = [_text_from_json(d, img.shape) for d in prev["texts"]]
    frames = _frames_with_tags(engines["detector"].detect_frames(img, page), page)
    warnings: list[str] = []
    irregular = False
    tags_of: dict[int, list[str]] = {}
    work = page.with_texts(texts).with_frames(frames)
    if frames:
        tree, order = order_frames(work)
        irregular = tree.has_irregular()
        work = order_texts(assign_scenes(_with_frame_order(work, order)))
        tagger = engines["tagger"]
        if tagger is not None:
            for i, f in enumerate(work.frames):
                tags_of[i] = list(predict_scene_tags(tagger, img, f, i).tags)
    else:
        warnings.append("no frames; texts kept in detection order")
        work = work.with_texts(replace(t, order=i) for i, t in enumerate(work.texts))
    ordered = work.ordered_texts()
    return {
        "frames": [{"box": _box(f.box), "order": f.order, "tags": list(f.tags)} for f in work.frames],
        "texts": [_text_to_json(t) for t in ordered],
        "tags": {str(k): v for k, v in sorted(tags_of.items())},
        "irregular": irregular,
        "warnings": warnings,
    }


def _stage_translate(img, prev, model, engines) -> dict:
    texts = [_text_from_json(d, img.shape) for d in prev["texts"]]
    tags_of = {int(k): v for k, v in prev["tags"].items()}
    memo: dict[str, str] = {}
    items, warnings = [], []
    for t, (inp, slot) in zip(texts, prepare_inputs(model, texts, tags_of)):
        if inp not in memo:
            memo[inp] = translate(engines["translator"], inp)
        seg = split_output(memo[inp], slot)
        if seg.degraded:
            warnings.append(f"text {t.order}: translation returned too few segments")
        items.append({"order": t.order, "input": inp, "slot": slot, "output": seg.text, "degraded": seg.degraded})
    return {"items": items, "warnings": warnings}


def _stage_typeset(img, order_doc, trans_doc, engines) -> tuple[dict, np.ndarray]:
    texts = [_text_from_json(d, img.shape) for d in order_doc["texts"]]
    out = img
    plans, warnings = [], []
    # clean every region first so neighbouring lettering is never erased
    for t in texts:
        if t.mask is not None:
            out = clean_text(out, t.lines, t.mask, engines["cleaner"])
    for t, item in zip(texts, trans_doc["items"]):
        if t.mask is None or not item["output"].strip():
            continue
        plan = plan_lettering(item["output"], t.mask)
        if plan.overflow:
            warnings.append(f"text {t.order}: translation overflows its region at the minimum size")
        out = render_lettering(out, plan, engines["rasterizer"])
        plans.append({"order": t.order, "font_size": plan.font_size, "overflow": plan.overflow, "lines": len(plan.lines)})
    return {"plans": plans, "warnings": warnings}, out


@dataclass(frozen=True)
class _Job:
    image_path: str
    cfg: PipelineConfig


def _stage_key(cfg: PipelineConfig, stage: str, upstream: str) -> str:
    engines = {k: cfg.engine_spec(k) for k in _STAGE_ENGINES[stage]}
    # ordering and typesetting also depend on the detector (frames) and model
    if stage == "order":
        engines["detector"] = cfg.engine_spec("detector")
    if stage == "translate":
        engines["model"] = cfg.model
    return _digest(stage, engines, upstream)


def process_page(job: _Job) -> dict:
    """Run all stages of one page; never raises (failures go into the entry)."""
    cfg = job.cfg
    path = Path(job.image_path)
    entry: dict[str, Any] = {"image": path.name, "id": path.stem, "status": "ok", "stages": {}, "warnings": []}
    try:
        img, page = load_page(path)
        entry["id"] = page.id
        engines = {k: build_engine(k, cfg.engine_spec(k)) for k in ENGINE_KINDS}
        cache = StageCache(cfg.cache_dir)
        ann = path.with_suffix(".json")
        upstream = _digest(path.read_bytes(), ann.read_bytes() if ann.exists() else b"")
        docs: dict[str, dict] = {}
        out_img = None
        for stage in STAGES:
            key = _stage_key(cfg, stage, upstream)
            t0 = time.perf_counter()
            hit = cache.get(stage, key, with_image=stage == "typeset")
            if hit is not None:
                doc, out_img_cached = hit
                if stage == "typeset":
                    out_img = out_img_cached
            else:
                if stage == "recognize":
                    doc = _stage_recognize(img, page, engines)
                elif stage == "order":
                    doc = _stage_order(img, page, docs["recognize"], engines)
                elif stage == "translate":
                    doc = _stage_translate(img, docs["order"], cfg.model, engines)
                else:
                    doc, out_img = _stage_typeset(img, docs["order"], docs["translate"], engines)
                cache.put(stage, key, doc, out_img if stage == "typeset" else None)
            docs[stage] = doc
            entry["stages"][stage] = {"cached": hit is not None, "seconds": round(time.perf_counter() - t0, 6)}
            entry["warnings"].extend(f"{stage}: {w}" for w in doc.get("warnings", []))
            upstream = key
        out_path = cfg.out_dir / "pages" / f"{page.id}.png"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_image(out_path, out_img)
        entry["output"] = f"pages/{page.id}.png"
        entry["irregular"] = bool(docs["order"]["irregular"])
        entry["texts"] = [
            {"order": it["order"], "input": it["input"], "slot": it["slot"], "output": it["output"]}
            for it in docs["translate"]["items"]
        ]
    except (MangaLayoutError, OSError, ValueError) as exc:
        entry["status"] = "failed"
        entry["error"] = f"{type(exc).__name__}: {exc}"
        log.warning("page %s failed: %s", entry["id"], entry["error"])
    return entry


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Translate every page of the manifest; writes pages and ``report.json``."""
    manifest = load_manifest(cfg.input)
    jobs = [_Job(str(p), cfg) for p in manifest.images]
    workers = cfg.workers or os.cpu_count() or 1
    t0 = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            entries = list(pool.map(process_page, jobs))
    else:
        entries = [process_page(j) for j in jobs]
    report = {
        "schema": REPORT_SCHEMA,
        "volume": manifest.volume,
        "model": cfg.model,
        "languages": cfg.languages or {},
        "engines": {k: cfg.engine_spec(k) for k in ENGINE_KINDS},
        "pages": entries,
        "failures": sum(e["status"] == "failed" for e in entries),
        "irregular_pages": [e["id"] for e in entries if e.get("irregular")],
        "warnings": sum(len(e["warnings"]) for e in entries),
        "seconds": round(time.perf_counter() - t0, 6),
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "report.json").write_text(dumps_report(report), encoding="utf-8")
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, ensure_ascii=False, default=str) + "\n"


def strip_timings(report: dict) -> dict:
    """The report without ``seconds`` fields, for run-to-run comparison."""
    if isinstance(report, dict):
        return {k: strip_timings(v) for k, v in report.items() if k != "seconds"}
    if isinstance(report, list):
        return [strip_timings(v) for v in report]
    return report
