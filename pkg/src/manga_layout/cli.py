"""Command-line entry points (``manga-layout <command>``).

Results go to stdout (or ``--out``) as JSON/JSONL; diagnostics go to stderr.
Exit status: 0 success, 1 processing error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError, MangaLayoutError

log = logging.getLogger("manga_layout")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _detector(args):
    from .pipeline import build_engine

    spec = {"name": args.detector}
    if args.detector == "fixture":
        spec.update(jitter=args.jitter, seed=args.seed)
    return build_engine("detector", spec)


def _ocr(args):
    from .pipeline import build_engine

    return build_engine("ocr", args.ocr)


# ----------------------------------------------------------------------------
# commands


def cmd_order(args) -> int:
    from .layout import estimate_reading_order
    from .page import load_page_annotations, page_to_dict

    page = load_page_annotations(args.page, strict=args.strict)
    if not page.frames:
        print(f"page {page.id}: no frames; texts keep their input order", file=sys.stderr)
        doc = page_to_dict(page)
        doc["layout"] = None
        doc["text_order"] = list(range(len(page.texts)))
        _emit(_dumps(doc), args.out)
        return 0
    ordered, tree = estimate_reading_order(page)
    if tree.has_irregular():
        print(f"page {page.id}: irregular layout, fallback order used", file=sys.stderr)
    doc = page_to_dict(ordered)
    doc["layout"] = tree.to_dict()
    doc["text_order"] = ordered.text_permutation()
    _emit(_dumps(doc), args.out)
    return 0


def cmd_segment(args) -> int:
    from .bubbles import estimate_bubble_mask, mask_bbox, split_connected_bubble
    from .corpus import detect_lines_in_mask
    from .exceptions import EmptyMask
    from .imageio import read_image, write_image
    from .page import load_page_annotations

    img = read_image(args.image)
    page = load_page_annotations(args.page)
    boxes = _detector(args).detect_bubbles(img, page)
    bubbles = []
    for bi, box in enumerate(boxes):
        entry = {"box": [float(v) for v in box.as_list()]}
        try:
            mask = estimate_bubble_mask(img, box)
        except EmptyMask as exc:
            entry["error"] = str(exc)
            bubbles.append(entry)
            print(f"bubble {bi}: {exc}", file=sys.stderr)
            continue
        lines = detect_lines_in_mask(img, mask, args.orientation)
        res = split_connected_bubble(mask, lines)
        entry["mask_box"] = [float(v) for v in mask_bbox(mask).as_list()]
        entry["lines"] = [[float(v) for v in l.as_list()] for l in lines]
        entry["cuts"] = [{"axis": c.axis, "coord": c.coord, "length": c.length} for c in res.cuts]
        entry["regions"] = [
            {"lines": g, "box": [float(v) for v in mask_bbox(m).as_list()] if m.any() else None}
            for m, g in zip(res.masks, res.groups)
        ]
        entry["flags"] = sorted(res.flags)
        if args.dump_masks:
            d = Path(args.dump_masks)
            d.mkdir(parents=True, exist_ok=True)
            write_image(d / f"{page.id}_b{bi:02d}.png", mask.astype(np.uint8) * 255)
            for ri, m in enumerate(res.masks):
                write_image(d / f"{page.id}_b{bi:02d}_r{ri}.png", m.astype(np.uint8) * 255)
        bubbles.append(entry)
    _emit(_dumps({"page": page.id, "bubbles": bubbles}), args.out)
    return 0


def _manifest_pages(path):
    from .pipeline import load_manifest, load_page

    m = load_manifest(path)
    loaded = [load_page(p) for p in m.images]
    return m, [i for i, _ in loaded], [p for _, p in loaded]


def cmd_align(args) -> int:
    from .align import pair_pages

    _, src_imgs, src_pages = _manifest_pages(args.src)
    _, dst_imgs, dst_pages = _manifest_pages(args.dst)
    pairs = pair_pages(src_imgs, dst_imgs, ids=[p.id for p in src_pages], random_state=args.seed)
    doc = [
        {
            "src": src_pages[p.src_index].id,
            "dst": dst_pages[p.dst_index].id,
            "inliers": p.inliers,
            "homography": p.homography.to_list(),
        }
        for p in pairs
    ]
    print(f"{len(pairs)} of {len(src_pages)} source pages verified", file=sys.stderr)
    _emit(_dumps(doc), args.out)
    return 0


def cmd_extract(args) -> int:
    from .align import pair_pages
    from .corpus import Engines, dumps_records, extract_corpus
    from .pipeline import build_engine

    m, src_imgs, src_pages = _manifest_pages(args.src)
    _, dst_imgs, dst_pages = _manifest_pages(args.dst)
    pairs = pair_pages(src_imgs, dst_imgs, ids=[p.id for p in src_pages], random_state=args.seed)
    tagger = build_engine("tagger", args.tagger)
    engines = Engines(_detector(args), _ocr(args), tagger)
    records, warnings = extract_corpus(
        pairs, engines, src_imgs, src_pages, dst_imgs, dst_pages, volume=m.volume
    )
    for w in warnings:
        print(w, file=sys.stderr)
    print(f"{len(records)} records from {len(pairs)} page pairs", file=sys.stderr)
    _emit(dumps_records(records), args.out)
    return 0


def cmd_prep(args) -> int:
    from .context import prepare_inputs
    from .layout import estimate_reading_order
    from .page import load_page_annotations

    page = load_page_annotations(args.page, strict=True)
    if any(t.order is None or t.scene is None for t in page.texts) or args.reorder:
        page, _ = estimate_reading_order(page)
    texts = page.ordered_texts()
    tags_of = {i: f.tags for i, f in enumerate(page.frames)}
    lines = []
    for t, (inp, slot) in zip(texts, prepare_inputs(args.model, texts, tags_of)):
        lines.append(json.dumps({"order": t.order, "scene": t.scene, "src": t.content, "input": inp, "slot": slot},
                                sort_keys=True, ensure_ascii=False))
    _emit("".join(l + "\n" for l in lines), args.out)
    return 0


def cmd_translate(args) -> int:
    from .context import split_output, translate
    from .pipeline import build_engine

    spec = {"name": args.engine}
    if args.map:
        spec["path"] = args.map
    engine = build_engine("translator", spec)
    src = open(args.input, encoding="utf-8") if args.input else sys.stdin
    out = []
    with src:
        for raw in src:
            raw = raw.rstrip("\n")
            if not raw:
                continue
            try:
                item = json.loads(raw)
            except json.JSONDecodeError:
                item = {"input": raw, "slot": None}
            if not isinstance(item, dict):
                item = {"input": str(item), "slot": None}
            res = translate(engine, item["input"])
            item["output"] = res
            if item.get("slot") is not None:
                seg = split_output(res, int(item["slot"]))
                item["translation"] = seg.text
                item["degraded"] = seg.degraded
            out.append(json.dumps(item, sort_keys=True, ensure_ascii=False))
    _emit("".join(l + "\n" for l in out), args.out)
    return 0


def cmd_typeset(args) -> int:
    from .corpus import recognize_page
    from .imageio import read_image, write_image
    from .page import load_page_annotations
    from .pipeline import build_engine
    from .typeset import clean_text, plan_lettering, render_lettering

    img = read_image(args.image)
    page = load_page_annotations(args.page)
    with open(args.texts, encoding="utf-8") as fh:
        translations = [json.loads(l) for l in fh if l.strip()]
    texts, warnings = recognize_page(img, page, _detector(args), _ocr(args))
    by_content: dict[str, list] = {}
    for t in texts:
        by_content.setdefault(t.content, []).append(t)
    cleaner = build_engine("cleaner", args.cleaner)
    rasterizer = build_engine("rasterizer", args.rasterizer)
    out = img
    for t in texts:
        out = clean_text(out, t.lines, t.mask, cleaner)
    plans = []
    for item in translations:
        src = item.get("src") or item.get("input")
        targets = by_content.get(src) or []
        if not targets:
            warnings.append(f"no region found for source text {src!r}")
            continue
        region = targets.pop(0)
        text = item.get("translation") or item.get("output") or item.get("dst") or ""
        if not text.strip():
            continue
        plan = plan_lettering(text, region.mask)
        out = render_lettering(out, plan, rasterizer)
        plans.append({"src": src, "font_size": plan.font_size, "overflow": plan.overflow})
    for w in warnings:
        print(w, file=sys.stderr)
    write_image(args.out_image, out)
    _emit(_dumps({"page": page.id, "image": str(args.out_image), "plans": plans}), args.out)
    return 0


def cmd_run(args) -> int:
    from dataclasses import replace

    from .pipeline import dumps_report, load_config, run_pipeline

    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    report = run_pipeline(cfg)
    for e in report["pages"]:
        for w in e["warnings"]:
            print(f"{e['id']}: {w}", file=sys.stderr)
        if e["status"] == "failed":
            print(f"{e['id']}: FAILED {e['error']}", file=sys.stderr)
    print(f"{len(report['pages'])} pages, {report['failures']} failed", file=sys.stderr)
    _emit(dumps_report(report), args.out)
    return 1 if report["failures"] else 0


def _predict_orders(pages_dir: Path) -> dict:
    from .layout import ReadingOrderEstimator
    from .page import load_page_annotations

    pages = [load_page_annotations(p) for p in sorted(pages_dir.glob("*.json"))]
    ordered = ReadingOrderEstimator().fit_transform(pages)
    return {p.id: p.text_permutation() for p in ordered}


def cmd_evaluate(args) -> int:
    from .corpus import evaluate_extraction, evaluate_reading_order, load_records

    if args.what == "order":
        truth = json.loads(Path(args.truth).read_text(encoding="utf-8"))
        pred_path = Path(args.pred)
        if pred_path.is_dir():
            pred = _predict_orders(pred_path)
        else:
            pred = json.loads(pred_path.read_text(encoding="utf-8"))
        acc = evaluate_reading_order(pred, truth)
        print(f"accuracy={acc:.3f} pages={len(truth)}", file=sys.stderr)
        _emit(_dumps({"accuracy": acc, "pages": len(truth)}), args.out)
        return 0
    extracted = load_records(args.pred)
    truth = load_records(args.truth)
    taus = args.tau or [0.9, 0.7]
    doc = {}
    for tau in taus:
        r = evaluate_extraction(extracted, truth, tau)
        doc[f"{tau:g}"] = r
        print(f"tau={tau:g} recall={r['recall']} precision={r['precision']}", file=sys.stderr)
    _emit(_dumps(doc), args.out)
    return 0


def cmd_gen_fixtures(args) -> int:
    from .synth import generate_layouts, generate_volume, write_layouts, write_volume

    out = Path(args.out)
    if args.layouts:
        write_layouts(generate_layouts(args.layouts, args.seed), out)
        paths = {"layouts": str(out / "layouts"), "layout_order": str(out / "layout_order.json")}
    if not args.layouts_only:
        vol = generate_volume(args.pages, seed=args.seed, volume=args.volume, covers=args.covers)
        paths = {**(paths if args.layouts else {}), **write_volume(vol, out, args.volume)}
    print(f"fixtures written to {out}", file=sys.stderr)
    sys.stdout.write(_dumps(paths))
    return 0


# ----------------------------------------------------------------------------
# parser


def _engine_flags(p, ocr=True):
    p.add_argument("--detector", default="fixture", help="bubble/frame detector engine")
    p.add_argument("--jitter", type=int, default=0, help="fixture detector: max box jitter in px")
    p.add_argument("--seed", type=int, default=0)
    if ocr:
        p.add_argument("--ocr", default="fixture", help="OCR engine")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="manga-layout", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("order", help="reading order and scene assignment of one page")
    p.add_argument("page", help="page annotation JSON")
    p.add_argument("--strict", action="store_true", help="fail on pages without frames")
    p.add_argument("--out")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("segment", help="bubble masks, text lines and splits")
    p.add_argument("image")
    p.add_argument("page")
    p.add_argument("--orientation", choices=("vertical", "horizontal"), default="vertical")
    p.add_argument("--dump-masks", metavar="DIR")
    _engine_flags(p, ocr=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("align", help="pair pages of two editions")
    p.add_argument("--src", required=True, help="source-language manifest")
    p.add_argument("--dst", required=True, help="target-language manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("extract", help="build a parallel corpus (JSONL)")
    p.add_argument("--src", required=True, help="source-language manifest")
    p.add_argument("--dst", required=True, help="target-language manifest")
    p.add_argument("--tagger", default="fixture")
    _engine_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("prep", help="translation inputs for one page")
    p.add_argument("page")
    p.add_argument("--model", choices=("sentence", "2+2", "scene", "scene+visual"), default="scene")
    p.add_argument("--reorder", action="store_true", help="recompute order and scenes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("translate", help="run a translation engine over inputs")
    p.add_argument("input", nargs="?", help="JSONL from `prep` or plain lines (default: stdin)")
    p.add_argument("--engine", default="echo")
    p.add_argument("--map", help="word map for the dict engine (two tab-separated columns)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("typeset", help="clean a page and letter translations")
    p.add_argument("image")
    p.add_argument("page")
    p.add_argument("texts", help="JSONL with src and translation per text")
    p.add_argument("out_image")
    p.add_argument("--cleaner", default="flat")
    p.add_argument("--rasterizer", default="box")
    _engine_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_typeset)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("config")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="reading-order accuracy or corpus recall/precision")
    p.add_argument("what", choices=("order", "corpus"))
    p.add_argument("pred", help="predictions (order: JSON or a directory of pages; corpus: JSONL)")
    p.add_argument("truth")
    p.add_argument("--tau", type=float, action="append", help="NED threshold (repeatable)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-fixtures", help="write a synthetic bilingual volume")
    p.add_argument("--out", required=True)
    p.add_argument("--pages", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--covers", type=int, default=2)
    p.add_argument("--volume", default="vol")
    p.add_argument("--layouts", type=int, default=0, help="also write N frame/text layouts")
    p.add_argument("--layouts-only", action="store_true")
    p.set_defaults(func=cmd_gen_fixtures)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "evaluate" and args.tau:
        for t in args.tau:
            if not 0 < t <= 1:
                parser.error("--tau must lie in (0, 1]")
    if args.command == "gen-fixtures" and args.layouts_only and not args.layouts:
        parser.error("--layouts-only needs --layouts N")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except MangaLayoutError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
