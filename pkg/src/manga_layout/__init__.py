"""Manga page layout parsing, parallel corpus extraction and typesetting."""

__version__ = "0.1.0"

from .exceptions import (
    ConfigError,
    DegenerateConfiguration,
    DoesNotFit,
    EmptyMask,
    EmptyOutput,
    EngineFailure,
    MangaLayoutError,
    NoFrames,
    NoModel,
    NoSeparatingCut,
    PageMismatch,
    ParseError,
    PointAtInfinity,
    RasterizerFailure,
    TaggerUnavailable,
    UnassignedScene,
)
from .geometry import BoundingBox, Correspondence, Homography, RansacHomography, iou, ransac_homography
from .page import FrameBox, Page, SceneTagSet, TextUnit, load_page_annotations, save_page_annotations
from .layout import ReadingOrderEstimator, assign_scenes, estimate_reading_order, order_frames, order_texts
from .bubbles import detect_text_lines_rule, estimate_bubble_mask, split_connected_bubble
from .align import PagePair, PagePairer, pair_pages
from .corpus import (
    FixtureDetector,
    FixtureOcr,
    ParallelRecord,
    evaluate_extraction,
    evaluate_reading_order,
    extract_corpus,
    ned_similarity,
)
from .context import (
    DictTranslator,
    EchoTranslator,
    build_input_2p2,
    build_input_scene,
    build_input_scene_visual,
    split_output,
    translate,
)
from .typeset import GlyphMetrics, LetteringPlan, clean_text, inscribed_rect, plan_lettering, render_lettering
from .pipeline import config_from_dict, load_config, run_pipeline

__all__ = [
    "__version__",
    "BoundingBox",
    "Correspondence",
    "Homography",
    "RansacHomography",
    "iou",
    "ransac_homography",
    "FrameBox",
    "Page",
    "SceneTagSet",
    "TextUnit",
    "load_page_annotations",
    "save_page_annotations",
    "ReadingOrderEstimator",
    "assign_scenes",
    "estimate_reading_order",
    "order_frames",
    "order_texts",
    "detect_text_lines_rule",
    "estimate_bubble_mask",
    "split_connected_bubble",
    "PagePair",
    "PagePairer",
    "pair_pages",
    "FixtureDetector",
    "FixtureOcr",
    "ParallelRecord",
    "evaluate_extraction",
    "evaluate_reading_order",
    "extract_corpus",
    "ned_similarity",
    "DictTranslator",
    "EchoTranslator",
    "build_input_2p2",
    "build_input_scene",
    "build_input_scene_visual",
    "split_output",
    "translate",
    "GlyphMetrics",
    "LetteringPlan",
    "clean_text",
    "inscribed_rect",
    "plan_lettering",
    "render_lettering",
    "config_from_dict",
    "load_config",
    "run_pipeline",
    "MangaLayoutError",
    "PointAtInfinity",
    "DegenerateConfiguration",
    "NoModel",
    "ParseError",
    "NoFrames",
    "UnassignedScene",
    "TaggerUnavailable",
    "EmptyMask",
    "NoSeparatingCut",
    "PageMismatch",
    "EngineFailure",
    "EmptyOutput",
    "DoesNotFit",
    "RasterizerFailure",
    "ConfigError",
]
