import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manga_layout.exceptions import NoFrames, TaggerUnavailable, UnassignedScene
from manga_layout.geometry import BoundingBox, iou
from manga_layout.layout import (
    ConstantTagger,
    FixtureTagger,
    ReadingOrderEstimator,
    assign_scenes,
    estimate_reading_order,
    order_frames,
    order_texts,
    predict_scene_tags,
)
from manga_layout.page import FrameBox, Page, TextUnit, load_page_annotations
from manga_layout.synth import generate_layout_page

FIXTURES = Path(__file__).parent / "fixtures"


def page_of(frames, texts=()):
    return Page(
        "p", "p.png", (1000, 1000),
        tuple(FrameBox(BoundingBox(*f)) for f in frames),
        tuple(TextUnit(BoundingBox(*t)) for t in texts),
    )


class TestOrderFrames:
    def test_grid(self):
        # indices: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right
        page = page_of([(0, 0, 90, 90), (100, 0, 90, 90), (0, 100, 90, 90), (100, 100, 90, 90)])
        tree, order = order_frames(page)
        assert order == [1, 0, 3, 2]
        assert tree.kind == "row-split" and [c.kind for c in tree.children] == ["column-split"] * 2

    def test_single(self):
        tree, order = order_frames(page_of([(5, 5, 50, 50)]))
        assert order == [0] and tree.kind == "leaf"

    def test_no_frames(self):
        with pytest.raises(NoFrames):
            order_frames(page_of([]))

    def test_overlap_falls_back(self):
        page = page_of([(0, 0, 100, 100), (50, 50, 100, 100), (300, 0, 50, 50)])
        tree, order = order_frames(page)
        assert sorted(order) == [0, 1, 2]
        assert tree.has_irregular()
        # the overlapping pair is ordered by top edge
        assert order.index(0) < order.index(1)

    def test_rows_before_columns(self):
        # a row band exists at the top level, so rows are split first
        page = page_of([(0, 0, 200, 50), (0, 60, 90, 50), (110, 60, 90, 50)])
        tree, order = order_frames(page)
        assert tree.kind == "row-split"
        assert order == [0, 2, 1]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.25, 4), st.floats(-300, 300), st.floats(-300, 300))
    def test_similarity_invariant(self, seed, s, dx, dy):
        page = generate_layout_page(seed, 0)
        moved = replace(page, frames=tuple(replace(f, box=f.box.scale(s).translate(dx, dy)) for f in page.frames))
        _, a = order_frames(page)
        _, b = order_frames(moved)
        assert a == b

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 500), st.integers(0, 500), st.integers(5, 200), st.integers(5, 200)),
                    min_size=1, max_size=8))
    def test_permutation(self, boxes):
        _, order = order_frames(page_of(boxes))
        assert sorted(order) == list(range(len(boxes)))

    def test_generated_layouts_regular(self):
        for i in range(50):
            page = generate_layout_page(3, i)
            tree, _ = order_frames(page)
            assert not tree.has_irregular()


class TestAssignScenes:
    def test_inside(self):
        page = assign_scenes(page_of([(0, 0, 100, 100), (200, 0, 100, 100)], [(10, 10, 20, 20)]))
        assert page.texts[0].scene == 0

    def test_straddling_picks_larger_iou(self):
        frames = [(0, 0, 100, 100), (100, 0, 60, 100)]
        text = (90, 10, 40, 20)
        a = iou(BoundingBox(*text), BoundingBox(*frames[0]))
        b = iou(BoundingBox(*text), BoundingBox(*frames[1]))
        assert a < b
        assert assign_scenes(page_of(frames, [text])).texts[0].scene == 1

    def test_outside_nearest(self):
        frames = [(0, 0, 100, 100), (300, 0, 100, 100), (600, 0, 100, 100)]
        page = assign_scenes(page_of(frames, [(720, 300, 10, 10)]))
        assert page.texts[0].scene == 2

    def test_tie_goes_to_earlier_frame_in_reading_order(self):
        # equal IoU with both frames; the right frame is read first
        frames = [(0, 0, 100, 100), (110, 0, 100, 100)]
        page = assign_scenes(page_of(frames, [(95, 10, 20, 10)]))
        assert page.texts[0].scene == 1

    def test_no_frames(self):
        with pytest.raises(NoFrames):
            assign_scenes(page_of([], [(0, 0, 5, 5)]))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(-400, 400), st.integers(-400, 400))
    def test_translation_invariant(self, dx, dy):
        frames = [(0, 0, 100, 100), (100, 0, 60, 100), (0, 120, 160, 80)]
        texts = [(90, 10, 40, 20), (20, 110, 30, 30)]
        base = [t.scene for t in assign_scenes(page_of(frames, texts)).texts]
        shift = lambda b: (b[0] + dx, b[1] + dy, b[2], b[3])
        moved = [t.scene for t in assign_scenes(page_of(map(shift, frames), map(shift, texts))).texts]
        assert base == moved


class TestOrderTexts:
    def test_distance(self):
        # frame top-right is (100, 0); near text corner at distance 5, far at 12
        page = page_of([(0, 0, 100, 100)], [(50, 12, 38, 10), (60, 5, 40, 10)])
        page = order_texts(assign_scenes(page))
        assert [t.order for t in page.texts] == [1, 0]

    def test_frame_order_dominates(self):
        frames = [(0, 0, 100, 100), (110, 0, 100, 100)]
        texts = [(80, 0, 20, 20), (110, 80, 20, 20)]
        page = order_texts(assign_scenes(page_of(frames, texts)))
        assert [t.order for t in page.texts] == [1, 0]

    def test_unassigned(self):
        with pytest.raises(UnassignedScene):
            order_texts(page_of([(0, 0, 10, 10)], [(1, 1, 2, 2)]))

    def test_deterministic(self):
        page = generate_layout_page(5, 1)
        runs = {tuple(estimate_reading_order(page)[0].text_permutation()) for _ in range(3)}
        assert len(runs) == 1


class TestFigureFixture:
    def test_expected_permutation(self):
        expected = json.loads((FIXTURES / "fig2_expected.json").read_text(encoding="utf-8"))
        page = load_page_annotations(FIXTURES / "fig2_page.json")
        _, frame_order = order_frames(page)
        assert frame_order == expected["frame_order"]
        ordered, tree = estimate_reading_order(page)
        assert not tree.has_irregular()
        assert ordered.text_permutation() == expected["text_permutation"]
        assert [t.scene for t in ordered.texts] == expected["scenes"]


class TestEstimator:
    def test_transform(self):
        pages = [generate_layout_page(9, i) for i in range(5)]
        est = ReadingOrderEstimator()
        out = est.fit_transform(pages)
        for src, got in zip(pages, out):
            assert got.text_permutation() == src.text_permutation()
        assert est.irregular_ == []
        assert est.get_params() == {"min_gap": 1.0}

    def test_flags_irregular(self):
        page = page_of([(0, 0, 100, 100), (50, 50, 100, 100)])
        est = ReadingOrderEstimator()
        est.transform([page])
        assert est.irregular_ == ["p"]


class TestTaggers:
    frame = FrameBox(BoundingBox(0, 0, 10, 10), 0, ("1girl",))

    def test_fixture(self):
        img = np.zeros((20, 20), np.uint8)
        assert predict_scene_tags(FixtureTagger(), img, self.frame).tags == ("1girl",)

    def test_fixture_untagged(self):
        assert predict_scene_tags(FixtureTagger(), None, FrameBox(BoundingBox(0, 0, 5, 5))).tags == ()

    def test_constant(self):
        assert predict_scene_tags(ConstantTagger({"1BOY"}), None, self.frame, 3).tags == ("1boy",)

    def test_unavailable(self):
        with pytest.raises(TaggerUnavailable):
            predict_scene_tags(None, None, self.frame)

    def test_sorted(self):
        tags = predict_scene_tags(ConstantTagger(["smile", "1girl", "night"]), None, self.frame).tags
        assert tags == ("1girl", "night", "smile")
