import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manga_layout.context import (
    JOINER,
    DictTranslator,
    EchoTranslator,
    build_input,
    build_input_2p2,
    build_input_scene,
    build_input_scene_visual,
    prepare_inputs,
    split_output,
    translate,
)
from manga_layout.exceptions import EmptyOutput, EngineFailure
from manga_layout.geometry import BoundingBox
from manga_layout.layout import estimate_reading_order
from manga_layout.page import SceneTagSet, TextUnit, load_page_annotations

FIXTURES = Path(__file__).parent / "fixtures"


def units(*pairs):
    return [TextUnit(BoundingBox(0, 0, 1, 1), c, order=i, scene=s) for i, (c, s) in enumerate(pairs)]


class TestModel1:
    def test_examples(self):
        assert build_input_2p2(["A", "B"], 1) == "A <SEP> B"
        assert build_input_2p2(["A"], 0) == "A"
        assert build_input_2p2(["A", "B", "C"], 2) == "B <SEP> C"

    def test_crosses_scenes(self):
        texts = units(("A", 0), ("B", 1))
        assert build_input_2p2(texts, 1) == "A <SEP> B"

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            build_input_2p2(["A"], 1)


class TestModel2:
    def test_examples(self):
        texts = units(("A", 0), ("B", 1), ("C", 1))
        assert build_input_scene(texts, 2) == ("B <SEP> C", 1)
        assert build_input_scene(texts, 0) == ("A", 0)

    def test_includes_later_texts(self):
        texts = units(("B", 1), ("C", 1))
        assert build_input_scene(texts, 0) == ("B <SEP> C", 0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=10))
    def test_slot_and_scene_purity(self, scenes):
        texts = units(*((f"t{i}", s) for i, s in enumerate(scenes)))
        for n, t in enumerate(texts):
            s, slot = build_input_scene(texts, n)
            parts = s.split(JOINER)
            assert parts.count(t.content) == 1 and parts[slot] == t.content
            assert all(scenes[int(p[1:])] == t.scene for p in parts)


class TestModel3:
    def test_examples(self):
        texts = units(("B", 1), ("C", 1))
        assert build_input_scene_visual(texts, 1, {"1girl"}) == ("<1GIRL> B <SEP> C", 1)
        assert build_input_scene_visual(texts, 1, ()) == build_input_scene(texts, 1)
        assert build_input_scene_visual(texts, 0, ["1girl", "1boy"]) == ("<1BOY> <1GIRL> B <SEP> C", 0)

    def test_tag_set_object(self):
        texts = units(("B", 1))
        tags = SceneTagSet(0, ("1girl",))
        assert build_input_scene_visual(texts, 0, tags)[0] == "<1GIRL> B"

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            build_input("model9", ["A"], 0)


@pytest.fixture(scope="module")
def ordered():
    page, _ = estimate_reading_order(load_page_annotations(FIXTURES / "fig2_page.json"))
    return page


@pytest.fixture(scope="module")
def expected():
    return json.loads((FIXTURES / "fig2_expected.json").read_text(encoding="utf-8"))


class TestFigureFixture:
    def tags_of(self, page):
        return {i: f.tags for i, f in enumerate(page.frames)}

    def test_model1(self, ordered, expected):
        texts = ordered.ordered_texts()
        got = [s for s, _ in prepare_inputs("2+2", texts)]
        assert [s.encode() for s in got] == [s.encode() for s in expected["model1"]]

    def test_model2(self, ordered, expected):
        got = prepare_inputs("scene", ordered.ordered_texts())
        assert [[s, k] for s, k in got] == expected["model2"]

    def test_model3(self, ordered, expected):
        got = prepare_inputs("scene+visual", ordered.ordered_texts(), self.tags_of(ordered))
        assert [[s, k] for s, k in got] == expected["model3"]

    def test_model3_without_tags_equals_model2(self, ordered):
        texts = ordered.ordered_texts()
        assert prepare_inputs("scene+visual", texts, {}) == prepare_inputs("scene", texts)


class TestTranslators:
    def test_echo(self):
        assert translate(EchoTranslator(), "A <SEP> B") == "A <SEP> B"

    def test_dict(self):
        d = DictTranslator({"A": "X", "B": "Y", "<SEP>": "oops", "<1GIRL>": "oops"})
        assert translate(d, "A <SEP> B") == "X <SEP> Y"
        assert translate(d, "<1GIRL> A") == "<1GIRL> X"

    def test_dict_file(self, tmp_path):
        path = tmp_path / "map.tsv"
        path.write_text("おい\they\n\nまた\tagain\n", encoding="utf-8")
        assert translate(DictTranslator.from_file(path), "おい <SEP> また") == "hey <SEP> again"
        path.write_text("only-one-column\n", encoding="utf-8")
        with pytest.raises(ValueError):
            DictTranslator.from_file(path)

    def test_failure_wrapped(self):
        class Broken:
            name = "broken"

            def translate(self, text):
                raise RuntimeError("model crashed")

        with pytest.raises(EngineFailure, match="broken"):
            translate(Broken(), "A")

    def test_non_string_output(self):
        class Bad:
            name = "bad"

            def translate(self, text):
                return 3

        with pytest.raises(EngineFailure):
            translate(Bad(), "A")


class TestSplitOutput:
    def test_examples(self):
        assert split_output("X <SEP> Y", 1).text == "Y"
        seg = split_output("X", 1)
        assert seg.text == "X" and seg.degraded
        assert split_output("X <SEP> Y <SEP> Z", 0).text == "X"
        assert not split_output("X <SEP> Y <SEP> Z", 0).degraded

    def test_empty(self):
        with pytest.raises(EmptyOutput):
            split_output("  <SEP>  ", 0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.text(alphabet="abc あ、", min_size=1).map(str.strip).filter(bool), min_size=1, max_size=6))
    def test_round_trip(self, segments):
        joined = JOINER.join(segments)
        for k, s in enumerate(segments):
            assert split_output(joined, k).text == s
