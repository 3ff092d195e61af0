import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manga_layout.exceptions import NoFrames, ParseError
from manga_layout.geometry import BoundingBox
from manga_layout.imageio import read_image, to_luma, write_image
from manga_layout.page import (
    ClampWarning,
    FrameBox,
    Page,
    SceneTagSet,
    TextUnit,
    dumps_page,
    load_manga109_xml,
    load_page_annotations,
    page_from_dict,
    save_page_annotations,
    tag_vocabulary,
)

MINIMAL = {
    "schema": 1,
    "id": "p1",
    "image": "p1.png",
    "size": [100, 80],
    "frames": [{"box": [0, 0, 100, 80]}],
    "texts": [{"box": [10, 10, 20, 30], "content": "あい", "lines": [[12, 10, 8, 30]]}],
}


def write_json(tmp_path, doc, name="page.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc), encoding="utf-8")
    return p


class TestLoad:
    def test_minimal(self, tmp_path):
        page = load_page_annotations(write_json(tmp_path, MINIMAL))
        assert len(page.frames) == 1 and len(page.texts) == 1
        assert page.texts[0].content == "あい"
        assert page.texts[0].lines == (BoundingBox(12, 10, 8, 30),)

    def test_clamped_with_warning(self, tmp_path):
        doc = dict(MINIMAL, texts=[{"box": [90, 10, 30, 10], "content": "x"}])
        with pytest.warns(ClampWarning):
            page = load_page_annotations(write_json(tmp_path, doc))
        assert page.texts[0].box == BoundingBox(90, 10, 10, 10)

    def test_box_outside_dropped(self, tmp_path):
        doc = dict(MINIMAL, texts=[{"box": [200, 10, 30, 10], "content": "x"}])
        with pytest.warns(ClampWarning):
            page = load_page_annotations(write_json(tmp_path, doc))
        assert page.texts == ()

    def test_malformed(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(ParseError):
            load_page_annotations(p)
        with pytest.raises(ParseError):
            load_page_annotations(write_json(tmp_path, {"id": "x"}))
        with pytest.raises(ParseError):
            load_page_annotations(write_json(tmp_path, dict(MINIMAL, schema=2)))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_page_annotations(tmp_path / "nope.json")

    def test_strict_zero_frames(self, tmp_path):
        p = write_json(tmp_path, dict(MINIMAL, frames=[]))
        assert load_page_annotations(p).frames == ()
        with pytest.raises(NoFrames):
            load_page_annotations(p, strict=True)


class TestSave:
    def test_empty_page(self, tmp_path):
        page = Page("e", "e.png", (10, 10))
        save_page_annotations(page, tmp_path / "e.json")
        doc = json.loads((tmp_path / "e.json").read_text(encoding="utf-8"))
        assert doc["frames"] == [] and doc["texts"] == [] and doc["schema"] == 1

    def test_byte_stable(self, tmp_path):
        page = load_page_annotations(write_json(tmp_path, MINIMAL))
        a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
        save_page_annotations(page, a)
        save_page_annotations(page, b)
        save_page_annotations(load_page_annotations(a), c)
        assert a.read_bytes() == b.read_bytes() == c.read_bytes()


ints = st.integers(0, 180)
sizes = st.integers(1, 60)
box_st = st.builds(BoundingBox, ints, ints, sizes, sizes)
text_st = st.builds(
    TextUnit,
    box_st,
    st.text(max_size=8),
    st.lists(box_st, max_size=3).map(tuple),
    st.none() | st.integers(0, 9),
    st.none() | st.integers(0, 3),
)
frame_st = st.builds(
    FrameBox, box_st, st.none() | st.integers(0, 5), st.sampled_from([(), ("1girl",), ("1boy", "smile")])
)
page_st = st.builds(
    Page,
    st.text("abcxyz_0123", min_size=1, max_size=8),
    st.just("img.png"),
    st.just((240, 240)),
    st.lists(frame_st, max_size=4).map(tuple),
    st.lists(text_st, max_size=4).map(tuple),
    st.lists(box_st, max_size=3).map(tuple),
)


@settings(max_examples=60, deadline=None)
@given(page_st)
def test_round_trip(page):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        again = page_from_dict(json.loads(dumps_page(page)))
    assert again == page
    assert dumps_page(again) == dumps_page(page)


class TestTags:
    def test_vocabulary(self):
        vocab = tag_vocabulary()
        assert len(vocab) == 512 == len(set(vocab))
        assert {"1girl", "1boy"} <= set(vocab)

    def test_canonical_and_sorted(self):
        assert SceneTagSet(0, ("Smile", "1GIRL")).tags == ("1girl", "smile")

    def test_unknown_rejected(self):
        with pytest.raises(ValueError):
            SceneTagSet(0, ("not_a_tag_at_all",))


XML = """<book title="demo"><pages>
<page index="3" width="200" height="100">
  <frame id="f" xmin="0" ymin="0" xmax="100" ymax="100"/>
  <text id="t" xmin="10" ymin="10" xmax="30" ymax="60">こんにちは</text>
  <face xmin="1" ymin="1" xmax="2" ymax="2"/>
</page></pages></book>"""


def test_manga109_xml(tmp_path):
    p = tmp_path / "demo.xml"
    p.write_text(XML, encoding="utf-8")
    (page,) = load_manga109_xml(p)
    assert page.id == "demo_003" and page.size == (200, 100)
    assert page.frames[0].box == BoundingBox(0, 0, 100, 100)
    assert page.texts[0].content == "こんにちは"
    assert page.texts[0].box == BoundingBox(10, 10, 20, 50)


def test_manga109_xml_malformed(tmp_path):
    p = tmp_path / "bad.xml"
    p.write_text("<book><page", encoding="utf-8")
    with pytest.raises(ParseError):
        load_manga109_xml(p)


class TestImageIO:
    def test_luma_rounding(self):
        # 0.299*1 + 0.587*1 + 0.114*0 = 0.886 -> 1; exact half rounds up
        assert to_luma(np.array([[[1, 1, 0]]], np.uint8))[0, 0] == 1
        assert to_luma(np.array([[[255, 255, 255]]], np.uint8))[0, 0] == 255
        assert to_luma(np.array([[[0, 0, 255]]], np.uint8))[0, 0] == 29  # 29.07

    @pytest.mark.parametrize("suffix", [".pgm", ".png"])
    def test_round_trip(self, tmp_path, suffix, rng):
        img = rng.integers(0, 256, (17, 23)).astype(np.uint8)
        p = tmp_path / f"x{suffix}"
        write_image(p, img)
        assert np.array_equal(read_image(p), img)

    def test_pgm_header(self, tmp_path):
        p = tmp_path / "x.pgm"
        write_image(p, np.zeros((2, 3), np.uint8))
        assert p.read_bytes() == b"P5\n3 2\n255\n" + bytes(6)

    def test_png_bytes_stable(self, tmp_path, rng):
        img = rng.integers(0, 256, (9, 9)).astype(np.uint8)
        write_image(tmp_path / "a.png", img)
        write_image(tmp_path / "b.png", img)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_color_png_read_as_luma(self, tmp_path):
        from PIL import Image

        Image.new("RGB", (4, 4), (0, 0, 255)).save(tmp_path / "c.png")
        assert (read_image(tmp_path / "c.png") == 29).all()
