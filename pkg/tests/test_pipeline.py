import json

import numpy as np
import pytest

from manga_layout.exceptions import ConfigError
from manga_layout.imageio import read_image
from manga_layout.pipeline import (
    build_engine,
    config_from_dict,
    engine_names,
    load_config,
    load_manifest,
    mask_from_rle,
    mask_to_rle,
    register_engine,
    run_pipeline,
    strip_timings,
)


def make_config(volume_dir, out, **over):
    doc = {
        "input": str(volume_dir / "src_manifest.json"),
        "out_dir": str(out),
        "model": "scene",
        "workers": 1,
        "engines": {"detector": "fixture", "ocr": "fixture", "tagger": "fixture", "translator": "echo"},
    }
    doc.update(over)
    return config_from_dict(doc)


def without_stage_flags(report):
    out = strip_timings(report)
    for e in out["pages"]:
        e.pop("stages")
    return out


@pytest.fixture(scope="module")
def first_run(volume_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = make_config(volume_dir, out)
    return cfg, run_pipeline(cfg)


class TestConfig:
    def test_unknown_engine(self, volume_dir, tmp_path):
        with pytest.raises(ConfigError, match="translator"):
            make_config(volume_dir, tmp_path, engines={"translator": "babelfish"})
        assert not (tmp_path / "report.json").exists()

    def test_unknown_key_and_model(self, volume_dir, tmp_path):
        with pytest.raises(ConfigError):
            make_config(volume_dir, tmp_path, colour="blue")
        with pytest.raises(ConfigError):
            make_config(volume_dir, tmp_path, model="model9")

    def test_bad_engine_params(self, volume_dir, tmp_path):
        with pytest.raises(ConfigError):
            make_config(volume_dir, tmp_path, engines={"detector": {"name": "fixture", "blur": 3}})

    def test_dict_translator_path_resolved(self, volume_dir, tmp_path):
        (tmp_path / "words.tsv").write_text("a\tb\n", encoding="utf-8")
        doc = {
            "input": str(volume_dir / "src_manifest.json"),
            "out_dir": "out",
            "engines": {"translator": {"name": "dict", "path": "words.tsv"}},
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        cfg = load_config(path)
        assert cfg.out_dir == tmp_path / "out"
        assert cfg.engine_spec("translator")["path"] == str(tmp_path / "words.tsv")

    def test_cache_env_override(self, volume_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("MANGA_LAYOUT_CACHE", str(tmp_path / "elsewhere"))
        cfg = make_config(volume_dir, tmp_path, cache_dir=str(tmp_path / "c"))
        assert cfg.cache_dir == tmp_path / "elsewhere"

    def test_default_cache(self, volume_dir, tmp_path):
        assert make_config(volume_dir, tmp_path).cache_dir == tmp_path / ".cache"

    def test_bad_manifest(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("[1, 2", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_manifest(p)

    def test_registry(self):
        class Upper:
            name = "upper"

            def translate(self, text):
                return text.upper()

        register_engine("translator", "upper", Upper)
        assert "upper" in engine_names("translator")
        assert build_engine("translator", "upper").translate("ab") == "AB"
        with pytest.raises(ValueError):
            register_engine("nonsense", "x", Upper)


def test_rle_round_trip(rng):
    for _ in range(20):
        m = rng.random((13, 17)) > rng.random()
        assert np.array_equal(mask_from_rle(mask_to_rle(m), m.shape), m)


class TestRun:
    def test_all_pages(self, first_run, volume):
        cfg, report = first_run
        assert report["failures"] == 0
        assert len(report["pages"]) == 20
        assert report["irregular_pages"] == []
        for entry in report["pages"]:
            assert entry["status"] == "ok"
            img = read_image(cfg.out_dir / entry["output"])
            assert img.shape == (680, 480)
            assert not any(s["cached"] for s in entry["stages"].values())
        on_disk = json.loads((cfg.out_dir / "report.json").read_text(encoding="utf-8"))
        assert on_disk["schema"] == report["schema"]

    def test_echo_keeps_source_text(self, first_run, volume):
        _, report = first_run
        truth = {p.id: sorted(t.content for t in p.texts) for p in volume.src_pages}
        for entry in report["pages"]:
            assert sorted(t["output"] for t in entry["texts"]) == truth[entry["id"]]

    def test_pages_changed_inside_bubbles_only(self, first_run, volume):
        cfg, report = first_run
        g = volume.generated[0]
        out = read_image(cfg.out_dir / report["pages"][0]["output"])
        inside = np.logical_or.reduce(g.interiors)
        assert np.array_equal(out[~inside], g.src_image[~inside])
        assert not np.array_equal(out[inside], g.src_image[inside])

    def test_rerun_is_cached_and_identical(self, first_run, tmp_path):
        cfg, report = first_run
        before = {p.name: p.read_bytes() for p in (cfg.out_dir / "pages").iterdir()}
        again = run_pipeline(cfg)
        assert all(s["cached"] for e in again["pages"] for s in e["stages"].values())
        assert without_stage_flags(again) == without_stage_flags(report)
        assert {p.name: p.read_bytes() for p in (cfg.out_dir / "pages").iterdir()} == before

    def test_changed_translator_reruns_downstream(self, first_run, tmp_path):
        cfg, _ = first_run
        (tmp_path / "m.tsv").write_text("x\ty\n", encoding="utf-8")
        cfg2 = make_config(
            cfg.input.parent, cfg.out_dir, cache_dir=str(cfg.cache_dir),
            engines={"detector": "fixture", "ocr": "fixture", "tagger": "fixture",
                     "translator": {"name": "dict", "path": str(tmp_path / "m.tsv")}},
        )
        report = run_pipeline(cfg2)
        for e in report["pages"]:
            flags = {k: v["cached"] for k, v in e["stages"].items()}
            assert flags == {"recognize": True, "order": True, "translate": False, "typeset": False}

    def test_sentence_model_same_text(self, first_run, tmp_path):
        cfg, report = first_run
        cfg2 = make_config(cfg.input.parent, tmp_path, model="sentence", cache_dir=str(cfg.cache_dir))
        other = run_pipeline(cfg2)
        for a, b in zip(report["pages"], other["pages"]):
            assert [t["output"] for t in a["texts"]] == [t["output"] for t in b["texts"]]
            assert all(t["slot"] == 0 for t in b["texts"])
            assert b["stages"]["order"]["cached"] and not b["stages"]["translate"]["cached"]
            assert (tmp_path / b["output"]).read_bytes() == (cfg.out_dir / a["output"]).read_bytes()

    def test_missing_image_is_page_failure(self, volume_dir, tmp_path):
        manifest = json.loads((volume_dir / "src_manifest.json").read_text(encoding="utf-8"))
        manifest["pages"] = [str(volume_dir / manifest["pages"][0]), str(volume_dir / "src" / "missing.png")]
        (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
        cfg = make_config(volume_dir, tmp_path / "out", input=str(tmp_path / "m.json"))
        report = run_pipeline(cfg)
        assert [e["status"] for e in report["pages"]] == ["ok", "failed"]
        assert report["failures"] == 1
