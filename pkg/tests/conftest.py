import numpy as np
import pytest

from manga_layout.synth import generate_volume, write_volume

VOLUME_SEED = 7


@pytest.fixture(scope="session")
def volume():
    return generate_volume(20, seed=VOLUME_SEED)


@pytest.fixture(scope="session")
def volume_dir(tmp_path_factory, volume):
    out = tmp_path_factory.mktemp("vol")
    write_volume(volume, out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _no_cache_env(monkeypatch):
    monkeypatch.delenv("MANGA_LAYOUT_CACHE", raising=False)


@pytest.fixture(scope="session")
def extracted(volume):
    from manga_layout.align import pair_pages
    from manga_layout.corpus import Engines, FixtureDetector, FixtureOcr, extract_corpus
    from manga_layout.layout import FixtureTagger

    pairs = pair_pages(volume.src_images, volume.dst_images)
    engines = Engines(FixtureDetector(jitter=3, seed=0), FixtureOcr(), FixtureTagger())
    return extract_corpus(
        pairs, engines, volume.src_images, volume.src_pages, volume.dst_images, volume.dst_pages, volume="vol"
    )


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(name, ok, detail)`` records one acceptance line and asserts it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name, ok, detail):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
