"""Translation inputs with context, translator stubs and output re-segmentation."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

from .exceptions import EmptyOutput, EngineFailure
from .page import SceneTagSet, TextUnit, canonical_tag

SEP = "<SEP>"
JOINER = f" {SEP} "
_TOKEN = re.compile(r"(<[^<>\s]+>)")

MODELS = ("sentence", "2+2", "scene", "scene+visual")


def _content(t) -> str:
    return t.content if isinstance(t, TextUnit) else str(t)


def _check_index(texts, n):
    if not 0 <= n < len(texts):
        raise IndexError(f"text index {n} out of range for {len(texts)} texts")


def build_input_2p2(texts: Sequence, n: int) -> str:
    """The previous text and the current one, joined by the separator."""
    _check_index(texts, n)
    if n == 0:
        return _content(texts[0])
    return _content(texts[n - 1]) + JOINER + _content(texts[n])


def _scene_of(t):
    return t.scene if isinstance(t, TextUnit) else None


def scene_members(texts: Sequence, n: int) -> list[int]:
    """Indices of texts sharing the scene of ``texts[n]``, in reading order.

    A text without a scene forms a scene of its own.
    """
    _check_index(texts, n)
    scene = _scene_of(texts[n])
    if scene is None:
        return [n]
    return [i for i, t in enumerate(texts) if _scene_of(t) == scene]


def build_input_scene(texts: Sequence, n: int) -> tuple[str, int]:
    members = scene_members(texts, n)
    return JOINER.join(_content(texts[i]) for i in members), members.index(n)


def tag_tokens(tags) -> str:
    if isinstance(tags, SceneTagSet):
        tags = tags.tags
    return " ".join(f"<{canonical_tag(t).upper()}>" for t in sorted({canonical_tag(t) for t in tags}))


def build_input_scene_visual(texts: Sequence, n: int, tags) -> tuple[str, int]:
    """Scene input with tag tokens in front; the slot counts texts only."""
    body, slot = build_input_scene(texts, n)
    prefix = tag_tokens(tags)
    return (f"{prefix} {body}" if prefix else body), slot


def build_input(model: str, texts: Sequence, n: int, tags=()) -> tuple[str, int]:
    if model == "sentence":
        _check_index(texts, n)
        return _content(texts[n]), 0
    if model == "2+2":
        return build_input_2p2(texts, n), 0 if n == 0 else 1
    if model == "scene":
        return build_input_scene(texts, n)
    if model == "scene+visual":
        return build_input_scene_visual(texts, n, tags)
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


class TranslatorInterface(Protocol):
    name: str

    def translate(self, text: str) -> str: ...


class EchoTranslator:
    name = "echo"

    def translate(self, text: str) -> str:
        return text


class DictTranslator:
    """Word-for-word replacement; ``<...>`` tokens and unknown words pass through."""

    name = "dict"

    def __init__(self, mapping: Mapping[str, str]):
        self.mapping = dict(mapping)

    @classmethod
    def from_file(cls, path) -> "DictTranslator":
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{n}: expected two tab-separated columns")
                mapping[parts[0]] = parts[1]
        return cls(mapping)

    def _words(self, chunk: str) -> str:
        return " ".join(self.mapping.get(w, w) for w in chunk.split(" "))

    def translate(self, text: str) -> str:
        return "".join(p if _TOKEN.fullmatch(p) else self._words(p) for p in _TOKEN.split(text))


def translate(engine, text: str) -> str:
    try:
        out = engine.translate(text)
    except Exception as exc:
        raise EngineFailure(f"{getattr(engine, 'name', engine)!s}: {exc}") from exc
    if not isinstance(out, str):
        raise EngineFailure(f"{getattr(engine, 'name', engine)!s} returned {type(out).__name__}")
    return out


@dataclass(frozen=True)
class Segment:
    text: str
    degraded: bool = False


def split_output(output: str, slot: int) -> Segment:
    """Segment ``slot`` of a separator-joined output.

    Falls back to the last segment (flagged ``degraded``) when the engine
    returned fewer segments than needed.
    """
    if slot < 0:
        raise IndexError("slot must be non-negative")
    segments = [s.strip() for s in output.split(SEP)]
    if not any(segments):
        raise EmptyOutput("translation output is empty")
    if slot < len(segments):
        return Segment(segments[slot])
    return Segment(segments[-1], degraded=True)


def prepare_inputs(model: str, texts: Sequence, tags_of: Mapping[int, Iterable[str]] | None = None):
    """``(input, slot)`` for every text of a page in reading order."""
    tags_of = tags_of or {}
    out = []
    for n, t in enumerate(texts):
        tags = tags_of.get(_scene_of(t), ()) if model == "scene+visual" else ()
        out.append(build_input(model, texts, n, tags))
    return out
