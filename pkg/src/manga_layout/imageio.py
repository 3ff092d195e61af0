"""Reading and writing 8-bit grayscale images (PGM P5 and PNG)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_luma(rgb) -> np.ndarray:
    """0.299 R + 0.587 G + 0.114 B, rounded half-up, as uint8."""
    arr = np.asarray(rgb)[..., :3].astype(np.int64)
    # integer arithmetic keeps the half-up rounding exact
    num = 299 * arr[..., 0] + 587 * arr[..., 1] + 114 * arr[..., 2]
    return ((num + 500) // 1000).astype(np.uint8)


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "P", "1", "I;16", "I", "F"):
            if im.mode == "P":
                im = im.convert("RGB")
                return to_luma(np.asarray(im))
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
        return to_luma(np.asarray(im.convert("RGB")))


def write_image(path, img) -> None:
    """Write a grayscale image; format chosen by suffix (``.pgm`` or ``.png``)."""
    path = Path(path)
    arr = np.asarray(img)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    if path.suffix.lower() == ".pgm":
        h, w = arr.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(arr.tobytes())
    else:
        # no timestamps/metadata so identical arrays give identical bytes
        Image.fromarray(arr).save(path, format="PNG", optimize=False)
