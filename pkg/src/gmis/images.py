"""Float images on disk: PFM (bit-exact) and 8-bit PNG previews."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageIOError, ImageShapeError

PNG_GAMMA = 1.0 / 2.2


def write_pfm(path: str | Path, image: np.ndarray) -> Path:
    """Little-endian colour PFM; rows are stored bottom to top."""

    path = Path(path)
    data = np.asarray(image, dtype="<f4")
    if data.ndim != 3 or data.shape[2] != 3:
        raise ImageShapeError(f"expected an H x W x 3 image, got {data.shape}")
    height, width = data.shape[:2]
    header = f"PF\n{width} {height}\n-1.0\n".encode("ascii")
    try:
        with path.open("wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(data[::-1]).tobytes())
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
    return path


def _header_line(raw: bytes, start: int) -> tuple[str, int]:
    end = raw.find(b"\n", start)
    if end < 0:
        raise ImageIOError("truncated PFM header")
    return raw[start:end].decode("ascii").strip(), end + 1


def read_pfm(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    try:
        magic, pos = _header_line(raw, 0)
        dims, pos = _header_line(raw, pos)
        scale_text, pos = _header_line(raw, pos)
        width, height = (int(t) for t in dims.split())
        scale = float(scale_text)
    except (UnicodeDecodeError, ValueError) as exc:
        raise ImageIOError(f"{path} has a malformed PFM header") from exc
    if magic != "PF":
        raise ImageIOError(f"{path} is not a colour PFM (magic {magic!r})")
    dtype = "<f4" if scale < 0 else ">f4"
    expected = width * height * 3 * 4
    if len(raw) - pos != expected:
        raise ImageIOError(f"{path}: expected {expected} bytes of pixels, got {len(raw) - pos}")
    pixels = np.frombuffer(raw, dtype=dtype, offset=pos).reshape(height, width, 3)
    return pixels[::-1].astype(np.float32)


def write_png(path: str | Path, image: np.ndarray) -> Path:
    path = Path(path)
    encoded = np.clip(np.asarray(image, dtype=float), 0.0, 1.0) ** PNG_GAMMA
    pixels = np.round(encoded * 255.0).astype(np.uint8)
    try:
        Image.fromarray(pixels).save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
    return path


def write_image(path: str | Path, image: np.ndarray) -> list[Path]:
    """Always a PFM; a PNG as well when ``path`` ends in ``.png``."""

    path = Path(path)
    if path.suffix.lower() == ".png":
        return [write_pfm(path.with_suffix(".pfm"), image), write_png(path, image)]
    return [write_pfm(path, image)]


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean squared difference over every pixel and channel."""

    if a.shape != b.shape:
        raise ImageShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return math.sqrt(float(np.mean(diff * diff)))
