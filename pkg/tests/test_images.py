from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from gmis.errors import ImageIOError, ImageShapeError, ParameterError
from gmis.film import Film, luminance
from gmis.images import read_pfm, rmse, write_image, write_pfm, write_png
from gmis.rng import substream


def test_pfm_round_trip_is_bit_exact(tmp_path: Path) -> None:
    image = substream(41, 0).normal(size=(5, 7, 3)).astype(np.float32)
    path = write_pfm(tmp_path / "a.pfm", image)
    back = read_pfm(path)
    assert back.shape == (5, 7, 3)
    assert back.tobytes() == image.tobytes()


def test_pfm_layout(tmp_path: Path) -> None:
    image = np.zeros((2, 1, 3), dtype=np.float32)
    image[0, 0] = (1.0, 2.0, 3.0)  # top row
    raw = write_pfm(tmp_path / "a.pfm", image).read_bytes()
    assert raw.startswith(b"PF\n1 2\n-1.0\n")
    pixels = np.frombuffer(raw[len(b"PF\n1 2\n-1.0\n") :], dtype="<f4")
    assert pixels.tolist() == [0.0, 0.0, 0.0, 1.0, 2.0, 3.0]


def test_big_endian_pfm(tmp_path: Path) -> None:
    path = tmp_path / "be.pfm"
    path.write_bytes(b"PF\n1 1\n1.0\n" + np.array([0.5, 1.5, 2.5], dtype=">f4").tobytes())
    assert read_pfm(path).tolist() == [[[0.5, 1.5, 2.5]]]


@pytest.mark.parametrize(
    "payload",
    [b"Pf\n1 1\n-1.0\n" + bytes(4), b"PF\n1 1\n-1.0\n" + bytes(8), b"PF\nx y\n-1.0\n", b"PF\n"],
)
def test_malformed_pfm(tmp_path: Path, payload: bytes) -> None:
    path = tmp_path / "bad.pfm"
    path.write_bytes(payload)
    with pytest.raises(ImageIOError):
        read_pfm(path)


def test_missing_pfm(tmp_path: Path) -> None:
    with pytest.raises(ImageIOError):
        read_pfm(tmp_path / "none.pfm")


def test_png_gamma(tmp_path: Path) -> None:
    image = np.array([[[0.0, 0.5, 2.0]]])
    with Image.open(write_png(tmp_path / "a.png", image)) as png:
        pixel = png.getpixel((0, 0))
    assert pixel == (0, round(255 * 0.5 ** (1 / 2.2)), 255)


def test_png_name_writes_both(tmp_path: Path) -> None:
    written = write_image(tmp_path / "out.png", np.zeros((2, 2, 3)))
    assert [p.name for p in written] == ["out.pfm", "out.png"]
    assert all(p.exists() for p in written)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (np.zeros((1, 1, 3)), np.zeros((1, 1, 3)), 0.0),
        (np.zeros((1, 1, 3)), np.ones((1, 1, 3)), 1.0),
        (np.zeros((1, 2, 3)), np.full((1, 2, 3), 2.0), 2.0),
    ],
)
def test_rmse(a: np.ndarray, b: np.ndarray, expected: float) -> None:
    assert rmse(a, b) == pytest.approx(expected)


def test_rmse_matches_reference_formula() -> None:
    rng = substream(42, 0)
    a, b = rng.random((4, 6, 3)), rng.random((4, 6, 3))
    assert rmse(a, b) == pytest.approx(math.sqrt(((a - b) ** 2).mean()), abs=1e-9)


def test_rmse_shape_mismatch() -> None:
    with pytest.raises(ImageShapeError):
        rmse(np.zeros((1, 1, 3)), np.zeros((1, 2, 3)))


# film --------------------------------------------------------------------------


def test_film_running_mean() -> None:
    film = Film(2, 1)
    frames = [np.full((1, 2, 3), v) for v in (1.0, 2.0, 6.0)]
    for frame in frames:
        film.add_iteration(frame)
    assert film.iterations == 3
    assert np.allclose(film.image(), 3.0)
    assert np.allclose(film.luminance_variance(), np.var([1.0, 2.0, 6.0]))


def test_film_rejects_non_finite_frames() -> None:
    film = Film(1, 1)
    with pytest.raises(ParameterError):
        film.add_iteration(np.full((1, 1, 3), np.nan))
    assert film.iterations == 0


def test_film_rejects_wrong_shape() -> None:
    with pytest.raises(ImageShapeError):
        Film(2, 2).add_iteration(np.zeros((2, 3, 3)))


def test_luminance_of_white_is_one() -> None:
    assert luminance(np.ones(3)) == pytest.approx(1.0)
