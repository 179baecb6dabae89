from __future__ import annotations

import numpy as np
import pytest

from gmis.errors import ParameterError
from gmis.pathspace import PathVertex
from gmis.photons import PhotonStore, build_photon_structure
from gmis.rng import substream

UP = np.array([0.0, 0.0, 1.0])


def _vertices(points: np.ndarray) -> list[PathVertex]:
    return [PathVertex(p, UP, None, np.ones(3)) for p in points]


def test_empty_store() -> None:
    store = build_photon_structure([], 0.1)
    assert len(store) == 0
    assert store.query(np.zeros(3)) == []


def test_single_vertex_found_at_its_position() -> None:
    store = build_photon_structure(_vertices(np.array([[0.3, -0.2, 5.0]])), 0.05)
    assert store.query(np.array([0.3, -0.2, 5.0])) == [0]
    assert store.query(np.array([0.3, -0.2, 5.2])) == []


def test_radius_must_be_positive() -> None:
    with pytest.raises(ParameterError):
        PhotonStore([], 0.0)


@pytest.mark.parametrize(
    "count, radius, queries",
    [(2_000, 0.05, 300), (5_000, 0.2, 300), (500, 1.5, 100)],
)
def test_grid_matches_brute_force(count: int, radius: float, queries: int) -> None:
    rng = substream(31, count)
    store = PhotonStore(_vertices(rng.uniform(-1.0, 1.0, size=(count, 3))), radius)
    for center in rng.uniform(-1.2, 1.2, size=(queries, 3)):
        assert store.query(center) == store.query_brute(center)


@pytest.mark.slow
def test_grid_matches_brute_force_at_scale() -> None:
    rng = substream(32, 0)
    store = PhotonStore(_vertices(rng.uniform(-1.0, 1.0, size=(100_000, 3))), 0.03)
    for center in rng.uniform(-1.0, 1.0, size=(1_000, 3)):
        assert store.query(center) == store.query_brute(center)
