"""Uniform hash grid over light vertices for fixed-radius range queries."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Sequence
from itertools import product
from typing import Generic, Protocol, TypeVar

import numpy as np

from .params import require_positive


class HasPosition(Protocol):
    position: np.ndarray


V = TypeVar("V", bound=HasPosition)

_NEIGHBOURS = list(product((-1, 0, 1), repeat=3))


class PhotonStore(Generic[V]):
    """Light vertices hashed into cells of edge ``2 * radius``."""

    def __init__(self, vertices: Sequence[V], radius: float) -> None:
        self.radius = require_positive("radius", radius)
        self.vertices = list(vertices)
        self.cell = 2.0 * radius
        self.positions = (
            np.array([v.position for v in self.vertices]) if self.vertices else np.zeros((0, 3))
        )
        self._grid: dict[tuple[int, int, int], list[int]] = defaultdict(list)
        for i, p in enumerate(self.positions):
            self._grid[self._key(p)].append(i)

    def __len__(self) -> int:
        return len(self.vertices)

    def _key(self, p: np.ndarray) -> tuple[int, int, int]:
        return (
            math.floor(p[0] / self.cell),
            math.floor(p[1] / self.cell),
            math.floor(p[2] / self.cell),
        )

    def query(self, center: np.ndarray) -> list[int]:
        """Indices of vertices within ``radius`` of ``center``, ascending."""

        if not self.vertices:
            return []
        kx, ky, kz = self._key(center)
        candidates: list[int] = []
        for dx, dy, dz in _NEIGHBOURS:
            candidates.extend(self._grid.get((kx + dx, ky + dy, kz + dz), ()))
        if not candidates:
            return []
        idx = np.array(sorted(candidates))
        d = self.positions[idx] - center
        inside = np.einsum("ij,ij->i", d, d) <= self.radius**2
        return idx[inside].tolist()

    def query_brute(self, center: np.ndarray) -> list[int]:
        if not self.vertices:
            return []
        d = self.positions - center
        return np.flatnonzero(np.einsum("ij,ij->i", d, d) <= self.radius**2).tolist()


def build_photon_structure(vertices: Sequence[V], radius: float) -> PhotonStore[V]:
    return PhotonStore(vertices, radius)
