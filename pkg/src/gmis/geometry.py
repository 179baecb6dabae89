"""Rays, shapes and a bounding volume hierarchy over them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ParameterError

Vec = tuple[float, float, float]

EPSILON = 1e-7
INF = math.inf


def vec(v: Vec | np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(3)


def normalize(v: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(v @ v))
    if n == 0.0:
        raise ParameterError("cannot normalize a zero vector")
    return v / n


def orthonormal_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two tangents completing ``n`` to a right-handed frame (branchless construction)."""

    sign = math.copysign(1.0, float(n[2]))
    a = -1.0 / (sign + n[2])
    b = n[0] * n[1] * a
    t1 = np.array([1.0 + sign * n[0] * n[0] * a, sign * b, -sign * n[0]])
    t2 = np.array([b, sign + n[1] * n[1] * a, -n[1]])
    return t1, t2


def to_world(local: np.ndarray, n: np.ndarray) -> np.ndarray:
    t1, t2 = orthonormal_basis(n)
    return local[0] * t1 + local[1] * t2 + local[2] * n


def reflect(w: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror ``w`` (pointing away from the surface) about ``n``."""

    return 2.0 * float(w @ n) * n - w


@dataclass(eq=False, slots=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    tmin: float = EPSILON
    tmax: float = INF

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(eq=False, slots=True)
class Hit:
    t: float
    position: np.ndarray
    normal: np.ndarray  # faces the side the ray came from
    geometric_normal: np.ndarray  # the shape's own orientation
    material: str
    shape_id: int
    front_face: bool


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Sphere:
    center: Vec
    radius: float
    material: str
    _c: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ParameterError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "_c", vec(self.center))

    @property
    def area(self) -> float:
        return 4.0 * math.pi * self.radius**2

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._c - self.radius, self._c + self.radius

    def intersect(self, o: np.ndarray, d: np.ndarray, tmin: float, tmax: float) -> Optional[float]:
        oc = o - self._c
        b = float(oc @ d)
        c = float(oc @ oc) - self.radius**2
        disc = b * b - c
        if disc < 0.0:
            return None
        root = math.sqrt(disc)
        for t in (-b - root, -b + root):
            if tmin < t < tmax:
                return t
        return None

    def normal_at(self, p: np.ndarray) -> np.ndarray:
        return (p - self._c) / self.radius

    def sample(self, u1: float, u2: float) -> tuple[np.ndarray, np.ndarray]:
        z = 1.0 - 2.0 * u1
        r = math.sqrt(max(0.0, 1.0 - z * z))
        phi = 2.0 * math.pi * u2
        n = np.array([r * math.cos(phi), r * math.sin(phi), z])
        return self._c + self.radius * n, n


@dataclass(frozen=True, slots=True)
class Box:
    lo: Vec
    hi: Vec
    material: str
    _lo: np.ndarray = field(init=False, repr=False, compare=False)
    _hi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        lo, hi = vec(self.lo), vec(self.hi)
        if np.any(lo >= hi):
            raise ParameterError(f"box needs min < max on every axis, got {self.lo} {self.hi}")
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    @property
    def _extent(self) -> np.ndarray:
        return self._hi - self._lo

    @property
    def area(self) -> float:
        a, b, c = self._extent
        return float(2.0 * (a * b + b * c + c * a))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._lo, self._hi

    def intersect(self, o: np.ndarray, d: np.ndarray, tmin: float, tmax: float) -> Optional[float]:
        t0, t1 = -INF, INF
        for axis in range(3):
            if d[axis] == 0.0:
                if o[axis] < self._lo[axis] or o[axis] > self._hi[axis]:
                    return None
                continue
            inv = 1.0 / d[axis]
            a = (self._lo[axis] - o[axis]) * inv
            b = (self._hi[axis] - o[axis]) * inv
            if a > b:
                a, b = b, a
            t0, t1 = max(t0, a), min(t1, b)
            if t0 > t1:
                return None
        for t in (t0, t1):
            if tmin < t < tmax:
                return float(t)
        return None

    def normal_at(self, p: np.ndarray) -> np.ndarray:
        # the face whose plane p is closest to, relative to the box size
        rel_lo = np.abs(p - self._lo) / self._extent
        rel_hi = np.abs(p - self._hi) / self._extent
        n = np.zeros(3)
        if rel_lo.min() <= rel_hi.min():
            n[int(rel_lo.argmin())] = -1.0
        else:
            n[int(rel_hi.argmin())] = 1.0
        return n

    def sample(self, u1: float, u2: float) -> tuple[np.ndarray, np.ndarray]:
        a, b, c = self._extent
        faces = [b * c, b * c, a * c, a * c, a * b, a * b]
        total = sum(faces)
        pick = u1 * total
        face = 0
        while face < 5 and pick >= faces[face]:
            pick -= faces[face]
            face += 1
        u1 = min(pick / faces[face], 1.0)
        axis, upper = face // 2, face % 2 == 1
        p = self._lo.copy()
        others = [i for i in range(3) if i != axis]
        p[others[0]] = self._lo[others[0]] + u1 * self._extent[others[0]]
        p[others[1]] = self._lo[others[1]] + u2 * self._extent[others[1]]
        p[axis] = self._hi[axis] if upper else self._lo[axis]
        n = np.zeros(3)
        n[axis] = 1.0 if upper else -1.0
        return p, n


@dataclass(frozen=True, slots=True)
class Triangle:
    a: Vec
    b: Vec
    c: Vec
    material: str
    _a: np.ndarray = field(init=False, repr=False, compare=False)
    _e1: np.ndarray = field(init=False, repr=False, compare=False)
    _e2: np.ndarray = field(init=False, repr=False, compare=False)
    _n: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        a, b, c = vec(self.a), vec(self.b), vec(self.c)
        e1, e2 = b - a, c - a
        cross = np.cross(e1, e2)
        if float(cross @ cross) == 0.0:
            raise ParameterError("degenerate triangle")
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_e1", e1)
        object.__setattr__(self, "_e2", e2)
        object.__setattr__(self, "_n", normalize(cross))

    @property
    def area(self) -> float:
        return 0.5 * float(np.linalg.norm(np.cross(self._e1, self._e2)))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.stack([self._a, self._a + self._e1, self._a + self._e2])
        return pts.min(axis=0), pts.max(axis=0)

    def intersect(self, o: np.ndarray, d: np.ndarray, tmin: float, tmax: float) -> Optional[float]:
        p = np.cross(d, self._e2)
        det = float(self._e1 @ p)
        if det == 0.0:
            return None
        inv = 1.0 / det
        s = o - self._a
        u = float(s @ p) * inv
        if u < 0.0 or u > 1.0:
            return None
        q = np.cross(s, self._e1)
        v = float(d @ q) * inv
        if v < 0.0 or u + v > 1.0:
            return None
        t = float(self._e2 @ q) * inv
        return t if tmin < t < tmax else None

    def normal_at(self, p: np.ndarray) -> np.ndarray:
        return self._n

    def sample(self, u1: float, u2: float) -> tuple[np.ndarray, np.ndarray]:
        su = math.sqrt(u1)
        return self._a + su * (1.0 - u2) * self._e1 + su * u2 * self._e2, self._n


@dataclass(frozen=True, slots=True)
class Parallelogram:
    """``corner + s * e1 + t * e2`` for s, t in [0, 1]; faces ``e1 x e2``."""

    corner: Vec
    e1: Vec
    e2: Vec
    material: str
    _o: np.ndarray = field(init=False, repr=False, compare=False)
    _u: np.ndarray = field(init=False, repr=False, compare=False)
    _v: np.ndarray = field(init=False, repr=False, compare=False)
    _n: np.ndarray = field(init=False, repr=False, compare=False)
    _area: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        o, u, v = vec(self.corner), vec(self.e1), vec(self.e2)
        cross = np.cross(u, v)
        area = float(np.linalg.norm(cross))
        if area == 0.0:
            raise ParameterError("degenerate parallelogram")
        object.__setattr__(self, "_o", o)
        object.__setattr__(self, "_u", u)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_n", cross / area)
        object.__setattr__(self, "_area", area)

    @property
    def area(self) -> float:
        return self._area

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.stack([self._o, self._o + self._u, self._o + self._v, self._o + self._u + self._v])
        return pts.min(axis=0), pts.max(axis=0)

    def intersect(self, o: np.ndarray, d: np.ndarray, tmin: float, tmax: float) -> Optional[float]:
        denom = float(self._n @ d)
        if denom == 0.0:
            return None
        t = float(self._n @ (self._o - o)) / denom
        if not tmin < t < tmax:
            return None
        rel = o + t * d - self._o
        # solve rel = s u + t v in the plane
        uu, uv, vv = float(self._u @ self._u), float(self._u @ self._v), float(self._v @ self._v)
        ru, rv = float(rel @ self._u), float(rel @ self._v)
        det = uu * vv - uv * uv
        s = (ru * vv - rv * uv) / det
        w = (rv * uu - ru * uv) / det
        if s < 0.0 or s > 1.0 or w < 0.0 or w > 1.0:
            return None
        return t

    def normal_at(self, p: np.ndarray) -> np.ndarray:
        return self._n

    def sample(self, u1: float, u2: float) -> tuple[np.ndarray, np.ndarray]:
        return self._o + u1 * self._u + u2 * self._v, self._n


Shape = Union[Sphere, Box, Triangle, Parallelogram]


def make_hit(shape: Shape, shape_id: int, ray: Ray, t: float) -> Hit:
    p = ray.at(t)
    n = shape.normal_at(p)
    front = float(n @ ray.direction) < 0.0
    return Hit(
        t=t,
        position=p,
        normal=n if front else -n,
        geometric_normal=n,
        material=shape.material,
        shape_id=shape_id,
        front_face=front,
    )


def intersect_brute(shapes: list[Shape], ray: Ray) -> Optional[Hit]:
    """Nearest hit by testing every shape; ties go to the lower shape id."""

    best_t, best_id = ray.tmax, -1
    for i, shape in enumerate(shapes):
        t = shape.intersect(ray.origin, ray.direction, ray.tmin, best_t)
        if t is not None and t < best_t:
            best_t, best_id = t, i
    if best_id < 0:
        return None
    return make_hit(shapes[best_id], best_id, ray, best_t)


# ---------------------------------------------------------------------------
# BVH
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class BVHNode:
    lo: np.ndarray
    hi: np.ndarray
    left: int = -1
    right: int = -1
    start: int = 0
    count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.count > 0


def _slab(lo: np.ndarray, hi: np.ndarray, o: np.ndarray, inv: np.ndarray, tmax: float) -> bool:
    with np.errstate(invalid="ignore"):
        a = (lo - o) * inv
        b = (hi - o) * inv
    near = np.nanmax(np.minimum(a, b))
    far = np.nanmin(np.maximum(a, b))
    return bool(near <= far and far >= 0.0 and near <= tmax)


class BVH:
    """Median-split hierarchy over shape bounds; queries equal ``intersect_brute``."""

    LEAF_SIZE = 2

    def __init__(self, shapes: list[Shape]) -> None:
        self.shapes = shapes
        self.order: list[int] = list(range(len(shapes)))
        self.nodes: list[BVHNode] = []
        bounds = [s.bounds() for s in shapes]
        self._lo = np.array([b[0] for b in bounds]) if shapes else np.zeros((0, 3))
        self._hi = np.array([b[1] for b in bounds]) if shapes else np.zeros((0, 3))
        if shapes:
            self._build(0, len(shapes))

    def _build(self, start: int, end: int) -> int:
        idx = self.order[start:end]
        lo = self._lo[idx].min(axis=0) - EPSILON
        hi = self._hi[idx].max(axis=0) + EPSILON
        node_id = len(self.nodes)
        node = BVHNode(lo, hi)
        self.nodes.append(node)
        if end - start <= self.LEAF_SIZE:
            node.start, node.count = start, end - start
            return node_id
        centroids = 0.5 * (self._lo[idx] + self._hi[idx])
        axis = int(np.argmax(centroids.max(axis=0) - centroids.min(axis=0)))
        ranked = sorted(zip(centroids[:, axis].tolist(), idx))
        self.order[start:end] = [i for _, i in ranked]
        mid = (start + end) // 2
        node.left = self._build(start, mid)
        node.right = self._build(mid, end)
        return node_id

    def intersect(self, ray: Ray) -> Optional[Hit]:
        if not self.nodes:
            return None
        o, d = ray.origin, ray.direction
        with np.errstate(divide="ignore"):
            inv = 1.0 / d
        best_t, best_id = ray.tmax, -1
        stack = [0]
        while stack:
            node = self.nodes[stack.pop()]
            if not _slab(node.lo, node.hi, o, inv, best_t):
                continue
            if node.is_leaf:
                for i in self.order[node.start : node.start + node.count]:
                    t = self.shapes[i].intersect(o, d, ray.tmin, ray.tmax)
                    if t is not None and (t < best_t or (t == best_t and i < best_id)):
                        best_t, best_id = t, i
            else:
                stack.append(node.right)
                stack.append(node.left)
        if best_id < 0:
            return None
        return make_hit(self.shapes[best_id], best_id, ray, best_t)
