"""Scenes: the text grammar, lights, the pinhole camera and intersection queries.

Grammar (one directive per line, ``#`` comments)::

    material NAME diffuse R G B [emit R G B]
    material NAME phong   R G B EXPONENT [emit R G B]
    material NAME mirror  R G B [emit R G B]
    material NAME glass   R G B IOR [emit R G B]
    sphere CX CY CZ RADIUS MATERIAL
    box    X0 Y0 Z0 X1 Y1 Z1 MATERIAL
    tri    AX AY AZ BX BY BZ CX CY CZ MATERIAL
    quad   CX CY CZ E1X E1Y E1Z E2X E2Y E2Z MATERIAL
    arealight CX CY CZ E1X E1Y E1Z E2X E2Y E2Z R G B
    dirlight  DX DY DZ R G B
    camera PX PY PZ LX LY LZ UX UY UZ FOV_DEGREES

Every shape with an emissive material is an area light emitting from the side its
normal faces. ``arealight`` is shorthand for a black emissive ``quad``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ImageIOError, ParameterError, SceneParseError
from .geometry import (
    BVH,
    Box,
    Hit,
    Parallelogram,
    Ray,
    Shape,
    Sphere,
    Triangle,
    Vec,
    intersect_brute,
    normalize,
    to_world,
    vec,
)
from .materials import BLACK, Material
from .params import directives

AREALIGHT_PREFIX = "arealight:"
FIXTURE_SCENES = ("box", "diffuse_room", "mirror_wall", "glossy_floor", "furnace")


# ---------------------------------------------------------------------------
# Camera
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Camera:
    position: Vec
    look_at: Vec
    up: Vec
    fov: float  # vertical, degrees

    def __post_init__(self) -> None:
        if not 0.0 < self.fov < 180.0:
            raise ParameterError(f"camera fov must be in (0, 180), got {self.fov}")

    def for_film(self, width: int, height: int) -> PinholeCamera:
        return PinholeCamera(self, width, height)


@dataclass(eq=False, slots=True)
class CameraSample:
    pixel: tuple[int, int]
    film: tuple[float, float]
    direction: np.ndarray  # from the pinhole towards the point
    distance: float
    cos_theta: float
    importance: float  # W_e
    pdf: float  # solid-angle density of the camera choosing this direction


class PinholeCamera:
    """A camera bound to a film size; pixel (0, 0) is the top-left corner."""

    def __init__(self, camera: Camera, width: int, height: int) -> None:
        if width < 1 or height < 1:
            raise ParameterError(f"film must be at least 1x1, got {width}x{height}")
        self.camera = camera
        self.width = width
        self.height = height
        self.origin = vec(camera.position)
        self.forward = normalize(vec(camera.look_at) - self.origin)
        self.right = normalize(np.cross(self.forward, vec(camera.up)))
        self.up = np.cross(self.right, self.forward)
        self.d_img = height / (2.0 * math.tan(math.radians(camera.fov) / 2.0))

    def importance(self, cos_theta: float) -> float:
        return self.d_img**2 / cos_theta**4

    def pdf(self, cos_theta: float) -> float:
        return self.d_img**2 / cos_theta**3

    def generate_ray(self, x: int, y: int, u1: float, u2: float) -> tuple[Ray, float]:
        """Ray through film point (x + u1, y + u2) and its cosine to the optical axis."""

        sx = x + u1 - 0.5 * self.width
        sy = 0.5 * self.height - (y + u2)
        d = normalize(self.d_img * self.forward + sx * self.right + sy * self.up)
        return Ray(self.origin, d), float(d @ self.forward)

    def project(self, point: np.ndarray) -> Optional[CameraSample]:
        v = point - self.origin
        z = float(v @ self.forward)
        if z <= 0.0:
            return None
        fx = self.d_img * float(v @ self.right) / z + 0.5 * self.width
        fy = 0.5 * self.height - self.d_img * float(v @ self.up) / z
        if not (0.0 <= fx < self.width and 0.0 <= fy < self.height):
            return None
        dist = math.sqrt(float(v @ v))
        cos = z / dist
        return CameraSample(
            pixel=(int(fx), int(fy)),
            film=(fx, fy),
            direction=v / dist,
            distance=dist,
            cos_theta=cos,
            importance=self.importance(cos),
            pdf=self.pdf(cos),
        )


def camera_importance(camera: PinholeCamera, position: np.ndarray) -> Optional[CameraSample]:
    """Pixel, W_e and pdf for a world point; ``None`` behind the camera or off the film."""

    return camera.project(position)


# ---------------------------------------------------------------------------
# Lights
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class AreaLight:
    shape_id: int
    emission: Vec


@dataclass(frozen=True, slots=True)
class DirectionalLight:
    direction: Vec  # direction the light travels
    irradiance: Vec


Light = Union[AreaLight, DirectionalLight]


@dataclass(eq=False, slots=True)
class LightSample:
    position: np.ndarray
    normal: np.ndarray  # emitting side; the propagation direction for directional lights
    emission: np.ndarray
    pdf_area: float
    is_delta: bool


# ---------------------------------------------------------------------------
# Scene
# ---------------------------------------------------------------------------


@dataclass(eq=True)
class Scene:
    shapes: list[Shape]
    materials: dict[str, Material]
    camera: Camera
    dirlights: list[DirectionalLight] = field(default_factory=list)
    lights: list[Light] = field(init=False, compare=False)
    bvh: BVH = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        for i, s in enumerate(self.shapes):
            if s.material not in self.materials:
                raise ParameterError(f"shape {i} references unknown material {s.material!r}")
        self.lights = [
            AreaLight(i, self.materials[s.material].emission)
            for i, s in enumerate(self.shapes)
            if self.materials[s.material].is_emissive
        ]
        self.lights.extend(self.dirlights)
        self._light_of_shape = {
            light.shape_id: k for k, light in enumerate(self.lights) if isinstance(light, AreaLight)
        }
        self.bvh = BVH(self.shapes)
        if self.shapes:
            lo = np.min([s.bounds()[0] for s in self.shapes], axis=0)
            hi = np.max([s.bounds()[1] for s in self.shapes], axis=0)
        else:
            lo = hi = np.zeros(3)
        self.center = 0.5 * (lo + hi)
        self.diagonal = float(np.linalg.norm(hi - lo))
        self.radius = max(0.5 * self.diagonal, 1e-3)
        self.epsilon = 1e-6 * max(1.0, self.diagonal)
        power = np.array([self.light_power(light) for light in self.lights])
        self._pick = power / power.sum() if power.sum() > 0 else power
        self._cdf = np.cumsum(self._pick)

    # -- queries ------------------------------------------------------------

    def intersect(self, ray: Ray) -> Optional[Hit]:
        return self.bvh.intersect(ray)

    def intersect_brute(self, ray: Ray) -> Optional[Hit]:
        return intersect_brute(self.shapes, ray)

    def spawn(self, origin: np.ndarray, direction: np.ndarray) -> Ray:
        return Ray(origin, direction, tmin=self.epsilon)

    def visible(self, a: np.ndarray, b: np.ndarray) -> bool:
        d = b - a
        dist = math.sqrt(float(d @ d))
        if dist <= 2.0 * self.epsilon:
            return True
        ray = Ray(a, d / dist, tmin=self.epsilon, tmax=dist - self.epsilon)
        return self.bvh.intersect(ray) is None

    def material_of(self, hit: Hit) -> Material:
        return self.materials[hit.material]

    # -- lights -------------------------------------------------------------

    def light_power(self, light: Light) -> float:
        if isinstance(light, AreaLight):
            return self.shapes[light.shape_id].area * math.pi * float(np.mean(light.emission))
        return math.pi * self.radius**2 * float(np.mean(light.irradiance))

    def light_of_shape(self, shape_id: int) -> Optional[int]:
        return self._light_of_shape.get(shape_id)

    def light_pick_pdf(self, index: int) -> float:
        return float(self._pick[index])

    def pick_light(self, u: float) -> tuple[int, float]:
        """Light index chosen proportionally to power, and its probability."""

        if not self.lights:
            raise ParameterError("scene has no lights")
        k = int(np.searchsorted(self._cdf, u * self._cdf[-1], side="right"))
        k = min(k, len(self.lights) - 1)
        while self._pick[k] == 0.0 and k > 0:
            k -= 1
        return k, float(self._pick[k])

    def emitted(self, hit: Hit, towards: np.ndarray) -> np.ndarray:
        """Radiance leaving ``hit`` in direction ``towards`` (one-sided emitters)."""

        material = self.materials[hit.material]
        if not material.is_emissive or float(hit.geometric_normal @ towards) <= 0.0:
            return np.zeros(3)
        return np.asarray(material.emission, dtype=float)

    def disk_frame(self, light: DirectionalLight) -> tuple[np.ndarray, np.ndarray]:
        """Centre of the emitting disk of a directional light and its unit direction."""

        d = normalize(vec(light.direction))
        return self.center - 2.0 * self.radius * d, d

    def light_sample(self, light: Light, u1: float, u2: float) -> LightSample:
        """A point on ``light``: uniform by area, or on the disk of a directional light."""

        if isinstance(light, AreaLight):
            shape = self.shapes[light.shape_id]
            p, n = shape.sample(u1, u2)
            emission = np.asarray(light.emission, dtype=float)
            return LightSample(p, n, emission, 1.0 / shape.area, False)
        origin, d = self.disk_frame(light)
        r, phi = self.radius * math.sqrt(u1), 2.0 * math.pi * u2
        p = origin + to_world(np.array([r * math.cos(phi), r * math.sin(phi), 0.0]), d)
        return LightSample(
            p, d, np.asarray(light.irradiance, dtype=float), 1.0 / (math.pi * self.radius**2), True
        )


def light_sample(scene: Scene, light: Light, rng: np.random.Generator) -> LightSample:
    u = rng.random(2)
    return scene.light_sample(light, float(u[0]), float(u[1]))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_ARITY = {"sphere": 4, "box": 6, "tri": 9, "quad": 9}


def _numbers(tokens: list[str], columns: list[int], lineno: int) -> list[float]:
    out = []
    for tok, col in zip(tokens, columns):
        try:
            out.append(float(tok))
        except ValueError:
            message = f"expected a number, got {tok!r}"
            raise SceneParseError(message, line=lineno, column=col) from None
    return out


def _triple(values: list[float], i: int) -> Vec:
    return (values[i], values[i + 1], values[i + 2])


def _parse_material(tokens: list[str], columns: list[int], lineno: int) -> Material:
    if len(tokens) < 6:
        raise SceneParseError("material takes NAME KIND R G B", line=lineno, column=columns[0])
    name, kind = tokens[1], tokens[2]
    if kind not in ("diffuse", "phong", "mirror", "glass"):
        raise SceneParseError(f"unknown material kind {kind!r}", line=lineno, column=columns[2])
    rest, rest_cols = tokens[3:], columns[3:]
    emission: Vec = BLACK
    if "emit" in rest:
        k = rest.index("emit")
        if len(rest) != k + 4:
            raise SceneParseError("emit takes R G B", line=lineno, column=rest_cols[k])
        emission = _triple(_numbers(rest[k + 1 :], rest_cols[k + 1 :], lineno), 0)
        rest, rest_cols = rest[:k], rest_cols[:k]
    extra = 1 if kind in ("phong", "glass") else 0
    if len(rest) != 3 + extra:
        what = {"phong": " EXPONENT", "glass": " IOR"}.get(kind, "")
        raise SceneParseError(f"{kind} material takes R G B{what}", line=lineno, column=columns[0])
    values = _numbers(rest, rest_cols, lineno)
    options = {}
    if kind == "phong":
        options["exponent"] = values[3]
    elif kind == "glass":
        options["ior"] = values[3]
    try:
        return Material(
            name, kind, _triple(values, 0), emission=emission, **options  # type: ignore[arg-type]
        )
    except ParameterError as exc:
        raise SceneParseError(str(exc), line=lineno, column=columns[1]) from exc


def parse_scene(text: str) -> Scene:
    """Parse and validate a scene file; errors carry line and column."""

    materials: dict[str, Material] = {}
    shapes: list[Shape] = []
    dirlights: list[DirectionalLight] = []
    camera: Optional[Camera] = None
    for lineno, tokens, columns in directives(text):
        head = tokens[0]
        try:
            if head == "material":
                material = _parse_material(tokens, columns, lineno)
                if material.name in materials:
                    raise SceneParseError(
                        f"duplicate material {material.name!r}", line=lineno, column=columns[1]
                    )
                materials[material.name] = material
            elif head in _ARITY:
                n = _ARITY[head]
                if len(tokens) != n + 2:
                    raise SceneParseError(
                        f"{head} takes {n} numbers and a material", line=lineno, column=columns[0]
                    )
                name = tokens[-1]
                if name not in materials:
                    raise SceneParseError(
                        f"unknown material {name!r}", line=lineno, column=columns[-1]
                    )
                v = _numbers(tokens[1:-1], columns[1:-1], lineno)
                if head == "sphere":
                    shapes.append(Sphere(_triple(v, 0), v[3], name))
                elif head == "box":
                    shapes.append(Box(_triple(v, 0), _triple(v, 3), name))
                elif head == "tri":
                    shapes.append(Triangle(_triple(v, 0), _triple(v, 3), _triple(v, 6), name))
                else:
                    shapes.append(Parallelogram(_triple(v, 0), _triple(v, 3), _triple(v, 6), name))
            elif head == "arealight":
                if len(tokens) != 13:
                    raise SceneParseError(
                        "arealight takes CORNER E1 E2 R G B", line=lineno, column=columns[0]
                    )
                v = _numbers(tokens[1:], columns[1:], lineno)
                name = f"{AREALIGHT_PREFIX}{len(shapes)}"
                materials[name] = Material(name, "diffuse", BLACK, emission=_triple(v, 9))
                shapes.append(Parallelogram(_triple(v, 0), _triple(v, 3), _triple(v, 6), name))
            elif head == "dirlight":
                if len(tokens) != 7:
                    raise SceneParseError(
                        "dirlight takes DX DY DZ R G B", line=lineno, column=columns[0]
                    )
                v = _numbers(tokens[1:], columns[1:], lineno)
                normalize(vec(_triple(v, 0)))
                dirlights.append(DirectionalLight(_triple(v, 0), _triple(v, 3)))
            elif head == "camera":
                if len(tokens) != 11:
                    raise SceneParseError(
                        "camera takes POS LOOKAT UP FOV", line=lineno, column=columns[0]
                    )
                if camera is not None:
                    raise SceneParseError("second camera", line=lineno, column=columns[0])
                v = _numbers(tokens[1:], columns[1:], lineno)
                camera = Camera(_triple(v, 0), _triple(v, 3), _triple(v, 6), v[9])
            else:
                raise SceneParseError(
                    f"unknown directive {head!r}", line=lineno, column=columns[0]
                )
        except ParameterError as exc:
            raise SceneParseError(str(exc), line=lineno, column=columns[0]) from exc
    if camera is None:
        raise SceneParseError("scene has no camera")
    scene = Scene(shapes, materials, camera, dirlights)
    if not scene.lights:
        raise SceneParseError("scene has no lights")
    return scene


def _fmt(*values: float) -> str:
    return " ".join(repr(float(v)) for v in values)


def serialize_scene(scene: Scene) -> str:
    """Text that parses back to an equal Scene."""

    lines = []
    for m in scene.materials.values():
        if m.name.startswith(AREALIGHT_PREFIX):
            continue
        extra = {"phong": f" {m.exponent!r}", "glass": f" {m.ior!r}"}.get(m.kind, "")
        emit = f" emit {_fmt(*m.emission)}" if m.is_emissive else ""
        lines.append(f"material {m.name} {m.kind} {_fmt(*m.albedo)}{extra}{emit}")
    for s in scene.shapes:
        if isinstance(s, Sphere):
            lines.append(f"sphere {_fmt(*s.center, s.radius)} {s.material}")
        elif isinstance(s, Box):
            lines.append(f"box {_fmt(*s.lo, *s.hi)} {s.material}")
        elif isinstance(s, Triangle):
            lines.append(f"tri {_fmt(*s.a, *s.b, *s.c)} {s.material}")
        elif s.material.startswith(AREALIGHT_PREFIX):
            emission = scene.materials[s.material].emission
            lines.append(f"arealight {_fmt(*s.corner, *s.e1, *s.e2, *emission)}")
        else:
            lines.append(f"quad {_fmt(*s.corner, *s.e1, *s.e2)} {s.material}")
    for d in scene.dirlights:
        lines.append(f"dirlight {_fmt(*d.direction, *d.irradiance)}")
    c = scene.camera
    lines.append(f"camera {_fmt(*c.position, *c.look_at, *c.up, c.fov)}")
    return "\n".join(lines) + "\n"


def load_scene(path: str | Path) -> Scene:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot read scene {path}: {exc}") from exc
    return parse_scene(text)


def fixture_text(name: str) -> str:
    filename = name if name.endswith(".scn") else f"{name}.scn"
    ref = resources.files("gmis") / "fixtures" / filename
    if not ref.is_file():
        raise ParameterError(f"no bundled scene named {name!r}")
    return ref.read_text(encoding="utf-8")


def fixture_scene(name: str) -> Scene:
    """One of the bundled scenes in ``FIXTURE_SCENES``."""

    return parse_scene(fixture_text(name))
