"""Surface scattering: diffuse, normalized Phong, mirror and Fresnel glass.

Direction convention: ``wo`` and ``wi`` both point away from the surface. ``wo`` is
the side the path arrived from and ``wi`` the sampled continuation. ``normal`` may
face either side; each function orients it towards ``wo`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .errors import DeltaQueryError, ParameterError
from .geometry import reflect, to_world

MaterialKind = Literal["diffuse", "phong", "mirror", "glass"]
RGB = tuple[float, float, float]

BLACK: RGB = (0.0, 0.0, 0.0)
# stands in for a Dirac density in pdf products and ratios
DELTA_PDF = 1.0


@dataclass(frozen=True, slots=True)
class Material:
    name: str
    kind: MaterialKind
    albedo: RGB
    exponent: float = 1.0
    ior: float = 1.5
    emission: RGB = BLACK

    def __post_init__(self) -> None:
        if self.kind not in ("diffuse", "phong", "mirror", "glass"):
            raise ParameterError(f"unknown material kind {self.kind!r}")
        if any(not 0.0 <= c <= 1.0 for c in self.albedo):
            raise ParameterError(f"albedo of {self.name!r} must lie in [0, 1], got {self.albedo}")
        if self.kind == "diffuse" and any(c >= 1.0 for c in self.albedo):
            raise ParameterError(f"diffuse albedo of {self.name!r} must be below 1")
        if self.kind == "phong" and self.exponent < 1.0:
            raise ParameterError(f"phong exponent must be >= 1, got {self.exponent}")
        if self.kind == "glass" and self.ior <= 1.0:
            raise ParameterError(f"index of refraction must exceed 1, got {self.ior}")
        if any(c < 0.0 for c in self.emission):
            raise ParameterError(f"emission of {self.name!r} must be non-negative")

    @property
    def is_specular(self) -> bool:
        return self.kind in ("mirror", "glass")

    @property
    def is_emissive(self) -> bool:
        return any(c > 0.0 for c in self.emission)

    @property
    def rho(self) -> np.ndarray:
        return np.asarray(self.albedo, dtype=float)


@dataclass(eq=False, slots=True)
class BsdfSample:
    wi: np.ndarray
    value: np.ndarray
    pdf: float  # solid angle, or DELTA_PDF times the lobe probability for specular picks
    is_specular: bool


def _facing(n: np.ndarray, wo: np.ndarray) -> np.ndarray:
    return n if float(n @ wo) >= 0.0 else -n


def _phong_lobe(material: Material, wi: np.ndarray, wo: np.ndarray, n: np.ndarray) -> float:
    cos_alpha = float(reflect(wo, n) @ wi)
    return max(cos_alpha, 0.0) ** material.exponent


def bsdf_eval(material: Material, wi: np.ndarray, wo: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """f_s(wi, wo); zero for delta materials and for pairs on opposite sides."""

    n = _facing(normal, wo)
    if material.is_specular or float(wi @ n) <= 0.0 or float(wo @ n) <= 0.0:
        return np.zeros(3)
    if material.kind == "diffuse":
        return material.rho / math.pi
    lobe = _phong_lobe(material, wi, wo, n)
    return material.rho * ((material.exponent + 2.0) / (2.0 * math.pi) * lobe)


def bsdf_pdf(material: Material, wi: np.ndarray, wo: np.ndarray, normal: np.ndarray) -> float:
    """Solid-angle density of sampling ``wi`` given ``wo``."""

    if material.is_specular:
        raise DeltaQueryError(f"{material.kind} material {material.name!r} has no pdf")
    n = _facing(normal, wo)
    cos_i = float(wi @ n)
    if cos_i <= 0.0:
        return 0.0
    if material.kind == "diffuse":
        return cos_i / math.pi
    lobe = _phong_lobe(material, wi, wo, n)
    return (material.exponent + 1.0) / (2.0 * math.pi) * lobe


def _fresnel(cos_i: float, cos_t: float, eta: float) -> float:
    # eta = n_incident / n_transmitted
    rs = (eta * cos_i - cos_t) / (eta * cos_i + cos_t)
    rp = (cos_i - eta * cos_t) / (cos_i + eta * cos_t)
    return 0.5 * (rs * rs + rp * rp)


def sample_direction(
    material: Material,
    wo: np.ndarray,
    normal: np.ndarray,
    u: tuple[float, float, float],
    *,
    front_face: bool = True,
) -> Optional[BsdfSample]:
    """Sample from three uniforms; ``None`` when the sampled direction is absorbed."""

    n = _facing(normal, wo)
    u1, u2, u3 = u
    if material.kind == "diffuse":
        r, phi = math.sqrt(u1), 2.0 * math.pi * u2
        local = np.array([r * math.cos(phi), r * math.sin(phi), math.sqrt(max(0.0, 1.0 - u1))])
        wi = to_world(local, n)
        pdf = bsdf_pdf(material, wi, wo, n)
        if pdf <= 0.0:
            return None
        return BsdfSample(wi, material.rho / math.pi, pdf, False)
    if material.kind == "phong":
        cos_a = u1 ** (1.0 / (material.exponent + 1.0))
        sin_a = math.sqrt(max(0.0, 1.0 - cos_a * cos_a))
        phi = 2.0 * math.pi * u2
        local = np.array([sin_a * math.cos(phi), sin_a * math.sin(phi), cos_a])
        wi = to_world(local, reflect(wo, n))
        pdf = bsdf_pdf(material, wi, wo, n)
        if pdf <= 0.0:
            return None
        return BsdfSample(wi, bsdf_eval(material, wi, wo, n), pdf, False)
    cos_o = float(wo @ n)
    if material.kind == "mirror":
        return BsdfSample(reflect(wo, n), material.rho / cos_o, DELTA_PDF, True)

    eta = 1.0 / material.ior if front_face else material.ior
    sin2_t = eta * eta * max(0.0, 1.0 - cos_o * cos_o)
    if sin2_t >= 1.0:
        return BsdfSample(reflect(wo, n), material.rho / cos_o, DELTA_PDF, True)
    cos_t = math.sqrt(1.0 - sin2_t)
    f = _fresnel(cos_o, cos_t, eta)
    if u3 < f:
        return BsdfSample(reflect(wo, n), material.rho * (f / cos_o), DELTA_PDF * f, True)
    wi = -eta * wo + (eta * cos_o - cos_t) * n
    wi = wi / np.linalg.norm(wi)
    return BsdfSample(wi, material.rho * ((1.0 - f) / cos_t), DELTA_PDF * (1.0 - f), True)


def bsdf_sample(
    material: Material,
    wo: np.ndarray,
    normal: np.ndarray,
    rng: np.random.Generator,
    *,
    front_face: bool = True,
) -> Optional[BsdfSample]:
    u = rng.random(3)
    return sample_direction(
        material, wo, normal, (float(u[0]), float(u[1]), float(u[2])), front_face=front_face
    )


def throughput_factor(sample: BsdfSample, normal: np.ndarray) -> np.ndarray:
    """value * |cos| / pdf for one sampled bounce."""

    return sample.value * (abs(float(sample.wi @ normal)) / sample.pdf)
