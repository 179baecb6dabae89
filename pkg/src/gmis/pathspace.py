"""Path-space quantities: vertices, geometry terms, contributions and MIS weight recursions.

A full path runs x_0 (on a light) .. x_k (the camera). ``pdf_forward[i]`` is the
area density of generating x_i from the light side and ``pdf_reverse[i]`` from the
camera side. Specular vertices use ``DELTA_PDF`` for both and are flagged so that
no technique connects or merges there.

The accumulators are reciprocal-weight partial sums: for the technique being
weighted, ``w_light`` collects p_t / p_self over every competing technique with a
shorter light subpath and ``w_camera`` over every one with a longer light subpath,
so the balance weight is ``1 / (1 + w_light + w_camera)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple, Optional

import numpy as np

from .errors import InternalInvariantError, ParameterError, SingularityError
from .materials import DELTA_PDF, Material, bsdf_eval
from .scene import PinholeCamera, Scene

VertexKind = Literal["light", "surface", "camera"]


@dataclass(eq=False, slots=True)
class PathVertex:
    position: np.ndarray
    normal: np.ndarray
    material: Optional[Material]
    throughput: np.ndarray
    pdf_forward: float = 0.0
    pdf_reverse: float = 0.0
    w_vc: float = 0.0
    w_vm: float = 0.0
    d_vcm: float = 0.0  # reciprocal-weight term shared by connections and merges
    is_specular: bool = False
    depth: int = 0
    kind: VertexKind = "surface"
    incoming: Optional[np.ndarray] = None  # unit direction back to the previous vertex
    front_face: bool = True

    def __post_init__(self) -> None:
        length = float(np.linalg.norm(self.normal))
        if abs(length - 1.0) > 1e-6:
            raise ParameterError(f"vertex normal must be unit length, got {length}")

    @property
    def connectible(self) -> bool:
        return not self.is_specular


@dataclass(eq=False, slots=True)
class FullPath:
    vertices: tuple[PathVertex, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 2:
            raise ParameterError("a full path needs at least two vertices")
        if self.vertices[0].kind != "light" or self.vertices[-1].kind != "camera":
            raise ParameterError("a full path runs from a light vertex to the camera")

    @property
    def length(self) -> int:
        return len(self.vertices) - 1


class GeometryTerm(NamedTuple):
    value: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


def geometry_term(
    a: PathVertex, b: PathVertex, scene: Scene, *, visibility: bool = True
) -> GeometryTerm:
    """V(a, b) |cos_a| |cos_b| / |a - b|^2; coincident points give 0 flagged degenerate."""

    d = b.position - a.position
    dist2 = float(d @ d)
    if dist2 <= scene.epsilon**2:
        return GeometryTerm(0.0, True)
    if visibility and not scene.visible(a.position, b.position):
        return GeometryTerm(0.0)
    w = d / math.sqrt(dist2)
    return GeometryTerm(abs(float(a.normal @ w)) * abs(float(b.normal @ w)) / dist2)


def path_contribution(path: FullPath, scene: Scene, camera: PinholeCamera) -> np.ndarray:
    """L_e G [prod f_s G] W_e for a full path; Dirac vertices contribute zero."""

    xs = path.vertices
    light = xs[0]
    if light.material is None:
        raise ParameterError("light vertex carries no emitting material")
    out = xs[1].position - light.position
    if float(light.normal @ out) <= 0.0:
        return np.zeros(3)
    emission = np.asarray(light.material.emission, dtype=float)
    value = emission * float(geometry_term(light, xs[1], scene))
    for i in range(1, len(xs) - 1):
        x = xs[i]
        if x.material is None:
            raise ParameterError(f"vertex {i} has no material")
        to_prev = xs[i - 1].position - x.position
        to_next = xs[i + 1].position - x.position
        wi = to_prev / np.linalg.norm(to_prev)
        wo = to_next / np.linalg.norm(to_next)
        value = value * bsdf_eval(x.material, wi, wo, x.normal)
        value = value * float(geometry_term(x, xs[i + 1], scene))
        if not value.any():
            return value
    seen = camera.project(xs[-2].position)
    return value * (seen.importance if seen is not None else 0.0)


# ---------------------------------------------------------------------------
# Measure conversions
# ---------------------------------------------------------------------------


def solid_angle_to_area(pdf_w: float, cos_at_target: float, dist2: float) -> float:
    return pdf_w * abs(cos_at_target) / dist2


def area_to_solid_angle(pdf_a: float, cos_at_target: float, dist2: float) -> float:
    if cos_at_target == 0.0:
        raise SingularityError("grazing vertex has no solid-angle density")
    return pdf_a * dist2 / abs(cos_at_target)


# ---------------------------------------------------------------------------
# Weight recursions
# ---------------------------------------------------------------------------


def eta_vcm(n_vc: int, n_vm: int, r: float) -> float:
    """(n_vm / n_vc) pi r^2, the merging-to-connection density ratio."""

    if n_vc < 1:
        raise ParameterError(f"n_vc must be >= 1, got {n_vc}")
    if n_vm < 0:
        raise ParameterError(f"n_vm must be >= 0, got {n_vm}")
    if not r > 0:
        raise ParameterError(f"merge radius must be positive, got {r}")
    return (n_vm / n_vc) * math.pi * r * r


def vc_weight_step(
    prev: float,
    pdf_forward: float,
    pdf_reverse: float,
    eta: float,
    is_first: bool,
    *,
    connectible: bool = True,
    mergeable: bool = True,
) -> float:
    """Advance the connection accumulator by one vertex.

    First vertex: ``pdf_reverse / pdf_forward``. Otherwise
    ``pdf_reverse * (eta * m + c / pdf_forward + prev / pdf_forward)`` where ``c``
    and ``m`` switch off the connection ending here and the merge at this vertex.
    """

    if not pdf_forward > 0:
        raise SingularityError(f"forward pdf must be positive, got {pdf_forward}")
    if is_first:
        return pdf_reverse / pdf_forward
    return pdf_reverse * (eta * mergeable + (connectible + prev) / pdf_forward)


def vm_weight_step(
    prev: float,
    pdf_forward: float,
    pdf_reverse_prev: float,
    eta: float,
    is_first: bool,
    pdf_reverse0: float = 0.0,
    pdf_forward0: float = 1.0,
    *,
    connectible: bool = True,
    mergeable: bool = True,
) -> float:
    """Advance the merging accumulator by one vertex, scaled by ``pdf_forward``.

    First vertex: ``pdf_forward * (c / eta + pdf_reverse0 / (eta * pdf_forward0))``.
    Otherwise ``pdf_forward * (c / eta + m * pdf_reverse_prev + pdf_reverse_prev * prev)``,
    with ``m`` the mergeability of the previous vertex.
    """

    if not eta > 0:
        raise SingularityError("merging accumulator needs eta > 0")
    if is_first:
        if not pdf_forward0 > 0:
            raise SingularityError(f"forward pdf must be positive, got {pdf_forward0}")
        return pdf_forward * (connectible / eta + pdf_reverse0 / (eta * pdf_forward0))
    return pdf_forward * (connectible / eta + pdf_reverse_prev * (mergeable + prev))


def merge_accumulator_step(
    prev: float,
    pdf_forward: float,
    pdf_reverse_prev: float,
    eta: float,
    is_first: bool,
    pdf_reverse0: float = 0.0,
    pdf_forward0: float = 1.0,
    *,
    connectible: bool = True,
    mergeable: bool = True,
) -> float:
    """Merge accumulator relative to merging here: ``vm_weight_step`` at 1 / pdf_forward."""

    if not pdf_forward > 0:
        raise SingularityError(f"forward pdf must be positive, got {pdf_forward}")
    return vm_weight_step(
        prev,
        1.0 / pdf_forward,
        pdf_reverse_prev,
        eta,
        is_first,
        pdf_reverse0,
        pdf_forward0,
        connectible=connectible,
        mergeable=mergeable,
    )


def final_mis_weight(w_light: float, w_camera: float) -> float:
    if w_light < 0.0 or w_camera < 0.0 or math.isnan(w_light + w_camera):
        raise InternalInvariantError(f"negative MIS accumulator ({w_light}, {w_camera})")
    return 1.0 / (1.0 + w_light + w_camera)


# ---------------------------------------------------------------------------
# Technique enumeration
# ---------------------------------------------------------------------------

Technique = tuple[str, int]


@dataclass(frozen=True, slots=True)
class TechniqueChain:
    """Densities of one full path x_0 .. x_k as seen by every sampling technique.

    ``pdf_forward[k]`` and ``pdf_reverse[k]`` are ignored: the pinhole cannot be hit
    and is always the first camera vertex. ``pdf_reverse[0] == 0`` marks a light the
    camera side cannot hit.
    """

    pdf_forward: tuple[float, ...]
    pdf_reverse: tuple[float, ...]
    specular: tuple[bool, ...]
    eta: float = 0.0

    def __post_init__(self) -> None:
        n = len(self.pdf_forward)
        if n < 2 or len(self.pdf_reverse) != n or len(self.specular) != n:
            raise ParameterError("chain needs matching pdf and flag lists of length >= 2")
        if self.specular[0] or self.specular[-1]:
            raise ParameterError("path endpoints cannot be specular")

    @property
    def k(self) -> int:
        return len(self.pdf_forward) - 1

    def connectible(self, s: int) -> bool:
        """Whether the connection technique with ``s`` light vertices can sample the path."""

        if s == 0:
            return self.pdf_reverse[0] > 0.0
        if s == self.k:
            return not self.specular[s - 1]
        return not self.specular[s - 1] and not self.specular[s]

    def mergeable(self, i: int) -> bool:
        return self.eta > 0.0 and 1 <= i <= self.k - 1 and not self.specular[i]


def _connection_pdf(chain: TechniqueChain, s: int) -> float:
    p = 1.0
    for j in range(s):
        p *= chain.pdf_forward[j]
    for j in range(s, chain.k):
        p *= chain.pdf_reverse[j]
    return p


def enumerate_technique_weights(chain: TechniqueChain) -> dict[Technique, float]:
    """Balance-heuristic weight of every technique able to sample the path, by brute force."""

    pdfs: dict[Technique, float] = {}
    for s in range(chain.k + 1):
        if chain.connectible(s):
            pdfs[("vc", s)] = _connection_pdf(chain, s)
    for i in range(1, chain.k):
        if chain.mergeable(i):
            pdfs[("vm", i)] = chain.eta * chain.pdf_reverse[i] * _connection_pdf(chain, i + 1)
    total = math.fsum(pdfs.values())
    if total <= 0.0:
        return {t: 0.0 for t in pdfs}
    return {t: p / total for t, p in pdfs.items()}


def technique_weights_recursive(chain: TechniqueChain) -> dict[Technique, float]:
    """The same weights as ``enumerate_technique_weights``, built from the accumulators."""

    k, f, r, eta = chain.k, chain.pdf_forward, chain.pdf_reverse, chain.eta
    light = [0.0] * k  # light[i]: connection accumulator ending at x_i
    merge_light = [0.0] * k
    for i in range(k):
        if i == 0:
            light[0] = vc_weight_step(0.0, f[0], r[0], eta, True)
            continue
        if eta > 0.0:
            merge_light[i] = merge_accumulator_step(
                merge_light[i - 1],
                f[i],
                r[i - 1],
                eta,
                i == 1,
                r[0],
                f[0],
                connectible=chain.connectible(i),
                mergeable=chain.mergeable(i - 1),
            )
        light[i] = vc_weight_step(
            light[i - 1],
            f[i],
            r[i],
            eta,
            False,
            connectible=chain.connectible(i),
            mergeable=chain.mergeable(i),
        )

    camera = [0.0] * (k + 1)  # camera[j]: accumulator with x_j the first camera-side vertex
    for j in range(k - 1, -1, -1):
        if r[j] == 0.0:
            continue  # only at an unhittable light
        camera[j] = vc_weight_step(
            camera[j + 1],
            r[j],
            f[j],
            eta,
            False,
            connectible=chain.connectible(j + 1),
            mergeable=chain.mergeable(j),
        )

    weights: dict[Technique, float] = {}
    for s in range(k + 1):
        if chain.connectible(s):
            w_light = light[s - 1] if s > 0 else 0.0
            weights[("vc", s)] = final_mis_weight(w_light, camera[s])
    for i in range(1, k):
        if chain.mergeable(i):
            w_camera = (chain.connectible(i + 1) + camera[i + 1]) / (eta * r[i])
            weights[("vm", i)] = final_mis_weight(merge_light[i], w_camera)
    return weights


def random_chain(
    rng: np.random.Generator, vertices: int, *, eta: float = 0.0, specular: float = 0.0
) -> TechniqueChain:
    """A chain with log-uniform densities, for property checks."""

    if vertices < 2:
        raise ParameterError("chain needs at least two vertices")
    f = 10.0 ** rng.uniform(-2.0, 2.0, vertices)
    r = 10.0 ** rng.uniform(-2.0, 2.0, vertices)
    flags = [False] + [bool(rng.random() < specular) for _ in range(vertices - 2)] + [False]
    f = np.where(flags, DELTA_PDF, f)
    r = np.where(flags, DELTA_PDF, r)
    return TechniqueChain(tuple(f.tolist()), tuple(r.tolist()), tuple(flags), eta)
