"""Light and camera passes of the progressive integrators.

All four integrators share one vertex bookkeeping. Each walk carries three
reciprocal-weight partial sums (``d_vcm``, ``d_vc``, ``d_vm``) that are updated on
arrival at a surface and again on scattering, so any connection, merge or
emitter hit can close its balance-heuristic weight with ``final_mis_weight`` from
quantities local to its two endpoints. Pdfs used in those sums ignore Russian
roulette; every technique evaluates the same nominal densities, so the weights of
one path still sum to one.

``bpt`` connects only, ``ppm`` merges only (at the first non-specular camera
vertex, unweighted), ``vcm`` does both and ``gmis`` is ``vcm`` with a branching
light tracer whose continuation densities are the mixture of the branch
proposals.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Hit, to_world
from .materials import DELTA_PDF, Material, bsdf_eval, bsdf_pdf, sample_direction
from .mis_core import SelectionStrategy, select_indices
from .models import IntegratorConfig
from .pathspace import PathVertex, eta_vcm, final_mis_weight
from .photons import PhotonStore
from .rng import substream
from .scene import DirectionalLight, PinholeCamera, Scene

logger = logging.getLogger(__name__)

# The cosine lobe takes the slot of a light-directed proposal: a light-subpath vertex
# has no emitter to aim at, so its second technique is cosine-weighted instead.
BRANCH_PROPOSALS = ("bsdf", "cosine", "uniform")
LIGHT_STREAM = 0
CAMERA_STREAM = 1
RR_MIN, RR_MAX = 0.05, 0.95
LIGHT_CHUNK = 64
TILE_ROWS = 4


def merge_radius(config: IntegratorConfig, scene: Scene, iteration: int) -> float:
    """r_i with r_i^2 = r_0^2 (i + 1)^(alpha - 1) and r_0 a fraction of the scene diagonal."""

    r0 = config.radius_fraction * max(scene.diagonal, 1e-6)
    return r0 * (iteration + 1) ** ((config.alpha - 1.0) / 2.0)


# ---------------------------------------------------------------------------
# Branch proposals
# ---------------------------------------------------------------------------


def _facing(normal: np.ndarray, wo: np.ndarray) -> np.ndarray:
    return normal if float(normal @ wo) >= 0.0 else -normal


def proposal_pdf(
    kind: str, material: Material, wi: np.ndarray, wo: np.ndarray, normal: np.ndarray
) -> float:
    if kind == "bsdf":
        return bsdf_pdf(material, wi, wo, normal)
    cos = float(wi @ _facing(normal, wo))
    if cos <= 0.0:
        return 0.0
    return cos / math.pi if kind == "cosine" else 1.0 / (2.0 * math.pi)


def branch_mixture_pdf(
    count: int, material: Material, wi: np.ndarray, wo: np.ndarray, normal: np.ndarray
) -> float:
    """Equal-weight mixture of the first ``count`` branch proposals."""

    total = sum(proposal_pdf(k, material, wi, wo, normal) for k in BRANCH_PROPOSALS[:count])
    return total / count


def sample_proposal(
    kind: str,
    material: Material,
    wo: np.ndarray,
    normal: np.ndarray,
    u: tuple[float, float, float],
    *,
    front_face: bool = True,
) -> Optional[np.ndarray]:
    if kind == "bsdf":
        s = sample_direction(material, wo, normal, u, front_face=front_face)
        return None if s is None else s.wi
    u1, u2, _ = u
    phi = 2.0 * math.pi * u2
    z = math.sqrt(max(0.0, 1.0 - u1)) if kind == "cosine" else u1
    r = math.sqrt(max(0.0, 1.0 - z * z))
    return to_world(np.array([r * math.cos(phi), r * math.sin(phi), z]), _facing(normal, wo))


def branch_indices(count: int, branches: int, rng: np.random.Generator) -> list[int]:
    """Proposal index per branch: whole random permutations, truncated to ``branches``.

    A single proposal needs no randomness and draws nothing from ``rng``.
    """

    if count == 1:
        return [0] * branches
    cycles = -(-branches // count)
    picks = select_indices(SelectionStrategy.S2, count, cycles * count, rng)
    return (picks[:branches] - 1).tolist()


# ---------------------------------------------------------------------------
# Shared state
# ---------------------------------------------------------------------------


class RenderContext:
    """Per-iteration constants: technique switches, radius and weight factors."""

    def __init__(
        self, scene: Scene, camera: PinholeCamera, config: IntegratorConfig, radius: float
    ) -> None:
        self.scene = scene
        self.camera = camera
        self.config = config
        self.radius = radius
        tag = config.integrator
        self.use_vc = tag in ("bpt", "vcm", "gmis")
        self.use_vm = tag in ("ppm", "vcm", "gmis")
        self.ppm = tag == "ppm"
        self.gmis = tag == "gmis"
        self.light_paths = camera.width * camera.height
        self.eta = eta_vcm(1, self.light_paths, radius)
        self.vm_weight = self.eta if self.use_vm else 0.0
        self.vc_weight = 1.0 / self.eta if self.use_vc else 0.0
        self.vm_normalization = 1.0 / (math.pi * radius * radius * self.light_paths)
        self.proposals = min(config.branch, len(BRANCH_PROPOSALS)) if self.gmis else 1
        # every gmis light path must fit one full chain inside max_samples
        self.max_depth = (
            min(config.max_depth, config.max_samples + 1) if self.gmis else config.max_depth
        )

    def light_pdf(
        self, material: Material, wi: np.ndarray, wo: np.ndarray, normal: np.ndarray
    ) -> float:
        """Light-tracer density of continuing to ``wi`` from a vertex entered via ``wo``."""

        if self.proposals == 1:
            return bsdf_pdf(material, wi, wo, normal)
        return branch_mixture_pdf(self.proposals, material, wi, wo, normal)


@dataclass(eq=False, slots=True)
class _Walk:
    origin: np.ndarray
    direction: np.ndarray
    throughput: np.ndarray
    d_vcm: float
    d_vc: float
    d_vm: float
    pdf_w: float
    depth: int = 0
    finite: bool = True
    specular_path: bool = True


@dataclass(eq=False)
class LightTrace:
    """Everything one light path (or branching tree) left behind."""

    vertices: list[PathVertex] = field(default_factory=list)
    splats: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    charged: int = 0
    branches: list[int] = field(default_factory=list)
    dropped: int = 0
    rejected: int = 0
    length: int = 0


def _arrive(ctx: RenderContext, walk: _Walk) -> Optional[tuple[PathVertex, Hit]]:
    scene = ctx.scene
    hit = scene.intersect(scene.spawn(walk.origin, walk.direction))
    if hit is None:
        return None
    cos_in = abs(float(hit.normal @ walk.direction))
    if cos_in == 0.0:
        return None
    walk.depth += 1
    if walk.depth > 1 or walk.finite:
        walk.d_vcm *= hit.t * hit.t
    walk.d_vcm /= cos_in
    walk.d_vc /= cos_in
    walk.d_vm /= cos_in
    material = scene.material_of(hit)
    vertex = PathVertex(
        position=hit.position,
        normal=hit.normal,
        material=material,
        throughput=walk.throughput,
        pdf_forward=walk.pdf_w * cos_in / (hit.t * hit.t),
        w_vc=walk.d_vc,
        w_vm=walk.d_vm,
        d_vcm=walk.d_vcm,
        is_specular=material.is_specular,
        depth=walk.depth,
        incoming=-walk.direction,
        front_face=hit.front_face,
    )
    return vertex, hit


def _scatter(
    ctx: RenderContext,
    walk: _Walk,
    vertex: PathVertex,
    wi: np.ndarray,
    value: np.ndarray,
    pdf_dir: float,
    pdf_rev: float,
    specular: bool,
    rng: np.random.Generator,
    divisor: int = 1,
) -> Optional[_Walk]:
    cos_out = abs(float(wi @ vertex.normal))
    if cos_out == 0.0 or not pdf_dir > 0.0:
        return None
    if specular:
        d_vcm, d_vc, d_vm = 0.0, walk.d_vc * cos_out, walk.d_vm * cos_out
    else:
        scale = cos_out / pdf_dir
        d_vc = scale * (walk.d_vc * pdf_rev + walk.d_vcm + ctx.vm_weight)
        d_vm = scale * (walk.d_vm * pdf_rev + walk.d_vcm * ctx.vc_weight + 1.0)
        d_vcm = 1.0 / pdf_dir
    throughput = walk.throughput * value * (cos_out / (pdf_dir * divisor))
    if vertex.depth >= ctx.config.rr_depth:
        survive = min(max(float(throughput.max()), RR_MIN), RR_MAX)
        if rng.random() >= survive:
            return None
        throughput = throughput / survive
    if not throughput.any():
        return None
    return _Walk(
        origin=vertex.position,
        direction=wi,
        throughput=throughput,
        d_vcm=d_vcm,
        d_vc=d_vc,
        d_vm=d_vm,
        pdf_w=pdf_dir,
        depth=vertex.depth,
        specular_path=walk.specular_path and specular,
    )


def _uniforms(rng: np.random.Generator) -> tuple[float, float, float]:
    u = rng.random(3)
    return float(u[0]), float(u[1]), float(u[2])


# ---------------------------------------------------------------------------
# Light pass
# ---------------------------------------------------------------------------


def _emit(ctx: RenderContext, rng: np.random.Generator) -> Optional[_Walk]:
    scene = ctx.scene
    u = rng.random(5)
    index, pick = scene.pick_light(float(u[0]))
    light = scene.lights[index]
    ls = scene.light_sample(light, float(u[1]), float(u[2]))
    if ls.is_delta:
        emission_pdf_w = ls.pdf_area * pick
        return _Walk(
            origin=ls.position,
            direction=ls.normal,
            throughput=ls.emission / emission_pdf_w,
            d_vcm=pick / emission_pdf_w,
            d_vc=0.0,
            d_vm=0.0,
            pdf_w=DELTA_PDF,
            finite=False,
        )
    r, phi = math.sqrt(float(u[3])), 2.0 * math.pi * float(u[4])
    cos_light = math.sqrt(max(0.0, 1.0 - float(u[3])))
    if cos_light <= 0.0:
        return None
    direction = to_world(np.array([r * math.cos(phi), r * math.sin(phi), cos_light]), ls.normal)
    emission_pdf_w = ls.pdf_area * pick * cos_light / math.pi
    d_vc = cos_light / emission_pdf_w
    return _Walk(
        origin=ls.position,
        direction=direction,
        throughput=ls.emission * (cos_light / emission_pdf_w),
        d_vcm=ls.pdf_area * pick / emission_pdf_w,
        d_vc=d_vc,
        d_vm=d_vc * ctx.vc_weight,
        pdf_w=cos_light / math.pi,
    )


def _connect_to_camera(ctx: RenderContext, v: PathVertex, out: LightTrace) -> None:
    assert v.material is not None and v.incoming is not None
    if v.depth + 1 > ctx.max_depth:
        return
    seen = ctx.camera.project(v.position)
    if seen is None:
        return
    to_camera = -seen.direction
    f = bsdf_eval(v.material, to_camera, v.incoming, v.normal)
    if not f.any():
        return
    cos_surface = abs(float(v.normal @ to_camera))
    pdf_rev = bsdf_pdf(v.material, v.incoming, to_camera, v.normal)
    image_to_surface = seen.pdf * cos_surface / (seen.distance * seen.distance)
    w_light = image_to_surface / ctx.light_paths * (ctx.vm_weight + v.d_vcm + v.w_vc * pdf_rev)
    weight = final_mis_weight(w_light, 0.0)
    contribution = v.throughput * f * (weight * image_to_surface / ctx.light_paths)
    if not ctx.scene.visible(v.position, ctx.camera.origin):
        return
    if not np.all(np.isfinite(contribution)):
        out.rejected += 1
        return
    out.splats.append((seen.pixel[0], seen.pixel[1], contribution))


def _record(ctx: RenderContext, vertex: PathVertex, out: LightTrace) -> None:
    out.length += 1
    if vertex.is_specular:
        return
    out.vertices.append(vertex)
    if ctx.use_vc:
        _connect_to_camera(ctx, vertex, out)


def trace_light_subpath(ctx: RenderContext, rng: np.random.Generator) -> LightTrace:
    """One standard light subpath: a single chain of BSDF samples."""

    out = LightTrace()
    if not ctx.scene.lights:
        return out
    walk = _emit(ctx, rng)
    out.charged = 1
    while walk is not None:
        arrived = _arrive(ctx, walk)
        if arrived is None:
            break
        vertex, _ = arrived
        _record(ctx, vertex, out)
        if vertex.depth + 2 > ctx.max_depth:
            break
        assert vertex.material is not None and vertex.incoming is not None
        s = sample_direction(
            vertex.material, vertex.incoming, vertex.normal, _uniforms(rng),
            front_face=vertex.front_face,
        )
        out.charged += 1
        if s is None:
            break
        pdf_rev = s.pdf if s.is_specular else bsdf_pdf(
            vertex.material, vertex.incoming, s.wi, vertex.normal
        )
        walk = _scatter(ctx, walk, vertex, s.wi, s.value, s.pdf, pdf_rev, s.is_specular, rng)
    return out


def _chain_cost(ctx: RenderContext, depth: int) -> int:
    """Samples a walk leaving a vertex at ``depth`` needs to reach the depth cap unbranched."""

    return max(0, ctx.max_depth - 2 - depth)


def trace_light_subpath_gmis(ctx: RenderContext, rng: np.random.Generator) -> LightTrace:
    """A branching light subpath.

    Non-specular vertices spawn up to ``branch`` continuations, one proposal per
    branch taken from random permutations of the proposal list, each weighted by
    the proposal mixture density and the branch count. Specular vertices spawn
    one. Pending walks wait in a FIFO queue.

    Each pending walk holds a reservation that lets it continue as a single chain
    down to the depth cap, and a vertex splits into only as many branches as the
    unreserved part of ``max_samples`` can carry. The budget never cuts a walk
    short; it limits splitting, and the branch count depends only on samples
    already drawn.
    """

    out = LightTrace()
    if not ctx.scene.lights:
        return out
    config = ctx.config
    count = ctx.proposals
    first = _emit(ctx, rng)
    out.charged = 1
    queue: deque[_Walk] = deque()
    reserved = 0
    if first is not None:
        queue.append(first)
        reserved = _chain_cost(ctx, first.depth)
    while queue:
        walk = queue.popleft()
        reserved -= _chain_cost(ctx, walk.depth)
        arrived = _arrive(ctx, walk)
        if arrived is None:
            continue
        vertex, _ = arrived
        _record(ctx, vertex, out)
        if vertex.depth + 2 > ctx.max_depth:
            continue
        material, wo, n = vertex.material, vertex.incoming, vertex.normal
        assert material is not None and wo is not None
        tail = _chain_cost(ctx, vertex.depth)
        if vertex.is_specular:
            out.charged += 1
            s = sample_direction(material, wo, n, _uniforms(rng), front_face=vertex.front_face)
            if s is None:
                continue
            nxt = _scatter(ctx, walk, vertex, s.wi, s.value, s.pdf, s.pdf, True, rng)
            if nxt is not None:
                queue.append(nxt)
                reserved += tail
            continue
        slack = config.max_samples - out.charged - reserved
        branches = min(config.branch, slack // (1 + tail))
        picks = branch_indices(count, branches, rng)
        out.charged += branches
        out.branches.append(branches)
        for pick in picks:
            u = _uniforms(rng)
            if count == 1:
                s = sample_direction(material, wo, n, u, front_face=vertex.front_face)
                if s is None:
                    out.dropped += 1
                    continue
                wi, value, pdf = s.wi, s.value, s.pdf
            else:
                direction = sample_proposal(
                    BRANCH_PROPOSALS[pick], material, wo, n, u, front_face=vertex.front_face
                )
                if direction is None:
                    out.dropped += 1
                    continue
                wi = direction
                value = bsdf_eval(material, wi, wo, n)
                pdf = branch_mixture_pdf(count, material, wi, wo, n)
                if pdf <= 0.0 or not value.any():
                    out.dropped += 1
                    continue
            pdf_rev = bsdf_pdf(material, wo, wi, n)
            nxt = _scatter(ctx, walk, vertex, wi, value, pdf, pdf_rev, False, rng, branches)
            if nxt is not None:
                queue.append(nxt)
                reserved += tail
    return out


def light_pass(ctx: RenderContext, iteration: int) -> list[LightTrace]:
    """One light path per pixel, each on its own substream; result order is path order."""

    tracer: Callable[[RenderContext, np.random.Generator], LightTrace]
    tracer = trace_light_subpath_gmis if ctx.gmis else trace_light_subpath
    seed = ctx.config.seed

    def run(chunk: range) -> list[LightTrace]:
        return [tracer(ctx, substream(seed, iteration, LIGHT_STREAM, p)) for p in chunk]

    chunks = [
        range(start, min(start + LIGHT_CHUNK, ctx.light_paths))
        for start in range(0, ctx.light_paths, LIGHT_CHUNK)
    ]
    with ThreadPoolExecutor(max_workers=ctx.config.threads) as pool:
        return [trace for part in pool.map(run, chunks) for trace in part]


# ---------------------------------------------------------------------------
# Camera pass
# ---------------------------------------------------------------------------


def _emission_weight(ctx: RenderContext, walk: _Walk, hit: Hit, cos_out: float) -> float:
    if walk.depth == 1 or ctx.ppm:
        return 1.0
    scene = ctx.scene
    light = scene.light_of_shape(hit.shape_id)
    if light is None:
        return 0.0
    pick = scene.light_pick_pdf(light)
    area = scene.shapes[hit.shape_id].area
    direct_pdf_a = pick / area
    emission_pdf_w = pick * cos_out / (math.pi * area)
    return final_mis_weight(0.0, direct_pdf_a * walk.d_vcm + emission_pdf_w * walk.d_vc)


def _direct_light(
    ctx: RenderContext, e: PathVertex, rng: np.random.Generator
) -> np.ndarray:
    """Next-event estimate at a camera vertex, weighted against the other techniques."""

    assert e.material is not None and e.incoming is not None
    scene = ctx.scene
    u = rng.random(3)
    index, pick = scene.pick_light(float(u[0]))
    light = scene.lights[index]
    ls = scene.light_sample(light, float(u[1]), float(u[2]))
    if isinstance(light, DirectionalLight):
        to_light = -ls.normal
        direct_pdf_w, emission_pdf_w, cos_light = 1.0, ls.pdf_area, 1.0
        far = e.position + to_light * (4.0 * scene.radius + scene.diagonal)
    else:
        delta = ls.position - e.position
        dist2 = float(delta @ delta)
        if dist2 <= scene.epsilon**2:
            return np.zeros(3)
        to_light = delta / math.sqrt(dist2)
        cos_light = float(ls.normal @ -to_light)
        if cos_light <= 0.0:
            return np.zeros(3)
        direct_pdf_w = ls.pdf_area * dist2 / cos_light
        emission_pdf_w = ls.pdf_area * cos_light / math.pi
        far = ls.position
    f = bsdf_eval(e.material, to_light, e.incoming, e.normal)
    if not f.any():
        return np.zeros(3)
    cos_surface = abs(float(e.normal @ to_light))
    pdf_dir = bsdf_pdf(e.material, to_light, e.incoming, e.normal)
    pdf_rev = ctx.light_pdf(e.material, e.incoming, to_light, e.normal)
    w_light = 0.0 if ls.is_delta else pdf_dir / (pick * direct_pdf_w)
    w_camera = (emission_pdf_w * cos_surface / (direct_pdf_w * cos_light)) * (
        ctx.vm_weight + e.d_vcm + e.w_vc * pdf_rev
    )
    weight = final_mis_weight(w_light, w_camera)
    if not scene.visible(e.position, far):
        return np.zeros(3)
    return ls.emission * f * (weight * cos_surface / (pick * direct_pdf_w))


def _connect(ctx: RenderContext, e: PathVertex, lv: PathVertex) -> np.ndarray:
    """Vertex connection between a camera vertex and a stored light vertex."""

    assert e.material is not None and e.incoming is not None
    assert lv.material is not None and lv.incoming is not None
    delta = lv.position - e.position
    dist2 = float(delta @ delta)
    if dist2 <= ctx.scene.epsilon**2:
        return np.zeros(3)
    d = delta / math.sqrt(dist2)
    f_e = bsdf_eval(e.material, d, e.incoming, e.normal)
    f_l = bsdf_eval(lv.material, -d, lv.incoming, lv.normal)
    if not f_e.any() or not f_l.any():
        return np.zeros(3)
    cos_e = abs(float(e.normal @ d))
    cos_l = abs(float(lv.normal @ d))
    e_pdf_a = bsdf_pdf(e.material, d, e.incoming, e.normal) * cos_l / dist2
    e_pdf_rev = ctx.light_pdf(e.material, e.incoming, d, e.normal)
    l_pdf_a = ctx.light_pdf(lv.material, -d, lv.incoming, lv.normal) * cos_e / dist2
    l_pdf_rev = bsdf_pdf(lv.material, lv.incoming, -d, lv.normal)
    w_light = e_pdf_a * (ctx.vm_weight + lv.d_vcm + lv.w_vc * l_pdf_rev)
    w_camera = l_pdf_a * (ctx.vm_weight + e.d_vcm + e.w_vc * e_pdf_rev)
    weight = final_mis_weight(w_light, w_camera)
    if not ctx.scene.visible(e.position, lv.position):
        return np.zeros(3)
    return lv.throughput * f_e * f_l * (weight * cos_e * cos_l / dist2)


def _merge(ctx: RenderContext, e: PathVertex, store: PhotonStore[PathVertex]) -> np.ndarray:
    """Density estimate from the light vertices within the merge radius (before normalization)."""

    assert e.material is not None and e.incoming is not None
    total = np.zeros(3)
    for i in store.query(e.position):
        lv = store.vertices[i]
        assert lv.incoming is not None
        if lv.depth + e.depth > ctx.max_depth:
            continue
        f = bsdf_eval(e.material, lv.incoming, e.incoming, e.normal)
        if not f.any():
            continue
        if ctx.ppm:
            weight = 1.0
        else:
            pdf_dir = bsdf_pdf(e.material, lv.incoming, e.incoming, e.normal)
            pdf_rev = ctx.light_pdf(e.material, e.incoming, lv.incoming, e.normal)
            w_light = lv.d_vcm * ctx.vc_weight + lv.w_vm * pdf_dir
            w_camera = e.d_vcm * ctx.vc_weight + e.w_vm * pdf_rev
            weight = final_mis_weight(w_light, w_camera)
        total += weight * f * lv.throughput
    return total


def trace_camera_path(
    ctx: RenderContext,
    x: int,
    y: int,
    rng: np.random.Generator,
    light_vertices: list[PathVertex],
    store: Optional[PhotonStore[PathVertex]],
) -> np.ndarray:
    """Radiance estimate for pixel (x, y) from one camera path."""

    scene, camera = ctx.scene, ctx.camera
    u = rng.random(2)
    ray, cos_camera = camera.generate_ray(x, y, float(u[0]), float(u[1]))
    walk = _Walk(
        origin=ray.origin,
        direction=ray.direction,
        throughput=np.ones(3),
        d_vcm=ctx.light_paths / camera.pdf(cos_camera),
        d_vc=0.0,
        d_vm=0.0,
        pdf_w=camera.pdf(cos_camera),
    )
    color = np.zeros(3)
    while True:
        arrived = _arrive(ctx, walk)
        if arrived is None:
            break
        e, hit = arrived
        assert e.material is not None
        radiance = scene.emitted(hit, -walk.direction)
        if radiance.any() and (ctx.use_vc or walk.specular_path):
            cos_out = float(hit.geometric_normal @ -walk.direction)
            color += walk.throughput * radiance * _emission_weight(ctx, walk, hit, cos_out)
        if e.depth >= ctx.max_depth:
            break
        if not e.is_specular:
            if ctx.use_vc and scene.lights:
                color += walk.throughput * _direct_light(ctx, e, rng)
                for lv in light_vertices:
                    if lv.depth + e.depth + 1 <= ctx.max_depth:
                        color += walk.throughput * _connect(ctx, e, lv)
            if ctx.use_vm and store is not None and len(store):
                color += walk.throughput * (ctx.vm_normalization * _merge(ctx, e, store))
                if ctx.ppm:
                    break
        assert e.incoming is not None
        s = sample_direction(
            e.material, e.incoming, e.normal, _uniforms(rng), front_face=e.front_face
        )
        if s is None:
            break
        pdf_rev = s.pdf if s.is_specular else ctx.light_pdf(e.material, e.incoming, s.wi, e.normal)
        nxt = _scatter(ctx, walk, e, s.wi, s.value, s.pdf, pdf_rev, s.is_specular, rng)
        if nxt is None:
            break
        walk = nxt
    return color


def camera_pass(
    ctx: RenderContext,
    traces: list[LightTrace],
    store: Optional[PhotonStore[PathVertex]],
    iteration: int,
) -> tuple[np.ndarray, int]:
    """This iteration's frame (camera paths plus light splats) and its rejected-sample count.

    Rows are traced in tiles on a thread pool; every pixel has its own substream
    and tiles are reduced in row order, so the frame does not depend on the
    thread count.
    """

    width, height = ctx.camera.width, ctx.camera.height
    seed = ctx.config.seed

    def run(rows: range) -> tuple[np.ndarray, int]:
        block = np.zeros((len(rows), width, 3))
        rejected = 0
        for j, y in enumerate(rows):
            for x in range(width):
                p = y * width + x
                rng = substream(seed, iteration, CAMERA_STREAM, p)
                color = trace_camera_path(ctx, x, y, rng, traces[p].vertices, store)
                if np.all(np.isfinite(color)):
                    block[j, x] = color
                else:
                    rejected += 1
        return block, rejected

    tiles = [range(y0, min(y0 + TILE_ROWS, height)) for y0 in range(0, height, TILE_ROWS)]
    with ThreadPoolExecutor(max_workers=ctx.config.threads) as pool:
        parts = list(pool.map(run, tiles))
    frame = np.concatenate([block for block, _ in parts], axis=0)
    rejected = sum(r for _, r in parts)
    for trace in traces:
        for sx, sy, contribution in trace.splats:
            frame[sy, sx] += contribution
        rejected += trace.rejected
    return frame, rejected
