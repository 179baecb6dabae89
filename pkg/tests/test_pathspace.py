from __future__ import annotations

import math

import numpy as np
import pytest

from gmis.errors import InternalInvariantError, ParameterError, SingularityError
from gmis.geometry import normalize, vec
from gmis.materials import Material
from gmis.pathspace import (
    FullPath,
    PathVertex,
    TechniqueChain,
    area_to_solid_angle,
    enumerate_technique_weights,
    eta_vcm,
    final_mis_weight,
    geometry_term,
    merge_accumulator_step,
    path_contribution,
    random_chain,
    solid_angle_to_area,
    technique_weights_recursive,
    vc_weight_step,
    vm_weight_step,
)
from gmis.rng import substream
from gmis.scene import fixture_scene

WHITE = Material("white", "diffuse", (0.75, 0.75, 0.75))


def vertex(position, normal, material=WHITE, **kwargs) -> PathVertex:
    return PathVertex(vec(position), normalize(vec(normal)), material, np.ones(3), **kwargs)


# geometry term ---------------------------------------------------------------


def test_geometry_term_facing_patches() -> None:
    scene = fixture_scene("furnace")
    a = vertex((0.5, 0.5, 0.1), (0, 0, 1))
    b = vertex((0.5, 0.5, 2.1), (0, 0, -1))
    assert float(geometry_term(a, b, scene, visibility=False)) == pytest.approx(0.25)


def test_geometry_term_diagonal() -> None:
    scene = fixture_scene("furnace")
    a = vertex((0, 0, 0), (0, 0, 1))
    b = vertex((1, 1, 1), (0, 0, -1))
    assert float(geometry_term(a, b, scene, visibility=False)) == pytest.approx(1.0 / 9.0)


def test_geometry_term_occluded() -> None:
    scene = fixture_scene("box")
    a = vertex((0.5, 0.5, 0.5), (0, 0, -1))
    b = vertex((0.5, 0.5, -1.0), (0, 0, 1))
    g = geometry_term(a, b, scene)
    assert g.value == 0.0 and not g.degenerate


def test_geometry_term_coincident_points() -> None:
    scene = fixture_scene("box")
    a = vertex((0.5, 0.5, 0.5), (0, 0, 1))
    g = geometry_term(a, a, scene)
    assert g == (0.0, True)


# contribution ----------------------------------------------------------------


def _box_path(surface_material: Material = WHITE):
    scene = fixture_scene("box")
    camera = scene.camera.for_film(8, 8)
    light_material = scene.materials["arealight:7"]
    x0 = vertex((0.5, 0.999, 0.5), (0, -1, 0), light_material, kind="light")
    x1 = vertex((0.5, 0.0, 0.4), (0, 1, 0), surface_material)
    x2 = vertex(camera.origin, camera.forward, None, kind="camera")
    return scene, camera, x0, x1, x2


def _g(a: np.ndarray, na: np.ndarray, b: np.ndarray, nb: np.ndarray) -> float:
    d = b - a
    dist2 = float(d @ d)
    w = d / math.sqrt(dist2)
    return abs(float(na @ w)) * abs(float(nb @ w)) / dist2


def test_three_vertex_contribution_matches_direct_product() -> None:
    scene, camera, x0, x1, x2 = _box_path()
    value = path_contribution(FullPath((x0, x1, x2)), scene, camera)

    to_camera = camera.origin - x1.position
    cos_camera = float(normalize(-to_camera) @ camera.forward)
    w_e = camera.d_img**2 / cos_camera**4
    expected = (
        12.0
        * _g(x0.position, x0.normal, x1.position, x1.normal)
        * (0.75 / math.pi)
        * _g(x1.position, x1.normal, camera.origin, camera.forward)
        * w_e
    )
    assert np.allclose(value, expected, rtol=1e-10, atol=0.0)


def test_light_seen_directly() -> None:
    scene, camera, x0, _, x2 = _box_path()
    value = path_contribution(FullPath((x0, x2)), scene, camera)
    cos_camera = float(normalize(x0.position - camera.origin) @ camera.forward)
    expected = (
        12.0
        * _g(x0.position, x0.normal, camera.origin, camera.forward)
        * camera.d_img**2
        / cos_camera**4
    )
    assert np.allclose(value, expected, rtol=1e-10, atol=0.0)


def test_black_surface_absorbs() -> None:
    black = Material("black", "diffuse", (0.0, 0.0, 0.0))
    scene, camera, x0, x1, x2 = _box_path(black)
    assert not path_contribution(FullPath((x0, x1, x2)), scene, camera).any()


def test_full_path_needs_light_and_camera_ends() -> None:
    a = vertex((0, 0, 0), (0, 0, 1))
    with pytest.raises(ParameterError):
        FullPath((a,))
    with pytest.raises(ParameterError):
        FullPath((a, a))


def test_vertex_normal_must_be_unit() -> None:
    with pytest.raises(ParameterError):
        PathVertex(np.zeros(3), vec((0, 0, 2)), WHITE, np.ones(3))


# conversions and eta -----------------------------------------------------------


def test_measure_conversion_round_trip() -> None:
    rng = substream(8, 0)
    for pdf, cos, dist2 in rng.uniform(0.01, 3.0, size=(100, 3)):
        back = area_to_solid_angle(solid_angle_to_area(pdf, cos, dist2), cos, dist2)
        assert back == pytest.approx(pdf, rel=1e-10)


def test_grazing_conversion_is_singular() -> None:
    with pytest.raises(SingularityError):
        area_to_solid_angle(1.0, 0.0, 1.0)


@pytest.mark.parametrize(
    "n_vc, n_vm, r, expected",
    [(1, 1, 1.0, math.pi), (5, 10, 0.1, 0.02 * math.pi), (3, 0, 0.5, 0.0)],
)
def test_eta_vcm(n_vc: int, n_vm: int, r: float, expected: float) -> None:
    assert eta_vcm(n_vc, n_vm, r) == pytest.approx(expected)


@pytest.mark.parametrize("args", [(0, 1, 1.0), (1, -1, 1.0), (1, 1, 0.0)])
def test_eta_vcm_preconditions(args: tuple) -> None:
    with pytest.raises(ParameterError):
        eta_vcm(*args)


# single steps ------------------------------------------------------------------


def test_vc_first_step_equal_pdfs() -> None:
    assert vc_weight_step(0.0, 0.7, 0.7, 0.0, True) == pytest.approx(1.0)


def test_vc_step_without_merging() -> None:
    assert vc_weight_step(0.0, 1.0, 1.0, 0.0, False) == pytest.approx(1.0)


def test_vc_step_zero_forward_pdf() -> None:
    with pytest.raises(SingularityError):
        vc_weight_step(0.0, 0.0, 1.0, 0.0, False)


def test_vm_first_step() -> None:
    eta = 0.3
    assert vm_weight_step(0.0, eta, 0.0, eta, True, 0.5, 0.5) == pytest.approx(2.0)


def test_vm_step_vanishing_reverse_pdf() -> None:
    assert vm_weight_step(5.0, 0.8, 0.0, 0.2, False) == pytest.approx(0.8 / 0.2)


def test_vm_step_needs_eta() -> None:
    with pytest.raises(SingularityError):
        vm_weight_step(0.0, 1.0, 1.0, 0.0, False)


def test_merge_accumulator_is_vm_step_at_reciprocal() -> None:
    assert merge_accumulator_step(0.4, 2.0, 0.3, 0.1, False) == pytest.approx(
        vm_weight_step(0.4, 0.5, 0.3, 0.1, False)
    )


@pytest.mark.parametrize(
    "w_light, w_camera, expected", [(0.0, 0.0, 1.0), (1.0, 0.0, 0.5), (1.0, 2.0, 0.25)]
)
def test_final_weight(w_light: float, w_camera: float, expected: float) -> None:
    assert final_mis_weight(w_light, w_camera) == pytest.approx(expected)


@pytest.mark.parametrize("args", [(-1e-3, 0.0), (0.0, -2.0), (math.nan, 0.0)])
def test_final_weight_rejects_bad_accumulators(args: tuple) -> None:
    with pytest.raises(InternalInvariantError):
        final_mis_weight(*args)


# whole chains --------------------------------------------------------------------


def _technique_pdfs(chain: TechniqueChain) -> dict[tuple[str, int], float]:
    """Every technique's path density, expanded product by product."""

    f, r, k = chain.pdf_forward, chain.pdf_reverse, chain.k
    pdfs = {}
    for s in range(k + 1):
        if chain.connectible(s):
            pdfs[("vc", s)] = math.prod(f[:s]) * math.prod(r[s:k])
    for i in range(1, k):
        if chain.mergeable(i):
            pdfs[("vm", i)] = chain.eta * r[i] * math.prod(f[: i + 1]) * math.prod(r[i + 1 : k])
    return pdfs


def test_three_vertex_connections_partition_unity() -> None:
    chain = TechniqueChain((0.5, 1.5, 2.0), (0.8, 0.9, 1.0), (False, False, False))
    weights = enumerate_technique_weights(chain)
    assert set(weights) == {("vc", 0), ("vc", 1), ("vc", 2)}
    assert sum(weights.values()) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("vertices", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("eta", [0.0, 0.05, 3.0])
@pytest.mark.parametrize("specular", [0.0, 0.3])
def test_recursive_weights_match_enumeration(vertices: int, eta: float, specular: float) -> None:
    rng = substream(21, vertices, int(eta * 100), int(specular * 10))
    for _ in range(40):
        chain = random_chain(rng, vertices, eta=eta, specular=specular)
        expected = enumerate_technique_weights(chain)
        got = technique_weights_recursive(chain)
        assert set(got) == set(expected)
        for technique, weight in expected.items():
            assert got[technique] == pytest.approx(weight, rel=1e-12, abs=1e-15)
        if got:
            assert sum(got.values()) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("vertices", [2, 3, 4, 5, 6])
def test_light_accumulator_matches_expansion(vertices: int) -> None:
    rng = substream(22, vertices)
    for _ in range(40):
        chain = random_chain(rng, vertices, eta=0.4)
        f, r = chain.pdf_forward, chain.pdf_reverse
        pdfs = _technique_pdfs(chain)
        acc = 0.0
        for s in range(1, chain.k + 1):
            i = s - 1
            acc = vc_weight_step(
                acc,
                f[i],
                r[i],
                chain.eta,
                i == 0,
                connectible=chain.connectible(i),
                mergeable=chain.mergeable(i),
            )
            p_s = math.prod(f[:s]) * math.prod(r[s : chain.k])
            expected = sum(p for (_, idx), p in pdfs.items() if idx < s) / p_s
            assert acc == pytest.approx(expected, rel=1e-12)


def test_chain_validation() -> None:
    with pytest.raises(ParameterError):
        TechniqueChain((1.0,), (1.0,), (False,))
    with pytest.raises(ParameterError):
        TechniqueChain((1.0, 1.0), (1.0, 1.0), (True, False))
