from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import chi2

from gmis.errors import DeltaQueryError, ParameterError
from gmis.geometry import normalize, vec
from gmis.materials import (
    DELTA_PDF,
    Material,
    bsdf_eval,
    bsdf_pdf,
    bsdf_sample,
    sample_direction,
    throughput_factor,
)
from gmis.rng import substream

UP = vec((0.0, 0.0, 1.0))
DIFFUSE = Material("d", "diffuse", (0.5, 0.5, 0.5))
PHONG = Material("p", "phong", (0.6, 0.6, 0.6), exponent=20.0)
MIRROR = Material("m", "mirror", (0.9, 0.9, 0.9))
GLASS = Material("g", "glass", (1.0, 1.0, 1.0), ior=1.5)


def _hemisphere_grid(n_theta: int = 200, n_phi: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint directions over the upper hemisphere and their solid-angle weights."""

    theta = (np.arange(n_theta) + 0.5) * (math.pi / 2) / n_theta
    phi = (np.arange(n_phi) + 0.5) * 2 * math.pi / n_phi
    t, p = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)
    weights = np.sin(t) * (math.pi / 2 / n_theta) * (2 * math.pi / n_phi)
    return dirs.reshape(-1, 3), weights.ravel()


@pytest.mark.parametrize(
    "material, wo",
    [
        (DIFFUSE, UP),
        (DIFFUSE, normalize(vec((1.0, 0.0, 1.0)))),
        (PHONG, UP),
        (PHONG, normalize(vec((0.3, 0.2, 1.0)))),
    ],
)
def test_pdf_integrates_to_at_most_one(material: Material, wo: np.ndarray) -> None:
    dirs, weights = _hemisphere_grid()
    total = sum(bsdf_pdf(material, d, wo, UP) * w for d, w in zip(dirs, weights))
    if material.kind == "diffuse" or float(wo @ UP) == 1.0:
        assert total == pytest.approx(1.0, abs=5e-3)
    else:
        assert total <= 1.0 + 5e-3


@pytest.mark.parametrize("material", [DIFFUSE, PHONG])
def test_reciprocity(material: Material) -> None:
    rng = substream(2, 0)
    for _ in range(50):
        a = normalize(rng.normal(size=3) * (1, 1, 0) + UP)
        b = normalize(rng.normal(size=3) * (1, 1, 0) + UP)
        assert np.allclose(bsdf_eval(material, a, b, UP), bsdf_eval(material, b, a, UP))


def test_diffuse_value() -> None:
    wi = normalize(vec((0.2, 0.1, 1.0)))
    assert np.allclose(bsdf_eval(DIFFUSE, wi, UP, UP), 0.5 / math.pi)
    assert bsdf_pdf(DIFFUSE, wi, UP, UP) == pytest.approx(float(wi @ UP) / math.pi)


def test_opposite_sides_do_not_scatter() -> None:
    below = vec((0.0, 0.0, -1.0))
    assert not bsdf_eval(DIFFUSE, below, UP, UP).any()
    assert bsdf_pdf(DIFFUSE, below, UP, UP) == 0.0


def test_normal_is_oriented_towards_wo() -> None:
    wi = normalize(vec((0.1, 0.0, -1.0)))
    wo = vec((0.0, 0.0, -1.0))
    assert np.allclose(bsdf_eval(DIFFUSE, wi, wo, UP), 0.5 / math.pi)


@pytest.mark.parametrize("material", [MIRROR, GLASS])
def test_delta_pdf_query_raises(material: Material) -> None:
    with pytest.raises(DeltaQueryError):
        bsdf_pdf(material, UP, UP, UP)
    assert not bsdf_eval(material, UP, UP, UP).any()


def test_mirror_reflects() -> None:
    wo = normalize(vec((1.0, 0.0, 1.0)))
    s = sample_direction(MIRROR, wo, UP, (0.5, 0.5, 0.5))
    assert s is not None and s.is_specular
    assert s.pdf == DELTA_PDF
    assert np.allclose(s.wi, normalize(vec((-1.0, 0.0, 1.0))))
    assert np.allclose(throughput_factor(s, UP), 0.9)


def test_glass_lobes_carry_albedo() -> None:
    wo = normalize(vec((0.3, 0.0, 1.0)))
    reflected = sample_direction(GLASS, wo, UP, (0.5, 0.5, 0.0))
    refracted = sample_direction(GLASS, wo, UP, (0.5, 0.5, 0.999))
    assert reflected is not None and refracted is not None
    assert float(reflected.wi @ UP) > 0.0
    assert float(refracted.wi @ UP) < 0.0
    assert np.allclose(throughput_factor(reflected, UP), 1.0)
    assert np.allclose(throughput_factor(refracted, UP), 1.0)


def test_glass_total_internal_reflection() -> None:
    wo = normalize(vec((1.0, 0.0, 0.2)))
    s = sample_direction(GLASS, wo, UP, (0.5, 0.5, 0.999), front_face=False)
    assert s is not None
    assert float(s.wi @ UP) > 0.0
    assert s.pdf == DELTA_PDF


def test_sampled_pdf_matches_query() -> None:
    rng = substream(4, 0)
    wo = normalize(vec((0.2, 0.1, 1.0)))
    for material in (DIFFUSE, PHONG):
        for _ in range(100):
            s = bsdf_sample(material, wo, UP, rng)
            if s is None:
                continue
            assert s.pdf == pytest.approx(bsdf_pdf(material, s.wi, wo, UP))
            assert np.allclose(s.value, bsdf_eval(material, s.wi, wo, UP))


@pytest.mark.slow
def test_diffuse_sampling_chi_square() -> None:
    """Binned cos(theta)^2 of cosine-weighted samples is uniform on [0, 1]."""

    rng = substream(9, 0)
    bins = 20
    counts = np.zeros(bins)
    n = 20_000
    for _ in range(n):
        s = bsdf_sample(DIFFUSE, UP, UP, rng)
        assert s is not None
        c2 = float(s.wi @ UP) ** 2
        counts[min(int(c2 * bins), bins - 1)] += 1
    expected = n / bins
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert chi2.sf(stat, bins - 1) > 1e-3


@pytest.mark.slow
def test_phong_sampling_chi_square() -> None:
    """16 x 32 (theta, phi) histogram of Phong samples against the pdf integrated per bin."""

    wo = normalize(vec((0.3, 0.2, 1.0)))
    n_theta, n_phi, n = 16, 32, 100_000
    rng = substream(13, 0)
    counts = np.zeros((n_theta, n_phi))
    for _ in range(n):
        s = bsdf_sample(PHONG, wo, UP, rng)
        if s is None:
            continue
        theta = math.acos(min(1.0, float(s.wi @ UP)))
        phi = math.atan2(float(s.wi[1]), float(s.wi[0])) % (2 * math.pi)
        i = min(int(theta / (math.pi / 2) * n_theta), n_theta - 1)
        j = min(int(phi / (2 * math.pi) * n_phi), n_phi - 1)
        counts[i, j] += 1

    sub = 8
    dirs, weights = _hemisphere_grid(n_theta * sub, n_phi * sub)
    density = np.array([bsdf_pdf(PHONG, d, wo, UP) for d in dirs]) * weights
    mass = density.reshape(n_theta, sub, n_phi, sub).sum(axis=(1, 3))
    kept = counts.sum()
    # samples below the horizon come back as None
    assert 1.0 - kept / n == pytest.approx(1.0 - mass.sum(), abs=5e-3)

    expected = kept * mass / mass.sum()
    large = expected >= 5.0
    observed = np.append(counts[large], counts[~large].sum())
    predicted = np.append(expected[large], expected[~large].sum())
    stat = float(((observed - predicted) ** 2 / predicted).sum())
    assert large.sum() > 50
    assert chi2.sf(stat, len(observed) - 1) > 1e-3


@pytest.mark.parametrize("degrees", [0.0, 30.0, 60.0, 85.0])
def test_phong_albedo_is_bounded_by_rho(degrees: float) -> None:
    a = math.radians(degrees)
    wo = vec((math.sin(a), 0.0, math.cos(a)))
    dirs, weights = _hemisphere_grid()
    albedo = sum(
        float(bsdf_eval(PHONG, d, wo, UP)[0]) * float(d @ UP) * w for d, w in zip(dirs, weights)
    )
    rho = PHONG.albedo[0]
    assert albedo <= rho + 5e-3
    if degrees == 0.0:
        assert albedo == pytest.approx(rho, abs=5e-3)
    else:
        assert albedo < rho


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "velvet", "albedo": (0.5, 0.5, 0.5)},
        {"kind": "diffuse", "albedo": (1.0, 0.5, 0.5)},
        {"kind": "diffuse", "albedo": (1.2, 0.5, 0.5)},
        {"kind": "phong", "albedo": (0.5, 0.5, 0.5), "exponent": 0.5},
        {"kind": "glass", "albedo": (0.5, 0.5, 0.5), "ior": 1.0},
        {"kind": "diffuse", "albedo": (0.5, 0.5, 0.5), "emission": (-1.0, 0.0, 0.0)},
    ],
)
def test_invalid_materials(kwargs: dict) -> None:
    with pytest.raises(ParameterError):
        Material("x", **kwargs)
